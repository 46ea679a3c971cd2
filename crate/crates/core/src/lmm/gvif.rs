//! Generalized variance inflation factors (Fox-Monette): per-term
//! determinant ratios of the predictor correlation matrix.

use nalgebra::DMatrix;
use serde::Serialize;

use super::design::DesignMatrix;
use crate::error::{Error, Result};

/// Default flag threshold on GVIF^(1/(2 df)), sqrt(5).
pub const DEFAULT_GVIF_THRESHOLD: f64 = 2.23606797749979;

#[derive(Debug, Clone, Serialize)]
pub struct GvifEntry {
    pub term: String,
    pub df: usize,
    pub gvif: f64,
    /// GVIF^(1/(2 df)), comparable across terms of different df.
    pub gvif_scaled: f64,
    pub flagged: bool,
}

fn correlation_matrix(design: &DesignMatrix, cols: &[usize]) -> Result<DMatrix<f64>> {
    let n = design.n_obs() as f64;
    let k = cols.len();
    let mut centered = DMatrix::zeros(design.n_obs(), k);
    for (c, &j) in cols.iter().enumerate() {
        let col = design.x.column(j);
        let mean = col.sum() / n;
        let mut v = col.into_owned();
        v.add_scalar_mut(-mean);
        let norm = v.norm();
        if norm <= 1e-12 {
            return Err(Error::model(format!(
                "gvif: predictor {:?} has zero variance",
                design.col_names[j]
            )));
        }
        centered.set_column(c, &(v / norm));
    }
    Ok(centered.transpose() * centered)
}

/// GVIF per non-intercept term. `threshold` flags terms whose scaled GVIF
/// exceeds it.
pub fn gvif(design: &DesignMatrix, threshold: f64) -> Result<Vec<GvifEntry>> {
    if design.terms.len() < 2 {
        return Err(Error::invalid(
            "gvif: need at least 2 non-intercept terms",
        ));
    }
    let all_cols: Vec<usize> = design
        .terms
        .iter()
        .flat_map(|t| t.columns.clone())
        .collect();
    let r_all = correlation_matrix(design, &all_cols)?;
    let det_all = r_all.determinant();
    if det_all.abs() < 1e-12 {
        return Err(Error::model(
            "gvif: singular predictor correlation matrix (exactly collinear predictors)",
        ));
    }

    let mut entries = Vec::new();
    for term in &design.terms {
        let term_cols: Vec<usize> = term.columns.clone().collect();
        let other_cols: Vec<usize> = all_cols
            .iter()
            .copied()
            .filter(|c| !term.columns.contains(c))
            .collect();
        let det_term = correlation_matrix(design, &term_cols)?.determinant();
        let det_other = correlation_matrix(design, &other_cols)?.determinant();
        let df = term_cols.len();
        let gvif = det_term * det_other / det_all;
        let gvif_scaled = gvif.powf(1.0 / (2.0 * df as f64));
        entries.push(GvifEntry {
            term: term.term.clone(),
            df,
            gvif,
            gvif_scaled,
            flagged: gvif_scaled > threshold,
        });
    }
    Ok(entries)
}
