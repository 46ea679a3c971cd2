//! Parametric-bootstrap confidence intervals and p-values for the fixed
//! effects of a fitted random-intercept model.
//!
//! Each replicate simulates a fresh response from the fitted model
//! (group intercepts from N(0, tau00), residuals from N(0, sigma2)),
//! refits, and records the coefficient vector. Replicates draw from
//! independently seeded generators indexed by replicate number, so
//! parallel and serial runs produce bit-identical output.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use super::design::DesignMatrix;
use super::reml::{fit_reml_opts, FitOptions, ModelFit};
use crate::error::{Error, Result};

/// Maximum share of non-converging replicates tolerated.
const MAX_DROP_SHARE: f64 = 0.10;

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapResult {
    pub coef_names: Vec<String>,
    pub estimate: Vec<f64>,
    /// Percentile 95% interval bounds per coefficient.
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    /// Centered-percentile two-sided p-values per coefficient.
    pub p_values: Vec<f64>,
    pub n_replicates: usize,
    pub n_dropped: usize,
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn replicate_rng(seed: u64, replicate: usize) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix64(seed ^ (replicate as u64).wrapping_mul(0xA24BAED4963EE407)))
}

/// Type-7 quantile (linear interpolation) on a sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

pub fn parametric_bootstrap(
    fit: &ModelFit,
    design: &DesignMatrix,
    n_replicates: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if n_replicates < 100 {
        return Err(Error::invalid(
            "parametric_bootstrap: need at least 100 replicates",
        ));
    }
    let beta = DVector::from_column_slice(&fit.beta);
    let fixed_part = &design.x * &beta;
    let sigma = fit.sigma2.sqrt();
    let tau = fit.tau00.sqrt();
    let opts = FitOptions::default();

    let replicates: Vec<Option<Vec<f64>>> = (0..n_replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let group_noise = Normal::new(0.0, tau.max(0.0)).ok();
            let resid_noise = Normal::new(0.0, sigma).ok()?;
            let u: Vec<f64> = (0..design.n_groups())
                .map(|_| match &group_noise {
                    Some(d) if tau > 0.0 => d.sample(&mut rng),
                    _ => 0.0,
                })
                .collect();
            let mut sim = design.clone();
            sim.y = DVector::from_iterator(
                design.n_obs(),
                (0..design.n_obs()).map(|i| {
                    fixed_part[i] + u[design.group_idx[i]] + resid_noise.sample(&mut rng)
                }),
            );
            fit_reml_opts(&sim, &opts).ok().map(|f| f.beta)
        })
        .collect();

    let kept: Vec<&Vec<f64>> = replicates.iter().flatten().collect();
    let n_dropped = n_replicates - kept.len();
    if (n_dropped as f64) > MAX_DROP_SHARE * n_replicates as f64 {
        return Err(Error::model(format!(
            "parametric_bootstrap: {n_dropped}/{n_replicates} replicates failed to converge"
        )));
    }

    let p = fit.beta.len();
    let mut ci_lower = Vec::with_capacity(p);
    let mut ci_upper = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for j in 0..p {
        let mut draws: Vec<f64> = kept.iter().map(|b| b[j]).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ci_lower.push(quantile_sorted(&draws, 0.025));
        ci_upper.push(quantile_sorted(&draws, 0.975));

        let est = fit.beta[j];
        let total = draws.len() as f64;
        let ge = draws.iter().filter(|&&d| d - est >= est).count() as f64;
        let le = draws.iter().filter(|&&d| d - est <= est).count() as f64;
        p_values.push((2.0 * (ge.min(le) / total)).min(1.0));
    }

    Ok(BootstrapResult {
        coef_names: fit.coef_names.clone(),
        estimate: fit.beta.clone(),
        ci_lower,
        ci_upper,
        p_values,
        n_replicates: kept.len(),
        n_dropped,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;
    use crate::lmm::reml::fit_reml;

    fn toy_design() -> DesignMatrix {
        // 6 groups x 4 observations, one numeric covariate with effect 1.
        let mut rng = replicate_rng(7, 0);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let n = 24;
        let mut x = DMatrix::zeros(n, 2);
        let mut y = DVector::zeros(n);
        let mut group_idx = Vec::new();
        for i in 0..n {
            let g = i / 4;
            let xv = (i % 4) as f64 - 1.5;
            x[(i, 0)] = 1.0;
            x[(i, 1)] = xv;
            let u = (g as f64 - 2.5) * 0.3;
            y[i] = 0.5 + 1.0 * xv + u + noise.sample(&mut rng);
            group_idx.push(g);
        }
        DesignMatrix {
            y,
            x,
            col_names: vec!["(Intercept)".into(), "x".into()],
            terms: vec![],
            group_idx,
            group_levels: (0..6).map(|g| format!("g{g}")).collect(),
            n_dropped: 0,
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let design = toy_design();
        let fit = fit_reml(&design).unwrap();
        let a = parametric_bootstrap(&fit, &design, 100, 99).unwrap();
        let b = parametric_bootstrap(&fit, &design, 100, 99).unwrap();
        assert_eq!(a.ci_lower, b.ci_lower);
        assert_eq!(a.ci_upper, b.ci_upper);
        assert_eq!(a.p_values, b.p_values);
    }

    #[test]
    fn strong_effect_ci_excludes_zero() {
        let design = toy_design();
        let fit = fit_reml(&design).unwrap();
        let boot = parametric_bootstrap(&fit, &design, 200, 3).unwrap();
        // slope coefficient (index 1) was planted at 1.0 with sd 0.5 noise
        assert!(boot.ci_lower[1] > 0.0);
        assert!(boot.p_values[1] < 0.05);
    }

    #[test]
    fn too_few_replicates_is_an_error() {
        let design = toy_design();
        let fit = fit_reml(&design).unwrap();
        assert!(parametric_bootstrap(&fit, &design, 50, 1).is_err());
    }
}
