//! Model fit reports: a machine-readable JSON document and a Markdown
//! coefficient table with significance stars.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lmm::{BootstrapResult, GvifEntry, ModelFit, ModelSpec};

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub formula: String,
    pub coefficients: Vec<CoefficientRow>,
    pub sigma2: f64,
    pub tau00: f64,
    pub icc: f64,
    pub r2_marginal: f64,
    pub r2_conditional: f64,
    pub n_obs: usize,
    pub n_groups: usize,
    pub converged: bool,
    pub boundary: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap_replicates: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub collinearity: Vec<GvifEntry>,
}

impl FitReport {
    pub fn new(
        spec: &ModelSpec,
        fit: &ModelFit,
        bootstrap: Option<&BootstrapResult>,
        collinearity: Vec<GvifEntry>,
    ) -> Result<Self> {
        if let Some(b) = bootstrap {
            if b.coef_names != fit.coef_names {
                return Err(Error::invalid(
                    "bootstrap and fit disagree on coefficient names",
                ));
            }
        }
        let coefficients = fit
            .coef_names
            .iter()
            .enumerate()
            .map(|(i, name)| CoefficientRow {
                name: name.clone(),
                estimate: fit.beta[i],
                ci_lower: bootstrap.map(|b| b.ci_lower[i]),
                ci_upper: bootstrap.map(|b| b.ci_upper[i]),
                p_value: bootstrap.map(|b| b.p_values[i]),
            })
            .collect();
        Ok(FitReport {
            formula: format!("{} ~ ..., group = {}", spec.response, spec.grouping),
            coefficients,
            sigma2: fit.sigma2,
            tau00: fit.tau00,
            icc: fit.icc,
            r2_marginal: fit.r2_marginal,
            r2_conditional: fit.r2_conditional,
            n_obs: fit.n_obs,
            n_groups: fit.n_groups,
            converged: fit.converged,
            boundary: fit.boundary,
            bootstrap_replicates: bootstrap.map(|b| b.n_replicates),
            collinearity,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::model(format!("report: {e}")))
    }

    pub fn write_markdown<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "## {}", self.formula)?;
        writeln!(w)?;
        writeln!(w, "| Coefficient | Estimate | 95% CI | p |")?;
        writeln!(w, "|---|---|---|---|")?;
        for c in &self.coefficients {
            let ci = match (c.ci_lower, c.ci_upper) {
                (Some(lo), Some(hi)) => format!("[{lo:.3}, {hi:.3}]"),
                _ => "-".to_string(),
            };
            let p = match c.p_value {
                Some(p) => format!("{p:.4}{}", stars(p)),
                None => "-".to_string(),
            };
            writeln!(w, "| {} | {:.3} | {} | {} |", c.name, c.estimate, ci, p)?;
        }
        writeln!(w)?;
        writeln!(
            w,
            "sigma2 = {:.4}, tau00 = {:.4}, ICC = {:.3}",
            self.sigma2, self.tau00, self.icc
        )?;
        writeln!(
            w,
            "R2 (marginal) = {:.3}, R2 (conditional) = {:.3}",
            self.r2_marginal, self.r2_conditional
        )?;
        writeln!(
            w,
            "observations = {}, groups = {}",
            self.n_obs, self.n_groups
        )?;
        if self.boundary {
            writeln!(w, "note: tau00 estimated at the zero boundary")?;
        }
        if !self.collinearity.is_empty() {
            writeln!(w)?;
            writeln!(w, "| Term | df | GVIF | GVIF^(1/(2 df)) |")?;
            writeln!(w, "|---|---|---|---|")?;
            for g in &self.collinearity {
                writeln!(
                    w,
                    "| {} | {} | {:.3} | {:.3}{} |",
                    g.term,
                    g.df,
                    g.gvif,
                    g.gvif_scaled,
                    if g.flagged { " (high)" } else { "" }
                )?;
            }
        }
        Ok(())
    }
}

/// Conventional significance markers.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        " ***"
    } else if p < 0.01 {
        " **"
    } else if p < 0.05 {
        " *"
    } else {
        ""
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_fit() -> ModelFit {
        ModelFit {
            beta: vec![1.5, -0.2],
            coef_names: vec!["(Intercept)".to_string(), "x".to_string()],
            sigma2: 0.5,
            tau00: 0.25,
            icc: 1.0 / 3.0,
            intercepts: vec![("g1".to_string(), 0.1), ("g2".to_string(), -0.1)],
            r2_marginal: 0.1,
            r2_conditional: 0.4,
            reml_loglik: -10.0,
            n_obs: 20,
            n_groups: 2,
            converged: true,
            boundary: false,
        }
    }

    #[test]
    fn markdown_includes_coefficients_and_variances() {
        let spec: ModelSpec = "y ~ x, group = g".parse().unwrap();
        let report = FitReport::new(&spec, &toy_fit(), None, Vec::new()).unwrap();
        let mut buf = Vec::new();
        report.write_markdown(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("(Intercept)"));
        assert!(text.contains("ICC = 0.333"));
        assert!(text.contains("groups = 2"));
    }

    #[test]
    fn json_round_trips() {
        let spec: ModelSpec = "y ~ x, group = g".parse().unwrap();
        let report = FitReport::new(&spec, &toy_fit(), None, Vec::new()).unwrap();
        let json = report.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["n_obs"], 20);
        assert_eq!(value["coefficients"][1]["name"], "x");
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.0005), " ***");
        assert_eq!(stars(0.005), " **");
        assert_eq!(stars(0.03), " *");
        assert_eq!(stars(0.2), "");
    }
}
