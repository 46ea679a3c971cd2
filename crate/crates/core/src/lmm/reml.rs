//! REML estimation for the random-intercept model
//! `y = X beta + Z u + eps`, `u_j ~ N(0, tau00)`, `eps ~ N(0, sigma2)`.
//!
//! The variance ratio `theta = tau00 / sigma2` is the only free parameter:
//! beta is profiled out by generalized least squares at each theta and
//! sigma2 has a closed form. The profiled REML criterion is maximized by
//! golden-section search on log(theta), with the theta -> 0 boundary
//! handled as the OLS limit.
//!
//! With a single random intercept, (I + theta Z Z')^-1 is block diagonal:
//! within a group of size n_j it is I - theta/(1 + theta n_j) J, so all
//! weighted cross-products reduce to per-group column sums.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use super::design::DesignMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Search bounds for log(theta).
    pub log_theta_bounds: (f64, f64),
    /// Absolute tolerance on log(theta).
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            log_theta_bounds: (-12.0, 12.0),
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelFit {
    pub beta: Vec<f64>,
    pub coef_names: Vec<String>,
    /// Residual variance.
    pub sigma2: f64,
    /// Random-intercept variance.
    pub tau00: f64,
    pub icc: f64,
    /// BLUPs keyed by group level.
    pub intercepts: Vec<(String, f64)>,
    pub r2_marginal: f64,
    pub r2_conditional: f64,
    pub reml_loglik: f64,
    pub n_obs: usize,
    pub n_groups: usize,
    pub converged: bool,
    /// True when the optimum sat on the tau00 = 0 boundary (OLS limit).
    pub boundary: bool,
}

/// Per-group sufficient statistics reused across theta evaluations.
struct Profile<'a> {
    x: &'a DMatrix<f64>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    /// Per-group column sums of X.
    group_x_sums: Vec<DVector<f64>>,
    /// Per-group sums of y.
    group_y_sums: Vec<f64>,
    group_sizes: Vec<usize>,
    group_rows: Vec<Vec<usize>>,
    y: &'a DVector<f64>,
    n: usize,
    p: usize,
}

struct Evaluation {
    loglik: f64,
    beta: DVector<f64>,
    sigma2: f64,
}

impl<'a> Profile<'a> {
    fn new(design: &'a DesignMatrix) -> Self {
        let x = &design.x;
        let y = &design.y;
        let (n, p) = (x.nrows(), x.ncols());
        let group_rows = design.group_rows();
        let group_sizes: Vec<usize> = group_rows.iter().map(|r| r.len()).collect();
        let group_x_sums: Vec<DVector<f64>> = group_rows
            .iter()
            .map(|rows| {
                let mut s = DVector::zeros(p);
                for &i in rows {
                    s += x.row(i).transpose();
                }
                s
            })
            .collect();
        let group_y_sums: Vec<f64> = group_rows
            .iter()
            .map(|rows| rows.iter().map(|&i| y[i]).sum())
            .collect();
        Profile {
            x,
            xtx: x.transpose() * x,
            xty: x.transpose() * y,
            yty: y.dot(y),
            group_x_sums,
            group_y_sums,
            group_sizes,
            group_rows,
            y,
            n,
            p,
        }
    }

    /// Profiled REML log-likelihood at a given theta, with the profiled
    /// beta and sigma2.
    fn evaluate(&self, theta: f64) -> Result<Evaluation> {
        let mut xwx = self.xtx.clone();
        let mut xwy = self.xty.clone();
        let mut ywy = self.yty;
        let mut logdet_v = 0.0;
        for (j, &nj) in self.group_sizes.iter().enumerate() {
            let njf = nj as f64;
            let w = theta / (1.0 + theta * njf);
            let s = &self.group_x_sums[j];
            let t = self.group_y_sums[j];
            xwx.ger(-w, s, s, 1.0);
            xwy.axpy(-w * t, s, 1.0);
            ywy -= w * t * t;
            logdet_v += (1.0 + theta * njf).ln();
        }
        let chol = Cholesky::new(xwx.clone()).ok_or_else(|| {
            Error::model("fit_reml: weighted normal equations are not positive definite")
        })?;
        let beta = chol.solve(&xwy);
        let rss_w = (ywy - beta.dot(&xwy)).max(1e-300);
        let df = (self.n - self.p) as f64;
        let sigma2 = rss_w / df;
        let logdet_xwx: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let loglik = -0.5
            * (df * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0)
                + logdet_v
                + logdet_xwx);
        Ok(Evaluation {
            loglik,
            beta,
            sigma2,
        })
    }

    fn blups(&self, theta: f64, beta: &DVector<f64>) -> Vec<f64> {
        let fitted = self.x * beta;
        self.group_rows
            .iter()
            .enumerate()
            .map(|(j, rows)| {
                let resid_sum: f64 = rows.iter().map(|&i| self.y[i] - fitted[i]).sum();
                theta / (1.0 + theta * self.group_sizes[j] as f64) * resid_sum
            })
            .collect()
    }
}

/// Check X for full column rank; names (near-)collinear columns.
fn check_rank(design: &DesignMatrix) -> Result<()> {
    let x = &design.x;
    let p = x.ncols();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut collinear = Vec::new();
    for j in 0..p {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        let mut resid = col;
        for q in &basis {
            let proj = q.dot(&resid);
            resid.axpy(-proj, q, 1.0);
        }
        if resid.norm() <= 1e-8 * norm0.max(1.0) {
            collinear.push(design.col_names[j].clone());
        } else {
            let norm = resid.norm();
            basis.push(resid / norm);
        }
    }
    if collinear.is_empty() {
        Ok(())
    } else {
        Err(Error::model(format!(
            "design matrix is rank deficient; collinear columns: {}",
            collinear.join(", ")
        )))
    }
}

pub fn fit_reml(design: &DesignMatrix) -> Result<ModelFit> {
    fit_reml_opts(design, &FitOptions::default())
}

pub fn fit_reml_opts(design: &DesignMatrix, opts: &FitOptions) -> Result<ModelFit> {
    if design.n_groups() < 2 {
        return Err(Error::model("fit_reml: need at least 2 groups"));
    }
    if design.n_obs() <= design.x.ncols() {
        return Err(Error::model(
            "fit_reml: more coefficients than observations",
        ));
    }
    check_rank(design)?;
    let profile = Profile::new(design);

    // Golden-section maximization of the profiled criterion on log(theta).
    let (mut lo, mut hi) = opts.log_theta_bounds;
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let f = |log_theta: f64| -> Result<f64> {
        Ok(profile.evaluate(log_theta.exp())?.loglik)
    };
    let f_lo_bound = f(lo)?;
    let f_hi_bound = f(hi)?;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    while hi - lo > opts.tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b)?;
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a)?;
        }
    }
    let mut log_theta = 0.5 * (lo + hi);
    let mut best = f(log_theta)?;

    // Boundary handling: if an endpoint beats the interior optimum the
    // criterion is monotone over the bracket.
    let (lo_bound, hi_bound) = opts.log_theta_bounds;
    let mut boundary = false;
    let mut converged = true;
    if f_lo_bound >= best || log_theta - lo_bound <= 10.0 * opts.tol {
        boundary = true; // tau00 -> 0, OLS limit
    } else if f_hi_bound > best {
        // criterion increasing toward the upper bound; report the bound
        log_theta = hi_bound;
        best = f_hi_bound;
        converged = false;
    }
    let _ = best;

    let theta = if boundary { 0.0 } else { log_theta.exp() };
    let eval = profile.evaluate(theta)?;
    let sigma2 = eval.sigma2;
    let tau00 = theta * sigma2;
    let blups = profile.blups(theta, &eval.beta);
    let icc_value = tau00 / (tau00 + sigma2);

    // Nakagawa variance decomposition.
    let fitted = &design.x * &eval.beta;
    let mean_fit = fitted.iter().sum::<f64>() / fitted.len() as f64;
    let var_fixed = if fitted.len() > 1 {
        fitted.iter().map(|v| (v - mean_fit).powi(2)).sum::<f64>() / (fitted.len() as f64 - 1.0)
    } else {
        0.0
    };
    let total = var_fixed + tau00 + sigma2;

    Ok(ModelFit {
        beta: eval.beta.iter().copied().collect(),
        coef_names: design.col_names.clone(),
        sigma2,
        tau00,
        icc: icc_value,
        intercepts: design
            .group_levels
            .iter()
            .cloned()
            .zip(blups)
            .collect(),
        r2_marginal: var_fixed / total,
        r2_conditional: (var_fixed + tau00) / total,
        reml_loglik: eval.loglik,
        n_obs: design.n_obs(),
        n_groups: design.n_groups(),
        converged,
        boundary,
    })
}

/// Intraclass correlation from variance components.
pub fn icc(tau00: f64, sigma2: f64) -> f64 {
    tau00 / (tau00 + sigma2)
}

/// Nakagawa marginal and conditional R-squared.
pub fn r2_nakagawa(fit: &ModelFit) -> (f64, f64) {
    (fit.r2_marginal, fit.r2_conditional)
}

/// BLUPs keyed by group level.
pub fn extract_random_intercepts(fit: &ModelFit) -> &[(String, f64)] {
    &fit.intercepts
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::lmm::formula::ModelSpec;
    use crate::lmm::table::{Column, Table};
    use crate::lmm::build_design;

    /// Balanced one-way design: J groups of n observations each.
    fn one_way_design(groups: &[Vec<f64>]) -> DesignMatrix {
        let mut y = Vec::new();
        let mut g = Vec::new();
        for (j, values) in groups.iter().enumerate() {
            for &v in values {
                y.push(Some(v));
                g.push(Some(format!("g{j}")));
            }
        }
        let mut t = Table::new();
        t.push_numeric("y", y).unwrap();
        t.push("group", Column::Categorical(g)).unwrap();
        // Intercept-only model: reuse the group as a throwaway main effect
        // is wrong; instead parse a formula with just the intercept via a
        // constant... the formula language has no intercept-only form, so
        // build the design by hand.
        let spec: ModelSpec = "y ~ group, group = group".parse().unwrap();
        let full = build_design(&spec, &t, &HashMap::new()).unwrap();
        DesignMatrix {
            x: DMatrix::from_element(full.n_obs(), 1, 1.0),
            col_names: vec!["(Intercept)".into()],
            terms: vec![],
            ..full
        }
    }

    /// Closed-form ANOVA estimators on a balanced one-way layout.
    fn anova_oracle(groups: &[Vec<f64>]) -> (f64, f64, f64) {
        let j = groups.len() as f64;
        let n = groups[0].len() as f64;
        let grand: f64 = groups.iter().flatten().sum::<f64>() / (j * n);
        let msb = n / (j - 1.0)
            * groups
                .iter()
                .map(|g| {
                    let m = g.iter().sum::<f64>() / n;
                    (m - grand).powi(2)
                })
                .sum::<f64>();
        let msw = groups
            .iter()
            .flat_map(|g| {
                let m = g.iter().sum::<f64>() / n;
                g.iter().map(move |v| (v - m).powi(2))
            })
            .sum::<f64>()
            / (j * (n - 1.0));
        (grand, msw, ((msb - msw) / n).max(0.0))
    }

    #[test]
    fn matches_anova_closed_form_on_two_groups() {
        let groups = vec![vec![1.0, 1.2], vec![2.0, 2.2]];
        let design = one_way_design(&groups);
        let fit = fit_reml(&design).unwrap();
        assert!((fit.beta[0] - 1.6).abs() < 1e-6);
        assert!((fit.sigma2 - 0.02).abs() < 1e-6);
        assert!((fit.tau00 - 0.49).abs() < 1e-6);
        assert!(fit.converged);
    }

    #[test]
    fn boundary_collapses_to_ols() {
        // Groups with equal means: MSB < MSW, so tau00 = 0 and beta = OLS.
        let groups = vec![vec![1.0, 3.0], vec![2.0, 2.0]];
        let design = one_way_design(&groups);
        let fit = fit_reml(&design).unwrap();
        assert!(fit.boundary);
        assert_eq!(fit.tau00, 0.0);
        assert!((fit.beta[0] - 2.0).abs() < 1e-9);
        assert!(fit.intercepts.iter().all(|(_, u)| *u == 0.0));
    }

    #[test]
    fn duplicated_dataset_gives_identical_estimates() {
        let groups = vec![
            vec![1.0, 1.5, 0.8],
            vec![2.0, 2.4, 1.9],
            vec![0.5, 0.9, 0.6],
        ];
        let doubled: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| g.iter().chain(g.iter()).copied().collect())
            .collect();
        let fit1 = fit_reml(&one_way_design(&groups)).unwrap();
        let fit2 = fit_reml(&one_way_design(&doubled)).unwrap();
        assert!((fit1.beta[0] - fit2.beta[0]).abs() < 1e-6);
        // Variance components are not expected to be identical under row
        // duplication (REML degrees of freedom change); the point estimate
        // of the mean is.
        let (grand, msw, tau) = anova_oracle(&doubled);
        assert!((fit2.beta[0] - grand).abs() < 1e-6);
        assert!((fit2.sigma2 - msw).abs() < 1e-6);
        assert!((fit2.tau00 - tau).abs() < 1e-6);
    }

    #[test]
    fn blups_shrink_and_sum_to_zero_for_balanced_groups() {
        let groups = vec![vec![1.0, 1.2], vec![2.0, 2.2]];
        let fit = fit_reml(&one_way_design(&groups)).unwrap();
        let sum: f64 = fit.intercepts.iter().map(|(_, u)| u).sum();
        assert!(sum.abs() < 1e-9);
        // shrinkage: |u_j| below the raw group offset 0.5
        for (_, u) in &fit.intercepts {
            assert!(u.abs() < 0.5);
            assert!(u.abs() > 0.0);
        }
    }

    #[test]
    fn identical_groups_have_zero_blups() {
        let groups = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let fit = fit_reml(&one_way_design(&groups)).unwrap();
        assert!(fit.intercepts.iter().all(|(_, u)| u.abs() < 1e-12));
    }

    #[test]
    fn icc_formula() {
        assert!((icc(0.25, 0.74) - 0.2525).abs() < 5e-5);
        assert!((icc(0.61, 0.34) - 0.6421).abs() < 5e-5);
        assert_eq!(icc(0.0, 1.0), 0.0);
    }

    #[test]
    fn shifting_response_shifts_only_the_intercept() {
        let groups = vec![vec![1.0, 1.4, 0.9], vec![2.0, 2.1, 2.3]];
        let shifted: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| g.iter().map(|v| v + 10.0).collect())
            .collect();
        let f1 = fit_reml(&one_way_design(&groups)).unwrap();
        let f2 = fit_reml(&one_way_design(&shifted)).unwrap();
        // the REML surface is flat near the optimum, so the variance
        // components agree to optimizer precision rather than exactly
        assert!((f2.beta[0] - f1.beta[0] - 10.0).abs() < 1e-8);
        assert!((f1.sigma2 - f2.sigma2).abs() < 1e-6);
        assert!((f1.tau00 - f2.tau00).abs() < 1e-5);
    }

    #[test]
    fn rank_deficient_design_names_columns() {
        let groups = vec![vec![1.0, 1.2], vec![2.0, 2.2]];
        let base = one_way_design(&groups);
        let mut x = DMatrix::zeros(4, 2);
        x.column_mut(0).fill(1.0);
        x.column_mut(1).fill(1.0);
        let design = DesignMatrix {
            x,
            col_names: vec!["(Intercept)".into(), "copy".into()],
            ..base
        };
        let err = fit_reml(&design).unwrap_err();
        assert!(err.to_string().contains("copy"));
    }
}
