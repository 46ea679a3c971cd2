//! Nonparametric tests, correlation, standardization, and trend smoothing.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Largest n for which the Wilcoxon test enumerates all 2^n sign patterns.
pub const WILCOXON_EXACT_MAX_N: usize = 20;
/// Exact Mann-Whitney branch is used while n_x * n_y stays at or below this.
pub const MANN_WHITNEY_EXACT_MAX_PRODUCT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    /// Sample size(s): one entry for paired tests, two for two-sample tests.
    pub n: Vec<usize>,
    /// Set when the data carry no information (all differences zero,
    /// zero-variance pooled sample).
    pub degenerate: bool,
}

/// Midranks (average rank for ties), 1-based.
fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Sum of (t^3 - t) over tie groups.
fn tie_term(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

fn normal_two_sided(z: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    (2.0 * normal.cdf(-z.abs())).min(1.0)
}

/// Two-sided Wilcoxon signed-rank test on paired observations.
///
/// Zero differences are dropped before ranking; ties in |d| take midranks.
/// For n <= 20 the p-value comes from enumerating all 2^n sign patterns of
/// the observed ranks (exact conditional on the ranks), otherwise from the
/// normal approximation with tie correction and continuity correction.
pub fn wilcoxon_signed_rank(paired: &[(f64, f64)]) -> Result<TestResult> {
    wilcoxon_signed_rank_method(paired, None)
}

/// As [`wilcoxon_signed_rank`], with the branch forced when `method` is
/// given (used to cross-check the two branches against each other).
pub fn wilcoxon_signed_rank_method(
    paired: &[(f64, f64)],
    method: Option<TestMethod>,
) -> Result<TestResult> {
    if paired.is_empty() {
        return Err(Error::invalid("wilcoxon_signed_rank: no pairs"));
    }
    let diffs: Vec<f64> = paired
        .iter()
        .map(|(before, after)| after - before)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            method: TestMethod::Exact,
            n: vec![paired.len()],
            degenerate: true,
        });
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    let exact = match method {
        Some(TestMethod::Exact) => true,
        Some(TestMethod::NormalApprox) => false,
        None => n <= WILCOXON_EXACT_MAX_N,
    };
    if exact {
        let total = 1u64 << n;
        let mut ge = 0u64;
        let mut le = 0u64;
        for mask in 0..total {
            let mut w = 0.0;
            for (i, r) in ranks.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    w += r;
                }
            }
            if w >= w_plus - 1e-9 {
                ge += 1;
            }
            if w <= w_plus + 1e-9 {
                le += 1;
            }
        }
        let tail = (ge.min(le) as f64) / total as f64;
        Ok(TestResult {
            statistic: w_plus,
            p_value: (2.0 * tail).min(1.0),
            method: TestMethod::Exact,
            n: vec![n],
            degenerate: false,
        })
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&abs) / 48.0;
        if var <= 0.0 {
            return Ok(TestResult {
                statistic: w_plus,
                p_value: 1.0,
                method: TestMethod::NormalApprox,
                n: vec![n],
                degenerate: true,
            });
        }
        let delta = w_plus - mean;
        let z = if delta == 0.0 {
            0.0
        } else {
            (delta - 0.5 * delta.signum()) / var.sqrt()
        };
        Ok(TestResult {
            statistic: w_plus,
            p_value: normal_two_sided(z),
            method: TestMethod::NormalApprox,
            n: vec![n],
            degenerate: false,
        })
    }
}

/// Exact tie-free null distribution of the Mann-Whitney U statistic:
/// counts of arrangements per U value, for sample sizes m and n.
fn mann_whitney_counts(m: usize, n: usize) -> Vec<f64> {
    // c[i][j][u] = c[i-1][j][u-j] + c[i][j-1][u]; roll over i and j.
    let max_u = m * n;
    let mut table = vec![vec![0.0_f64; max_u + 1]; n + 1];
    for row in table.iter_mut() {
        row[0] = 1.0; // i = 0
    }
    for _ in 1..=m {
        let mut next = vec![vec![0.0_f64; max_u + 1]; n + 1];
        for j in 0..=n {
            for u in 0..=max_u {
                let mut c = if u >= j { table[j][u - j] } else { 0.0 };
                if j > 0 {
                    c += next[j - 1][u];
                }
                next[j][u] = c;
            }
        }
        table = next;
    }
    table[n].clone()
}

/// Two-sided Mann-Whitney U test.
///
/// Reports U = min(U_x, U_y). The exact branch (tie-free pooled data with
/// n_x * n_y <= 400) uses the full enumeration distribution; ties or larger
/// samples fall back to the normal approximation with tie correction.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<TestResult> {
    mann_whitney_u_method(x, y, None)
}

/// As [`mann_whitney_u`], with the branch forced when `method` is given.
/// Forcing the exact branch on tied data is rejected.
pub fn mann_whitney_u_method(
    x: &[f64],
    y: &[f64],
    method: Option<TestMethod>,
) -> Result<TestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("mann_whitney_u: empty sample"));
    }
    let (m, n) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_x: f64 = ranks[..m].iter().sum();
    let u_x = rank_sum_x - (m * (m + 1)) as f64 / 2.0;
    let u_y = (m * n) as f64 - u_x;
    let u = u_x.min(u_y);
    let has_ties = tie_term(&pooled) > 0.0;

    let exact = match method {
        Some(TestMethod::Exact) => {
            if has_ties {
                return Err(Error::invalid(
                    "mann_whitney_u: exact branch requires tie-free data",
                ));
            }
            true
        }
        Some(TestMethod::NormalApprox) => false,
        None => !has_ties && m * n <= MANN_WHITNEY_EXACT_MAX_PRODUCT,
    };
    if exact {
        let counts = mann_whitney_counts(m, n);
        let total: f64 = counts.iter().sum();
        let tail: f64 = counts
            .iter()
            .take(u.round() as usize + 1)
            .sum::<f64>()
            / total;
        Ok(TestResult {
            statistic: u,
            p_value: (2.0 * tail).min(1.0),
            method: TestMethod::Exact,
            n: vec![m, n],
            degenerate: false,
        })
    } else {
        let (mf, nf) = (m as f64, n as f64);
        let big_n = mf + nf;
        let mean = mf * nf / 2.0;
        let var = mf * nf / 12.0 * (big_n + 1.0 - tie_term(&pooled) / (big_n * (big_n - 1.0)));
        if var <= 0.0 {
            return Ok(TestResult {
                statistic: u,
                p_value: 1.0,
                method: TestMethod::NormalApprox,
                n: vec![m, n],
                degenerate: true,
            });
        }
        let delta = u - mean;
        let z = if delta == 0.0 {
            0.0
        } else {
            (delta - 0.5 * delta.signum()) / var.sqrt()
        };
        Ok(TestResult {
            statistic: u,
            p_value: normal_two_sided(z),
            method: TestMethod::NormalApprox,
            n: vec![m, n],
            degenerate: false,
        })
    }
}

/// Pearson correlation with a two-sided t-test p-value (n - 2 df).
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::invalid("pearson_r: length mismatch"));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid("pearson_r: need at least 3 observations"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("pearson_r: zero variance"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        (2.0 * dist.cdf(-t.abs())).min(1.0)
    };
    Ok(TestResult {
        statistic: r,
        p_value: p,
        method: TestMethod::Exact,
        n: vec![n],
        degenerate: false,
    })
}

/// Spearman rank correlation (Pearson on midranks).
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::invalid("spearman_rho: length mismatch"));
    }
    pearson_r(&midranks(x), &midranks(y))
}

/// Standardize to mean 0 and sample standard deviation 1.
pub fn zscore(column: &[f64]) -> Result<Vec<f64>> {
    if column.len() < 2 {
        return Err(Error::invalid("zscore: need at least 2 values"));
    }
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(Error::invalid("zscore: constant column"));
    }
    let sd = var.sqrt();
    Ok(column.iter().map(|v| (v - mean) / sd).collect())
}

/// Trailing-window rolling mean; the first window-1 positions are absent.
pub fn rolling_mean(series: &[f64], window: usize) -> Result<Vec<Option<f64>>> {
    if window == 0 {
        return Err(Error::invalid("rolling_mean: window must be >= 1"));
    }
    let mut out = vec![None; series.len()];
    let mut sum = 0.0;
    for (i, v) in series.iter().enumerate() {
        sum += v;
        if i + 1 >= window {
            out[i] = Some(sum / window as f64);
            sum -= series[i + 1 - window];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wilcoxon_three_positive_differences() {
        // differences {+1, +2, +3}: W+ = 6, exact two-sided p = 2/8
        let pairs = [(0.0, 1.0), (0.0, 2.0), (0.0, 3.0)];
        let r = wilcoxon_signed_rank(&pairs).unwrap();
        assert_eq!(r.statistic, 6.0);
        assert!((r.p_value - 0.25).abs() < 1e-12);
        assert_eq!(r.method, TestMethod::Exact);
    }

    #[test]
    fn wilcoxon_all_zero_differences_is_degenerate() {
        let pairs = [(1.0, 1.0), (2.0, 2.0)];
        let r = wilcoxon_signed_rank(&pairs).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn wilcoxon_antisymmetric_differences() {
        let pairs = [(0.0, 1.0), (0.0, -1.0)];
        let r = wilcoxon_signed_rank(&pairs).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn wilcoxon_switches_to_normal_for_large_n() {
        let pairs: Vec<(f64, f64)> = (1..=25).map(|i| (0.0, i as f64)).collect();
        let r = wilcoxon_signed_rank(&pairs).unwrap();
        assert_eq!(r.method, TestMethod::NormalApprox);
        assert!(r.p_value < 0.001);
    }

    #[test]
    fn mann_whitney_fully_separated_small_samples() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.method, TestMethod::Exact);

        let r3 = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r3.statistic, 0.0);
    }

    #[test]
    fn mann_whitney_identical_samples() {
        let x = [1.0, 2.0];
        let r = mann_whitney_u(&x, &x).unwrap();
        assert_eq!(r.statistic, 2.0); // n^2 / 2
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.method, TestMethod::NormalApprox); // ties force approximation
    }

    #[test]
    fn mann_whitney_empty_sample_is_an_error() {
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn pearson_perfect_lines() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y_up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let y_down: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &y_up).unwrap().statistic - 1.0).abs() < 1e-12);
        assert!((pearson_r(&x, &y_down).unwrap().statistic + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_hand_computed_half() {
        let r = pearson_r(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pearson_zero_variance_is_an_error() {
        assert!(pearson_r(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn zscore_hand_example_and_idempotence() {
        let z = zscore(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(z, vec![-1.0, 0.0, 1.0]);
        let zz = zscore(&z).unwrap();
        for (a, b) in z.iter().zip(&zz) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(zscore(&[5.0, 5.0]).is_err());
    }

    #[test]
    fn rolling_mean_behaviour() {
        let series: Vec<f64> = (1..=7).map(|i| i as f64).collect();
        let smoothed = rolling_mean(&series, 7).unwrap();
        assert_eq!(smoothed[..6], vec![None; 6][..]);
        assert_eq!(smoothed[6], Some(4.0));
        // window 1 is the identity
        let id = rolling_mean(&series, 1).unwrap();
        assert_eq!(id, series.iter().map(|&v| Some(v)).collect::<Vec<_>>());
        // window longer than the series: all absent
        assert!(rolling_mean(&[1.0], 5).unwrap().iter().all(|v| v.is_none()));
    }

    #[test]
    fn spearman_is_one_for_monotone_data() {
        let x = [1.0, 5.0, 9.0, 12.0];
        let y = [2.0, 20.0, 21.0, 300.0];
        assert!((spearman_rho(&x, &y).unwrap().statistic - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn wilcoxon_invariant_under_positive_scaling(
            diffs in proptest::collection::vec(-10.0f64..10.0, 3..12),
            scale in 0.1f64..100.0,
        ) {
            prop_assume!(diffs.iter().any(|d| *d != 0.0));
            let pairs: Vec<(f64, f64)> = diffs.iter().map(|&d| (0.0, d)).collect();
            let scaled: Vec<(f64, f64)> = diffs.iter().map(|&d| (0.0, d * scale)).collect();
            let a = wilcoxon_signed_rank(&pairs).unwrap();
            let b = wilcoxon_signed_rank(&scaled).unwrap();
            prop_assert_eq!(a.statistic, b.statistic);
            prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
        }

        #[test]
        fn mann_whitney_invariant_under_monotone_transform(
            x in proptest::collection::vec(-50.0f64..50.0, 2..10),
            y in proptest::collection::vec(-50.0f64..50.0, 2..10),
        ) {
            let f = |v: f64| (v / 10.0).exp(); // strictly increasing
            let fx: Vec<f64> = x.iter().map(|&v| f(v)).collect();
            let fy: Vec<f64> = y.iter().map(|&v| f(v)).collect();
            let a = mann_whitney_u(&x, &y).unwrap();
            let b = mann_whitney_u(&fx, &fy).unwrap();
            prop_assert_eq!(a.statistic, b.statistic);
            prop_assert!((a.p_value - b.p_value).abs() < 1e-9);
        }

        #[test]
        fn pearson_sign_of_linear_transform(
            x in proptest::collection::vec(-100.0f64..100.0, 4..20),
            a in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
            b in -10.0f64..10.0,
        ) {
            let sxx: f64 = {
                let m = x.iter().sum::<f64>() / x.len() as f64;
                x.iter().map(|v| (v - m) * (v - m)).sum()
            };
            prop_assume!(sxx > 1e-9);
            let y: Vec<f64> = x.iter().map(|&v| a * v + b).collect();
            let r = pearson_r(&x, &y).unwrap().statistic;
            prop_assert!((r - a.signum()).abs() < 1e-9);
        }

        #[test]
        fn zscore_output_is_standardized(
            x in proptest::collection::vec(-100.0f64..100.0, 3..30),
        ) {
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            prop_assume!(var > 1e-9);
            let z = zscore(&x).unwrap();
            let zm = z.iter().sum::<f64>() / n;
            let zv: f64 = z.iter().map(|v| (v - zm) * (v - zm)).sum::<f64>() / (n - 1.0);
            prop_assert!(zm.abs() < 1e-12);
            prop_assert!((zv - 1.0).abs() < 1e-12);
        }
    }
}
