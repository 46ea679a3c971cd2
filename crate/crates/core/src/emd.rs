//! Earth mover's distance between segment-proportion histograms.
//!
//! The fast path exploits the 1-D structure: with unit ground distance
//! between adjacent segments the optimal transport cost is the sum of
//! absolute CDF differences. An exact minimum-cost transportation solver
//! over an arbitrary ground-distance matrix is kept alongside as an
//! independent cross-check.

use crate::error::{Error, Result};

/// Tolerance for "sums to 1" checks on proportion vectors.
pub const NORMALIZATION_TOL: f64 = 1e-9;

fn check_normalized(v: &[f64], name: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(format!("{name}: empty proportion vector")));
    }
    if v.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(Error::invalid(format!(
            "{name}: proportions must be finite and non-negative"
        )));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::invalid(format!(
            "{name}: proportions sum to {sum}, expected 1 within {NORMALIZATION_TOL}"
        )));
    }
    Ok(())
}

/// 1-D EMD with unit distance between adjacent segments:
/// `sum_{k=1}^{K-1} |CDF_a(k) - CDF_b(k)|`.
pub fn emd(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "emd: length mismatch ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    check_normalized(a, "emd: a")?;
    check_normalized(b, "emd: b")?;
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    // The final CDF difference is ~0 by normalization; skipping it matches
    // the K-1 term sum exactly.
    for k in 0..a.len() - 1 {
        cdf_gap += a[k] - b[k];
        total += cdf_gap.abs();
    }
    Ok(total)
}

/// Exact minimum-cost transportation cost between two histograms under an
/// arbitrary non-negative K x K ground-distance matrix.
///
/// Solved by successive shortest augmenting paths on the bipartite
/// supply/demand graph; each augmentation saturates a supply or a demand,
/// so at most 2K-1 iterations run. Exact at desk-scale K.
pub fn emd_lp_oracle(a: &[f64], b: &[f64], ground: &[Vec<f64>]) -> Result<f64> {
    let k = a.len();
    if b.len() != k {
        return Err(Error::invalid(format!(
            "emd_lp_oracle: length mismatch ({} vs {})",
            k,
            b.len()
        )));
    }
    check_normalized(a, "emd_lp_oracle: a")?;
    check_normalized(b, "emd_lp_oracle: b")?;
    if ground.len() != k || ground.iter().any(|row| row.len() != k) {
        return Err(Error::invalid("emd_lp_oracle: ground matrix must be KxK"));
    }
    if ground
        .iter()
        .any(|row| row.iter().any(|&c| !c.is_finite() || c < 0.0))
    {
        return Err(Error::invalid(
            "emd_lp_oracle: ground distances must be finite and non-negative",
        ));
    }

    const EPS: f64 = 1e-15;
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    // flow[i][j]: mass shipped from supply bin i to demand bin j.
    let mut flow = vec![vec![0.0_f64; k]; k];
    let mut cost = 0.0;

    loop {
        let remaining: f64 = supply.iter().sum();
        if remaining <= EPS {
            break;
        }
        // Bellman-Ford over residual graph. Nodes: 0..k supplies, k..2k demands.
        let n = 2 * k;
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        for i in 0..k {
            if supply[i] > EPS {
                dist[i] = 0.0;
            }
        }
        for _ in 0..n {
            let mut changed = false;
            for i in 0..k {
                for j in 0..k {
                    // forward arc i -> j (always available)
                    if dist[i].is_finite() && dist[i] + ground[i][j] < dist[k + j] - 1e-18 {
                        dist[k + j] = dist[i] + ground[i][j];
                        prev[k + j] = i;
                        changed = true;
                    }
                    // residual arc j -> i (only if flow present)
                    if flow[i][j] > EPS
                        && dist[k + j].is_finite()
                        && dist[k + j] - ground[i][j] < dist[i] - 1e-18
                    {
                        dist[i] = dist[k + j] - ground[i][j];
                        prev[i] = k + j;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        // cheapest reachable demand with unmet demand
        let target = (0..k)
            .filter(|&j| demand[j] > EPS && dist[k + j].is_finite())
            .min_by(|&x, &y| dist[k + x].partial_cmp(&dist[k + y]).unwrap());
        let Some(target) = target else {
            return Err(Error::model(
                "emd_lp_oracle: no augmenting path (unbalanced problem)",
            ));
        };

        // walk back to find bottleneck
        let mut path = Vec::new();
        let mut node = k + target;
        while prev[node] != usize::MAX {
            path.push((prev[node], node));
            node = prev[node];
        }
        let source = node;
        let mut push = supply[source].min(demand[target]);
        for &(u, v) in &path {
            if v < k {
                // residual arc: demand u-k back to supply v, limited by flow[v][u-k]
                push = push.min(flow[v][u - k]);
            }
        }
        for &(u, v) in &path {
            if v >= k {
                flow[u][v - k] += push;
                cost += push * ground[u][v - k];
            } else {
                flow[v][u - k] -= push;
                cost -= push * ground[v][u - k];
            }
        }
        supply[source] -= push;
        demand[target] -= push;
    }
    Ok(cost)
}

/// Unit adjacent ground distance on a line of K segments: `|i - j|`.
pub fn linear_ground_distance(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| (0..k).map(|j| (i as f64 - j as f64).abs()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(1e-6..1.0_f64, k).prop_map(|raw| {
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
    }

    #[test]
    fn identical_distributions_have_zero_distance() {
        let u = vec![0.25; 4];
        assert_eq!(emd(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn extreme_mass_move_is_k_minus_one() {
        let a = vec![1.0, 0.0, 0.0, 0.0];
        let b = vec![0.0, 0.0, 0.0, 1.0];
        assert!((emd(&a, &b).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn hand_checked_cdf_example() {
        // |0.1-0.25| + |0.5-0.5| + |0.9-0.75| = 0.3
        let a = vec![0.1, 0.4, 0.4, 0.1];
        let b = vec![0.25, 0.25, 0.25, 0.25];
        assert!((emd(&a, &b).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(emd(&[0.5, 0.5], &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn non_normalized_input_is_an_error() {
        assert!(emd(&[0.5, 0.6], &[0.5, 0.5]).is_err());
        assert!(emd(&[-0.5, 1.5], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn oracle_matches_cdf_form_on_spec_examples() {
        let g = linear_ground_distance(4);
        let cases = [
            (vec![0.25; 4], vec![0.25; 4]),
            (vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]),
            (vec![0.1, 0.4, 0.4, 0.1], vec![0.25, 0.25, 0.25, 0.25]),
        ];
        for (a, b) in cases {
            let fast = emd(&a, &b).unwrap();
            let lp = emd_lp_oracle(&a, &b, &g).unwrap();
            assert!((fast - lp).abs() < 1e-9, "fast={fast} lp={lp}");
        }
    }

    #[test]
    fn oracle_zero_ground_distance_is_free() {
        let g = vec![vec![0.0; 4]; 4];
        let a = vec![0.7, 0.1, 0.1, 0.1];
        let b = vec![0.1, 0.1, 0.1, 0.7];
        assert!(emd_lp_oracle(&a, &b, &g).unwrap().abs() < 1e-12);
    }

    #[test]
    fn oracle_half_mass_one_bin() {
        let g = linear_ground_distance(2);
        let d = emd_lp_oracle(&[0.5, 0.5], &[0.0, 1.0], &g).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn emd_is_symmetric_and_bounded(a in simplex(4), b in simplex(4)) {
            let d_ab = emd(&a, &b).unwrap();
            let d_ba = emd(&b, &a).unwrap();
            prop_assert!((d_ab - d_ba).abs() < 1e-12);
            prop_assert!(d_ab >= 0.0);
            prop_assert!(d_ab <= 3.0 + 1e-12);
        }

        #[test]
        fn emd_triangle_inequality(a in simplex(6), b in simplex(6), c in simplex(6)) {
            let ab = emd(&a, &b).unwrap();
            let bc = emd(&b, &c).unwrap();
            let ac = emd(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn emd_agrees_with_lp_oracle(a in simplex(5), b in simplex(5)) {
            let g = linear_ground_distance(5);
            let fast = emd(&a, &b).unwrap();
            let lp = emd_lp_oracle(&a, &b, &g).unwrap();
            prop_assert!((fast - lp).abs() < 1e-9);
        }
    }
}
