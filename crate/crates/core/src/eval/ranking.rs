use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::{Error, Result};

/// Per-fold ranks of `k` models over `n` folds (rank 1 = highest accuracy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMatrix {
    /// `n × k` accuracies.
    pub accuracies: Vec<Vec<f64>>,
    /// `n × k` ranks, midranks on ties.
    pub ranks: Vec<Vec<f64>>,
    pub average_ranks: Vec<f64>,
    /// Friedman χ² with `k − 1` degrees of freedom.
    pub friedman_chi2: f64,
    pub friedman_p_value: f64,
}

impl RankMatrix {
    pub fn n_folds(&self) -> usize {
        self.ranks.len()
    }

    pub fn n_models(&self) -> usize {
        self.average_ranks.len()
    }
}

/// Ranks `values` in descending order; tied values share the mean of their positions.
pub fn midranks_descending(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let mid = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
        start = end;
    }
    ranks
}

/// Friedman ranking of a folds × models accuracy matrix.
pub fn friedman_ranks(accuracies: &[Vec<f64>]) -> Result<RankMatrix> {
    let n = accuracies.len();
    let k = accuracies.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(Error::Stats(format!(
            "need at least 2 folds and 2 models, got {n} × {k}"
        )));
    }
    if accuracies.iter().any(|row| row.len() != k) {
        return Err(Error::Stats("every fold must score the same models".into()));
    }
    if accuracies.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::Stats("NaN accuracy".into()));
    }
    let ranks: Vec<Vec<f64>> = accuracies
        .iter()
        .map(|row| midranks_descending(row))
        .collect();
    let average_ranks: Vec<f64> = (0..k)
        .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let (nf, kf) = (n as f64, k as f64);
    let chi2 = 12.0 * nf / (kf * (kf + 1.0))
        * (average_ranks.iter().map(|r| r * r).sum::<f64>() - kf * (kf + 1.0).powi(2) / 4.0);
    let dist = ChiSquared::new(kf - 1.0).map_err(|e| Error::Stats(e.to_string()))?;
    Ok(RankMatrix {
        accuracies: accuracies.to_vec(),
        ranks,
        average_ranks,
        friedman_chi2: chi2,
        friedman_p_value: dist.sf(chi2.max(0.0)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alpha {
    #[serde(rename = "0.05")]
    P05,
    #[serde(rename = "0.10")]
    P10,
}

impl Alpha {
    pub fn value(self) -> f64 {
        match self {
            Alpha::P05 => 0.05,
            Alpha::P10 => 0.10,
        }
    }
}

impl TryFrom<f64> for Alpha {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        if (v - 0.05).abs() < 1e-12 {
            Ok(Alpha::P05)
        } else if (v - 0.10).abs() < 1e-12 {
            Ok(Alpha::P10)
        } else {
            Err(Error::Stats(format!("alpha must be 0.05 or 0.10, got {v}")))
        }
    }
}

/// Studentized range quantiles at infinite degrees of freedom divided by √2,
/// for k = 2..=20.
const Q_05: [f64; 19] = [
    1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030878, 3.101730, 3.163684,
    3.218654, 3.268004, 3.312739, 3.353618, 3.391230, 3.426041, 3.458425, 3.488685, 3.517073,
    3.543799,
];
const Q_10: [f64; 19] = [
    1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884, 2.854606, 2.919889,
    2.977768, 3.029694, 3.076733, 3.119693, 3.159199, 3.195743, 3.229723, 3.261461, 3.291224,
    3.319233,
];

pub const MAX_MODELS: usize = 20;

pub fn nemenyi_q(k: usize, alpha: Alpha) -> Result<f64> {
    if !(2..=MAX_MODELS).contains(&k) {
        return Err(Error::Stats(format!(
            "Nemenyi table covers 2..={MAX_MODELS} models, got {k}"
        )));
    }
    Ok(match alpha {
        Alpha::P05 => Q_05[k - 2],
        Alpha::P10 => Q_10[k - 2],
    })
}

/// `q_α(k) · sqrt(k(k+1) / (6n))`.
pub fn nemenyi_cd(k: usize, n: usize, alpha: Alpha) -> Result<f64> {
    if n == 0 {
        return Err(Error::Stats("need at least one fold".into()));
    }
    let q = nemenyi_q(k, alpha)?;
    Ok(q * ((k * (k + 1)) as f64 / (6.0 * n as f64)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{Continuous, Normal};

    #[test]
    fn strict_order_and_total_tie() {
        assert_eq!(midranks_descending(&[0.9, 0.8, 0.7]), vec![1.0, 2.0, 3.0]);
        assert_eq!(midranks_descending(&[0.5, 0.5, 0.5, 0.5]), vec![2.5; 4]);
        assert_eq!(
            midranks_descending(&[0.7, 0.9, 0.7, 0.1]),
            vec![2.5, 1.0, 2.5, 4.0]
        );
        let m = friedman_ranks(&vec![vec![0.8; 6]; 5]).unwrap();
        assert!(m.average_ranks.iter().all(|&r| r == 3.5));
        assert_eq!(m.friedman_chi2, 0.0);
        assert_eq!(m.friedman_p_value, 1.0);
    }

    #[test]
    fn friedman_statistic_by_hand() {
        // model 0 always best, model 2 always worst over 4 folds: R = [1, 2, 3]
        let rows = vec![vec![0.9, 0.8, 0.7]; 4];
        let m = friedman_ranks(&rows).unwrap();
        assert_eq!(m.average_ranks, vec![1.0, 2.0, 3.0]);
        // 12·4/(3·4) · (1 + 4 + 9 − 3·16/4) = 4 · 2 = 8
        assert!((m.friedman_chi2 - 8.0).abs() < 1e-12);
        // χ²(2) survival at 8 is e^{−4}
        assert!((m.friedman_p_value - (-4.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn bad_matrices_rejected() {
        assert!(friedman_ranks(&[vec![0.9, 0.8]]).is_err());
        assert!(friedman_ranks(&[vec![0.9], vec![0.8]]).is_err());
        assert!(friedman_ranks(&[vec![0.9, 0.8], vec![0.7]]).is_err());
        assert!(friedman_ranks(&[vec![0.9, f64::NAN], vec![0.7, 0.1]]).is_err());
    }

    #[test]
    fn critical_distance_examples() {
        assert!((nemenyi_cd(6, 5, Alpha::P05).unwrap() - 3.372).abs() < 1e-3);
        assert!((nemenyi_cd(2, 5, Alpha::P05).unwrap() - 0.8765).abs() < 1e-3);
        assert!(nemenyi_cd(1, 5, Alpha::P05).is_err());
        assert!(nemenyi_cd(21, 5, Alpha::P10).is_err());
        assert_eq!(Alpha::try_from(0.1).unwrap(), Alpha::P10);
        assert!(Alpha::try_from(0.01).is_err());
    }

    #[test]
    fn cd_shrinks_with_more_folds() {
        for k in 2..=MAX_MODELS {
            for alpha in [Alpha::P05, Alpha::P10] {
                let cds: Vec<f64> = (1..30).map(|n| nemenyi_cd(k, n, alpha).unwrap()).collect();
                assert!(cds.windows(2).all(|w| w[1] < w[0]));
            }
        }
    }

    /// `P(range of k iid standard normals ≤ w)` by Simpson's rule.
    fn range_cdf(w: f64, k: usize) -> f64 {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let (lo, hi, steps) = (-9.0, 9.0, 4000);
        let h = (hi - lo) / steps as f64;
        let f = |z: f64| {
            let inner = normal.cdf(z + w) - normal.cdf(z);
            normal.pdf(z) * inner.powi(k as i32 - 1)
        };
        let mut sum = f(lo) + f(hi);
        for i in 1..steps {
            let z = lo + i as f64 * h;
            sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(z);
        }
        k as f64 * sum * h / 3.0
    }

    fn q_oracle(k: usize, alpha: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if range_cdf(mid, k) < 1.0 - alpha {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi) / std::f64::consts::SQRT_2
    }

    #[test]
    fn table_matches_studentized_range_quantiles() {
        for k in 2..=MAX_MODELS {
            for alpha in [Alpha::P05, Alpha::P10] {
                let want = q_oracle(k, alpha.value());
                let got = nemenyi_q(k, alpha).unwrap();
                assert!(
                    (got - want).abs() < 2e-6,
                    "k={k} α={} table {got} oracle {want}",
                    alpha.value()
                );
            }
        }
    }

    #[test]
    fn cd_matches_direct_formula_for_every_entry() {
        for k in 2..=MAX_MODELS {
            for n in [2, 5, 10, 30] {
                for (alpha, table) in [(Alpha::P05, &Q_05), (Alpha::P10, &Q_10)] {
                    let direct =
                        table[k - 2] * (k as f64 * (k as f64 + 1.0) / 6.0 / n as f64).sqrt();
                    assert!((nemenyi_cd(k, n, alpha).unwrap() - direct).abs() < 1e-9);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn rank_sums_are_triangular(rows in prop::collection::vec(prop::collection::vec(0u8..6, 2..12), 2..8)) {
            let k = rows[0].len();
            let matrix: Vec<Vec<f64>> = rows.iter().map(|r| {
                let mut r: Vec<f64> = r.iter().map(|&v| v as f64 / 5.0).collect();
                r.resize(k, 0.0);
                r
            }).collect();
            let m = friedman_ranks(&matrix).unwrap();
            let expected = (k * (k + 1)) as f64 / 2.0;
            for r in &m.ranks {
                prop_assert!((r.iter().sum::<f64>() - expected).abs() < 1e-9);
            }
            prop_assert!((m.average_ranks.iter().sum::<f64>() - expected).abs() < 1e-9);
        }
    }
}
