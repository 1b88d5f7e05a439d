use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sem::{SemModel, OPTIMALITY_TOLERANCE};

/// Upper limit on the number of size-`s` subsets enumerated for gap
/// statistics.
pub const MAX_ENUMERATED_SUBSETS: u128 = 1 << 21;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub w_max: f64,
    pub s: usize,
    /// Longest directed path length of the true graph.
    pub p: usize,
    pub n: usize,
    pub delta_min: f64,
    pub delta_max: f64,
    /// Horizon; real-valued so that `ln T` can be any positive number.
    pub horizon: f64,
}

/// `[4 w² s² (s+1) N ln T / Δmin² + N + (π²/3) s^p N] · Δmax`.
pub fn theorem1_bound(inputs: &BoundInputs) -> Result<f64> {
    let BoundInputs {
        w_max,
        s,
        p,
        n,
        delta_min,
        delta_max,
        horizon,
    } = *inputs;
    if !(delta_min > 0.0) {
        return Err(Error::Degenerate);
    }
    if delta_min > delta_max {
        return Err(Error::Parameter(format!("Δmin {delta_min} exceeds Δmax {delta_max}")));
    }
    if !(horizon >= 1.0) || !(w_max >= 0.0) || s == 0 || n == 0 {
        return Err(Error::Parameter("bound inputs need T >= 1, w_max >= 0, s >= 1, N >= 1".into()));
    }
    let (s, n) = (s as f64, n as f64);
    let exploration = 4.0 * w_max.powi(2) * s.powi(2) * (s + 1.0) * n * horizon.ln() / delta_min.powi(2);
    let tail = PI * PI / 3.0 * s.powi(p as i32) * n;
    Ok((exploration + n + tail) * delta_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStatistics {
    pub delta_min: f64,
    pub delta_max: f64,
    pub optimum: f64,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Smallest and largest gap `μ(x*) − μ(x)` over decisions with exactly
/// `min(s, N)` arms whose expected payoff is below the optimum.
pub fn compute_gap_statistics(model: &SemModel, s: usize) -> Result<GapStatistics> {
    let n = model.n();
    if s == 0 {
        return Err(Error::Parameter("budget must be >= 1".into()));
    }
    let k = s.min(n);
    let count = binomial(n, k);
    if count > MAX_ENUMERATED_SUBSETS {
        return Err(Error::Size(count));
    }
    // the expected payoff is linear in x, so μ(x) is a sum of arm values
    let values = model.arm_values()?;
    let mut payoffs = Vec::with_capacity(count as usize);
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        payoffs.push(combo.iter().map(|&i| values[i]).sum::<f64>());
        // next combination in lexicographic order
        let Some(pos) = (0..k).rev().find(|&i| combo[i] != i + n - k) else {
            break;
        };
        combo[pos] += 1;
        for i in pos + 1..k {
            combo[i] = combo[i - 1] + 1;
        }
    }
    let optimum = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = OPTIMALITY_TOLERANCE * optimum.abs().max(1.0);
    let gaps: Vec<f64> = payoffs
        .iter()
        .map(|&mu| optimum - mu)
        .filter(|&gap| gap > threshold)
        .collect();
    if gaps.is_empty() {
        return Err(Error::Degenerate);
    }
    Ok(GapStatistics {
        delta_min: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        delta_max: gaps.iter().copied().fold(0.0, f64::max),
        optimum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::EnvSpec;
    use crate::sem::{AdjacencyMatrix, DecisionVector};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn noiseless(a: AdjacencyMatrix, beta: &[f64]) -> SemModel {
        SemModel::new(a, DVector::from_column_slice(beta), 0.0).unwrap()
    }

    fn hand_inputs() -> BoundInputs {
        BoundInputs {
            w_max: 1.0,
            s: 1,
            p: 1,
            n: 2,
            delta_min: 0.1,
            delta_max: 0.1,
            horizon: std::f64::consts::E,
        }
    }

    #[test]
    fn bound_hand_value() {
        let b = theorem1_bound(&hand_inputs()).unwrap();
        assert_abs_diff_eq!(b, 160.85797, epsilon = 160.85797 * 1e-4);
        // independent evaluation of the three terms
        let expected = (4.0 * 1.0 * 1.0 * 2.0 * 2.0 * 1.0 / 0.01 + 2.0 + PI * PI / 3.0 * 2.0) * 0.1;
        assert_abs_diff_eq!(b, expected, epsilon = 1e-12);
    }

    #[test]
    fn bound_monotone_in_horizon_and_linear_in_delta_max() {
        let base = hand_inputs();
        let mut last = theorem1_bound(&base).unwrap();
        for t in [10.0, 100.0, 1e4, 1e8] {
            let b = theorem1_bound(&BoundInputs { horizon: t, ..base }).unwrap();
            assert!(b > last);
            last = b;
        }
        let doubled = theorem1_bound(&BoundInputs { delta_max: 0.2, ..base }).unwrap();
        assert_abs_diff_eq!(doubled, 2.0 * theorem1_bound(&base).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn bound_rejects_degenerate_instances() {
        let zero = BoundInputs {
            delta_min: 0.0,
            ..hand_inputs()
        };
        assert!(matches!(theorem1_bound(&zero), Err(Error::Degenerate)));
        let inverted = BoundInputs {
            delta_min: 0.3,
            ..hand_inputs()
        };
        assert!(theorem1_bound(&inverted).is_err());
    }

    #[test]
    fn gap_examples() {
        let g = compute_gap_statistics(&noiseless(AdjacencyMatrix::zeros(2), &[0.6, 0.4]), 1).unwrap();
        assert_abs_diff_eq!(g.delta_min, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(g.delta_max, 0.2, epsilon = 1e-12);

        let g = compute_gap_statistics(&noiseless(AdjacencyMatrix::zeros(3), &[0.9, 0.5, 0.1]), 1).unwrap();
        assert_abs_diff_eq!(g.delta_min, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(g.delta_max, 0.8, epsilon = 1e-12);

        let flat = noiseless(AdjacencyMatrix::zeros(3), &[0.5, 0.5, 0.5]);
        assert!(matches!(compute_gap_statistics(&flat, 2), Err(Error::Degenerate)));
    }

    #[test]
    fn gaps_match_bitmask_enumeration() {
        for seed in 0..20 {
            let model = EnvSpec { n_arms: 7, edge_density: 0.4, seed, ..EnvSpec::default() }.generate().unwrap();
            let s = 1 + seed as usize % 3;
            let g = compute_gap_statistics(&model, s).unwrap();
            let mut payoffs = Vec::new();
            for mask in 0u32..(1 << 7) {
                if mask.count_ones() as usize == s {
                    let arms: Vec<usize> = (0..7).filter(|i| mask >> i & 1 == 1).collect();
                    payoffs.push(model.expected_payoff(&DecisionVector::from_indices(7, s, &arms).unwrap()).unwrap());
                }
            }
            let best = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let gaps: Vec<f64> = payoffs.iter().map(|p| best - p).filter(|g| *g > 1e-9).collect();
            assert_abs_diff_eq!(g.optimum, best, epsilon = 1e-12);
            assert_abs_diff_eq!(g.delta_min, gaps.iter().copied().fold(f64::INFINITY, f64::min), epsilon = 1e-12);
            assert_abs_diff_eq!(g.delta_max, gaps.iter().copied().fold(0.0, f64::max), epsilon = 1e-12);
            assert_abs_diff_eq!(g.optimum, model.expected_payoff(&model.optimal_decision(s).unwrap()).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn enumeration_guard() {
        let model = EnvSpec { n_arms: 40, ..EnvSpec::default() }.generate().unwrap();
        assert!(matches!(compute_gap_statistics(&model, 10), Err(Error::Size(_))));
        let model = EnvSpec::default().generate().unwrap();
        assert!(compute_gap_statistics(&model, 6).is_ok());
        assert_eq!(binomial(20, 6), 38_760);
    }
}
