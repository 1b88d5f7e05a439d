//! Structure-blind comparators. All of them work on the overall rewards
//! `y` of the selected arms and ignore the causal graph.

use nalgebra::DVector;
use rand::Rng;

use super::{Policy, PolicyKind};
use crate::error::{Error, Result};
use crate::sem::{top_s_decision, DecisionVector, SemModel};
use crate::SimRng;

pub const DEFAULT_EPSILON: f64 = 0.1;

/// Uniformly random `s`-subset of `n` arms.
pub fn random_round<R: Rng + ?Sized>(s: usize, n: usize, rng: &mut R) -> Result<DecisionVector> {
    if s == 0 || s > n {
        return Err(Error::Parameter(format!("budget s={s} outside 1..={n}")));
    }
    let arms = rand::seq::index::sample(rng, n, s).into_vec();
    DecisionVector::from_indices(n, s, &arms)
}

/// Per-arm running statistics of observed overall rewards.
#[derive(Debug, Clone)]
struct OverallStats {
    pulls: Vec<u64>,
    sums: Vec<f64>,
    rounds: usize,
    running_max: f64,
}

impl OverallStats {
    fn new(n: usize) -> Self {
        Self {
            pulls: vec![0; n],
            sums: vec![0.0; n],
            rounds: 0,
            running_max: 0.0,
        }
    }

    fn record(&mut self, x: &DecisionVector, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.pulls.len() || x.len() != self.pulls.len() {
            return Err(Error::Dimension {
                expected: self.pulls.len(),
                got: y.len(),
            });
        }
        for i in x.indices() {
            self.pulls[i] += 1;
            self.sums[i] += y[i];
            self.running_max = self.running_max.max(y[i]);
        }
        self.rounds += 1;
        Ok(())
    }

    /// Empirical means; unobserved arms rank first.
    fn means(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.pulls.len(),
            self.pulls.iter().zip(&self.sums).map(|(&m, &sum)| {
                if m == 0 {
                    f64::INFINITY
                } else {
                    sum / m as f64
                }
            }),
        )
    }
}

/// CUCB-style index policy on normalized overall rewards: mean of
/// `y[i] / y_max` plus the `sqrt((s + 1) ln t / m)` bonus, top-`s`.
/// `y_max` is the running maximum of observed overall rewards.
#[derive(Debug, Clone)]
pub struct Cucb {
    budget: usize,
    stats: OverallStats,
}

impl Cucb {
    pub fn new(n: usize, budget: usize) -> Result<Self> {
        if budget == 0 || budget > n {
            return Err(Error::Parameter(format!("budget s={budget} outside 1..={n}")));
        }
        Ok(Self {
            budget,
            stats: OverallStats::new(n),
        })
    }

    pub fn indices(&self) -> DVector<f64> {
        let scale = if self.stats.running_max > 0.0 {
            self.stats.running_max
        } else {
            1.0
        };
        let log_t = (self.stats.rounds.max(1) as f64).ln();
        let s = self.budget as f64;
        let means = self.stats.means();
        DVector::from_iterator(
            means.len(),
            means.iter().zip(&self.stats.pulls).map(|(&mean, &m)| {
                if m == 0 {
                    f64::INFINITY
                } else {
                    mean / scale + ((s + 1.0) * log_t / m as f64).sqrt()
                }
            }),
        )
    }
}

impl Policy for Cucb {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Cucb
    }

    fn select(&mut self, _t: usize, _rng: &mut SimRng) -> Result<DecisionVector> {
        top_s_decision(&self.indices(), self.budget)
    }

    fn observe(&mut self, x: &DecisionVector, _z: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        self.stats.record(x, y)
    }
}

/// With probability `ε` a uniform `s`-subset, otherwise the top-`s` arms by
/// empirical mean overall reward.
#[derive(Debug, Clone)]
pub struct EpsilonGreedy {
    budget: usize,
    epsilon: f64,
    stats: OverallStats,
}

impl EpsilonGreedy {
    pub fn new(n: usize, budget: usize, epsilon: f64) -> Result<Self> {
        if budget == 0 || budget > n {
            return Err(Error::Parameter(format!("budget s={budget} outside 1..={n}")));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Parameter(format!("epsilon {epsilon} outside [0, 1]")));
        }
        Ok(Self {
            budget,
            epsilon,
            stats: OverallStats::new(n),
        })
    }
}

impl Policy for EpsilonGreedy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Epsgreedy
    }

    fn select(&mut self, _t: usize, rng: &mut SimRng) -> Result<DecisionVector> {
        let n = self.stats.pulls.len();
        if self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon {
            random_round(self.budget, n, rng)
        } else {
            top_s_decision(&self.stats.means(), self.budget)
        }
    }

    fn observe(&mut self, x: &DecisionVector, _z: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        self.stats.record(x, y)
    }
}

#[derive(Debug, Clone)]
pub struct RandomPolicy {
    n: usize,
    budget: usize,
}

impl RandomPolicy {
    pub fn new(n: usize, budget: usize) -> Result<Self> {
        if budget == 0 || budget > n {
            return Err(Error::Parameter(format!("budget s={budget} outside 1..={n}")));
        }
        Ok(Self { n, budget })
    }
}

impl Policy for RandomPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Random
    }

    fn select(&mut self, _t: usize, rng: &mut SimRng) -> Result<DecisionVector> {
        random_round(self.budget, self.n, rng)
    }

    fn observe(&mut self, _x: &DecisionVector, _z: &DVector<f64>, _y: &DVector<f64>) -> Result<()> {
        Ok(())
    }
}

/// Clairvoyant player of the optimal decision.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    decision: DecisionVector,
}

impl OraclePolicy {
    pub fn new(model: &SemModel, budget: usize) -> Result<Self> {
        Ok(Self {
            decision: model.optimal_decision(budget)?,
        })
    }
}

impl Policy for OraclePolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Oracle
    }

    fn select(&mut self, _t: usize, _rng: &mut SimRng) -> Result<DecisionVector> {
        Ok(self.decision.clone())
    }

    fn observe(&mut self, _x: &DecisionVector, _z: &DVector<f64>, _y: &DVector<f64>) -> Result<()> {
        Ok(())
    }
}
