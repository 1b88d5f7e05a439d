//! Synthetic environments: random weighted DAGs, truncated-normal rewards
//! and the structural statistics consumed by the regret bound.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sem::{AdjacencyMatrix, SemModel, StructureMode};
use crate::seeded_rng;

/// Range of the per-arm mean rewards drawn for each generated environment.
pub const MEAN_REWARD_RANGE: (f64, f64) = (0.2, 0.8);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub n_arms: usize,
    pub edge_density: f64,
    #[serde(default = "default_weight_low")]
    pub weight_low: f64,
    #[serde(default = "default_weight_high")]
    pub weight_high: f64,
    #[serde(default = "default_reward_std")]
    pub reward_std: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_weight_low() -> f64 {
    0.4
}
fn default_weight_high() -> f64 {
    0.7
}
fn default_reward_std() -> f64 {
    0.1
}

impl Default for EnvSpec {
    /// The 20-arm synthetic setup with edge density 0.15.
    fn default() -> Self {
        Self {
            n_arms: 20,
            edge_density: 0.15,
            weight_low: default_weight_low(),
            weight_high: default_weight_high(),
            reward_std: default_reward_std(),
            seed: 0,
        }
    }
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_arms == 0 {
            return Err(Error::Parameter("n_arms must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return Err(Error::Parameter(format!(
                "edge density {} outside [0, 1]",
                self.edge_density
            )));
        }
        if !(self.weight_low >= 0.0 && self.weight_low <= self.weight_high) || !self.weight_high.is_finite() {
            return Err(Error::Parameter(format!(
                "weight range [{}, {}] is invalid",
                self.weight_low, self.weight_high
            )));
        }
        if !(self.reward_std >= 0.0 && self.reward_std.is_finite()) {
            return Err(Error::Parameter(format!("reward std {} must be >= 0", self.reward_std)));
        }
        Ok(())
    }

    /// Generates the full environment from `self.seed`: the DAG first, then
    /// the mean rewards, both from one stream.
    pub fn generate(&self) -> Result<SemModel> {
        self.validate()?;
        let mut rng = seeded_rng(self.seed);
        let adjacency = random_dag(self, &mut rng);
        let (lo, hi) = MEAN_REWARD_RANGE;
        let beta = DVector::from_fn(self.n_arms, |_, _| rng.random_range(lo..=hi));
        SemModel::new(adjacency, beta, self.reward_std)
    }
}

/// Strictly upper triangular matrix whose above-diagonal slots are nonzero
/// independently with probability `edge_density`, weights uniform on
/// `[weight_low, weight_high]`.
pub fn random_dag<R: Rng + ?Sized>(spec: &EnvSpec, rng: &mut R) -> AdjacencyMatrix {
    let n = spec.n_arms;
    let mut weights = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < spec.edge_density {
                weights[(i, j)] = if spec.weight_high > spec.weight_low {
                    rng.random_range(spec.weight_low..=spec.weight_high)
                } else {
                    spec.weight_low
                };
            }
        }
    }
    AdjacencyMatrix::new(weights, StructureMode::StrictUpperTriangularDag)
        .expect("generated DAG satisfies adjacency invariants")
}

/// Independent per-arm draws from `N(β[i], σ²)` truncated to `[0, 1]` by
/// rejection.
pub fn sample_rewards<R: Rng + ?Sized>(model: &SemModel, rng: &mut R) -> DVector<f64> {
    let std = model.reward_sampler.std;
    if std == 0.0 {
        return model.mean_rewards.clone();
    }
    DVector::from_iterator(
        model.n(),
        model.mean_rewards.iter().map(|&mean| {
            let normal = Normal::new(mean, std).expect("finite positive std");
            loop {
                let v = normal.sample(rng);
                if (0.0..=1.0).contains(&v) {
                    break v;
                }
            }
        }),
    )
}

/// Maximum number of edges on any directed path.
///
/// `A[i, j] != 0` is an edge `j -> i`. Fails when the graph has a cycle.
pub fn longest_path_length(a: &AdjacencyMatrix) -> Result<usize> {
    let n = a.n();
    let w = a.weights();
    let order: Vec<usize> = if a.is_dag() {
        // sources have the highest indices
        (0..n).rev().collect()
    } else {
        topological_order(w).ok_or_else(|| {
            Error::Structure("longest path is undefined on a graph with cycles".into())
        })?
    };
    // depth[v] = longest path ending at v
    let mut depth = vec![0usize; n];
    for &j in &order {
        for i in 0..n {
            if w[(i, j)] != 0.0 {
                depth[i] = depth[i].max(depth[j] + 1);
            }
        }
    }
    Ok(depth.into_iter().max().unwrap_or(0))
}

fn topological_order(w: &DMatrix<f64>) -> Option<Vec<usize>> {
    let n = w.nrows();
    let mut indegree: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| w[(i, j)] != 0.0).count())
        .collect();
    let mut ready: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(j) = ready.pop() {
        order.push(j);
        for i in 0..n {
            if w[(i, j)] != 0.0 {
                indegree[i] -= 1;
                if indegree[i] == 0 {
                    ready.push(i);
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// On-disk environment description used for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentFile {
    pub n_arms: usize,
    /// Dense row-major `N × N` weights.
    pub adjacency: Vec<f64>,
    pub beta: Vec<f64>,
    pub reward_std: f64,
    pub seed: u64,
}

impl EnvironmentFile {
    pub fn from_model(model: &SemModel, seed: u64) -> Self {
        let n = model.n();
        let w = model.adjacency.weights();
        Self {
            n_arms: n,
            adjacency: (0..n).flat_map(|i| (0..n).map(move |j| w[(i, j)])).collect(),
            beta: model.mean_rewards.iter().copied().collect(),
            reward_std: model.reward_sampler.std,
            seed,
        }
    }

    pub fn to_model(&self) -> Result<SemModel> {
        let n = self.n_arms;
        if self.adjacency.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                got: self.adjacency.len(),
            });
        }
        let weights = DMatrix::from_row_slice(n, n, &self.adjacency);
        let is_upper = (0..n).all(|i| (0..=i).all(|j| weights[(i, j)] == 0.0));
        let mode = if is_upper {
            StructureMode::StrictUpperTriangularDag
        } else {
            StructureMode::GeneralDirected
        };
        let adjacency = AdjacencyMatrix::new(weights, mode)?;
        SemModel::new(adjacency, DVector::from_column_slice(&self.beta), self.reward_std)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Draws one reward vector per round for an environment; wraps its own
/// random stream so that all policies facing the same seed see the same
/// reward sequence.
#[derive(Debug, Clone)]
pub struct RewardStream {
    rng: ChaCha8Rng,
}

impl RewardStream {
    pub fn new(seed: u64) -> Self {
        Self { rng: seeded_rng(seed) }
    }

    pub fn next(&mut self, model: &SemModel) -> DVector<f64> {
        sample_rewards(model, &mut self.rng)
    }
}
