use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_policy, run_episode, ExperimentConfig};
use crate::error::{Error, Result};
use crate::graph_learn::matrix_mse;
use crate::policies::PolicyKind;

/// Eight log-spaced values from 1e-4 to 1e3.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..8).map(|k| 10f64.powi(k - 4)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub lambda: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_lambda: f64,
    pub table: Vec<GridRow>,
}

impl GridResult {
    /// Picks the lowest score; ties keep the earlier grid entry.
    pub fn from_table(table: Vec<GridRow>) -> Result<Self> {
        let best = table
            .iter()
            .filter(|row| row.score.is_finite())
            .min_by(|a, b| a.score.total_cmp(&b.score))
            .ok_or_else(|| Error::Config("lambda grid produced no finite score".into()))?;
        Ok(Self {
            best_lambda: best.lambda,
            table,
        })
    }
}

/// Scores each λ by the final adjacency MSE of SEM-UCB against the true
/// graph, averaged over the configured seeds.
pub fn grid_search_lambda(config: &ExperimentConfig) -> Result<GridResult> {
    config.validate()?;
    if config.lambda_grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..config.lambda_grid.len())
        .flat_map(|k| config.seeds.iter().map(move |&seed| (k, seed)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(k, seed)| {
            let mut cfg = config.clone();
            cfg.regularizer.lambda = config.lambda_grid[k];
            let model = cfg.environment(seed)?;
            let mut policy = build_policy(&cfg, &model, PolicyKind::Semucb, seed)?;
            run_episode(&cfg, &model, policy.as_mut(), seed)?;
            let estimate = policy.estimate().expect("SEM-UCB keeps an estimate");
            matrix_mse(model.adjacency.weights(), estimate.weights())
        })
        .collect::<Result<_>>()?;
    let per_lambda = config.seeds.len();
    let table = config
        .lambda_grid
        .iter()
        .enumerate()
        .map(|(k, &lambda)| GridRow {
            lambda,
            score: scores[k * per_lambda..(k + 1) * per_lambda].iter().sum::<f64>() / per_lambda as f64,
        })
        .collect();
    GridResult::from_table(table)
}
