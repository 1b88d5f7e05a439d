//! Experiment orchestration: episodes over seeds and policies, the λ grid,
//! the regret bound and report emission.

mod bound;
mod grid;
mod report;

use std::path::{Path, PathBuf};

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envgen::{EnvSpec, EnvironmentFile, RewardStream};
use crate::error::{Error, Result};
use crate::graph_learn::{matrix_mse, RegularizerSpec, SolverSettings};
use crate::policies::{
    Cucb, EpsilonGreedy, OraclePolicy, Policy, PolicyKind, RandomPolicy, SemUcb, SemUcbConfig, DEFAULT_EPSILON,
};
use crate::sem::{compute_exogenous, propagate, RegretReport, SemModel};
use crate::{derive_seed, seeded_rng};

pub use bound::{compute_gap_statistics, theorem1_bound, BoundInputs, GapStatistics, MAX_ENUMERATED_SUBSETS};
pub use grid::{default_lambda_grid, grid_search_lambda, GridResult, GridRow};
pub use report::{emit_reports, summarize, PolicySummary, Summary};

const REWARD_STREAM: u64 = 1;
const POLICY_STREAM: u64 = 2;

/// Where the environment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvSource {
    /// A fresh environment per run seed, generated with seed
    /// `derive_seed(spec.seed, run_seed)`.
    Spec(EnvSpec),
    /// One fixed environment shared by every seed.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSource,
    pub policies: Vec<PolicyKind>,
    pub budget: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    /// Regularizer used by SEM-UCB.
    #[serde(default = "default_regularizer")]
    pub regularizer: RegularizerSpec,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_solve_every")]
    pub solve_every_k: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_regularizer() -> RegularizerSpec {
    RegularizerSpec::l1(1e-4)
}

fn default_solve_every() -> usize {
    1
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl ExperimentConfig {
    /// The 20-arm synthetic setup: density 0.15, s = 6, T = 4000, all
    /// policies.
    pub fn synthetic(seeds: Vec<u64>) -> Self {
        Self {
            env: EnvSource::Spec(EnvSpec::default()),
            policies: PolicyKind::ALL.to_vec(),
            budget: 6,
            horizon: 4000,
            seeds,
            regularizer: default_regularizer(),
            lambda_grid: default_lambda_grid(),
            solve_every_k: 1,
            epsilon: DEFAULT_EPSILON,
            solver: SolverSettings::default(),
            output_dir: None,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("at least one policy is required".into()));
        }
        if self.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config("lambda grid values must be finite and >= 0".into()));
        }
        if self.solve_every_k == 0 {
            return Err(Error::Config("solve_every_k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        self.regularizer.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        let n = match &self.env {
            EnvSource::Spec(spec) => {
                spec.validate().map_err(|e| Error::Config(e.to_string()))?;
                spec.n_arms
            }
            EnvSource::File(path) => EnvironmentFile::read(path)?.n_arms,
        };
        if self.horizon < n {
            return Err(Error::Config(format!("horizon {} shorter than the {n} warm-up rounds", self.horizon)));
        }
        if self.budget == 0 || self.budget > n {
            return Err(Error::Config(format!("budget {} outside 1..={n}", self.budget)));
        }
        Ok(())
    }

    /// Environment faced by every policy on run seed `seed`.
    pub fn environment(&self, seed: u64) -> Result<SemModel> {
        match &self.env {
            EnvSource::Spec(spec) => EnvSpec {
                seed: derive_seed(spec.seed, seed),
                ..spec.clone()
            }
            .generate(),
            EnvSource::File(path) => EnvironmentFile::read(path)?.to_model(),
        }
    }

    pub fn semucb_config(&self) -> SemUcbConfig {
        SemUcbConfig {
            budget: self.budget,
            regularizer: self.regularizer,
            solver: self.solver.clone(),
            solve_every_k: self.solve_every_k,
        }
    }
}

/// One policy on one seed.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub policy: PolicyKind,
    pub seed: u64,
    pub report: RegretReport,
    /// Largest payoff weight of a selected arm under the running estimate.
    pub w_max: Option<f64>,
    pub unconverged_solves: usize,
    pub rescales: usize,
}

pub fn build_policy(config: &ExperimentConfig, model: &SemModel, kind: PolicyKind, seed: u64) -> Result<Box<dyn Policy>> {
    let n = model.n();
    let s = config.budget;
    Ok(match kind {
        PolicyKind::Semucb => {
            let mut init_rng = seeded_rng(derive_seed(seed, POLICY_STREAM + 1));
            Box::new(SemUcb::new(n, config.semucb_config(), &mut init_rng)?)
        }
        PolicyKind::Cucb => Box::new(Cucb::new(n, s)?),
        PolicyKind::Epsgreedy => Box::new(EpsilonGreedy::new(n, s, config.epsilon)?),
        PolicyKind::Random => Box::new(RandomPolicy::new(n, s)?),
        PolicyKind::Oracle => Box::new(OraclePolicy::new(model, s)?),
    })
}

/// Simulates `config.horizon` rounds of `policy` against `model`.
///
/// Rewards come from a stream seeded only by `seed`, so every policy on the
/// same seed faces the same reward sequence. Regret is accounted on expected
/// payoffs under the true model.
pub fn run_episode(
    config: &ExperimentConfig,
    model: &SemModel,
    policy: &mut dyn Policy,
    seed: u64,
) -> Result<RegretReport> {
    let n = model.n();
    let s = config.budget;
    let optimum = model.optimal_decision(s)?;
    let mut report = RegretReport::new(model.expected_payoff(&optimum)?);
    let mut rewards = RewardStream::new(derive_seed(seed, REWARD_STREAM));
    let mut rng = seeded_rng(derive_seed(seed, POLICY_STREAM));
    let track_mse = policy.kind() == PolicyKind::Semucb;

    for t in 1..=config.horizon {
        let x = policy.select(t, &mut rng)?;
        if x.len() != n {
            return Err(Error::Dimension { expected: n, got: x.len() });
        }
        let b = rewards.next(model);
        let z = compute_exogenous(&b, &x)?;
        let y = propagate(model, &z)?;
        policy.observe(&x, &z, &y)?;

        report.accumulate_regret(model.expected_payoff(&x)?)?;
        if track_mse {
            if let Some(estimate) = policy.estimate() {
                report.record_mse(matrix_mse(model.adjacency.weights(), estimate.weights())?);
            }
        }
        report.record_selection(x);
    }
    Ok(report)
}

fn run_one(config: &ExperimentConfig, kind: PolicyKind, seed: u64) -> Result<EpisodeResult> {
    let model = config.environment(seed)?;
    let mut policy = build_policy(config, &model, kind, seed)?;
    let report = run_episode(config, &model, policy.as_mut(), seed)?;
    let (unconverged_solves, rescales) = policy.diagnostics();
    debug!("{kind} seed {seed}: final regret {:.4}", report.final_regret());
    Ok(EpisodeResult {
        policy: kind,
        seed,
        w_max: policy.w_max(),
        report,
        unconverged_solves,
        rescales,
    })
}

/// Runs every (policy, seed) pair in parallel. Results are ordered by
/// policy, then seed, as listed in the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<EpisodeResult>> {
    config.validate()?;
    let jobs: Vec<(PolicyKind, u64)> = config
        .policies
        .iter()
        .flat_map(|&kind| config.seeds.iter().map(move |&seed| (kind, seed)))
        .collect();
    jobs.par_iter().map(|&(kind, seed)| run_one(config, kind, seed)).collect()
}
