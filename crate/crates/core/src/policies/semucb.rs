use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::init_matrix::{build_initialization_matrix, InitializationMatrix};
use super::{Policy, PolicyKind};
use crate::error::{Error, Result};
use crate::graph_learn::{
    estimate_from_stats, RegularizerSpec, SolverSettings, SufficientStats,
};
use crate::sem::{top_s_decision, AdjacencyMatrix, DecisionVector, FeedbackLog};
use crate::SimRng;

/// `β̂ + sqrt((s + 1) ln t / m)`.
pub fn ucb_index(mean: f64, pulls: u64, t: usize, s: usize) -> Result<f64> {
    if pulls == 0 {
        return Err(Error::UnobservedArm(0));
    }
    if t == 0 {
        return Err(Error::Parameter("round index t must be >= 1".into()));
    }
    Ok(mean + confidence_radius(pulls, t, s))
}

fn confidence_radius(pulls: u64, t: usize, s: usize) -> f64 {
    ((s as f64 + 1.0) * (t as f64).ln() / pulls as f64).sqrt()
}

/// Indicator of the `s` largest entries of `c = 1ᵀ (I − Â)⁻¹ diag(E)`.
pub fn select_decision(estimate: &AdjacencyMatrix, indices: &DVector<f64>, s: usize) -> Result<DecisionVector> {
    if indices.len() != estimate.n() {
        return Err(Error::Dimension {
            expected: estimate.n(),
            got: indices.len(),
        });
    }
    if indices.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::Parameter("UCB indices must be finite and nonnegative".into()));
    }
    let c = estimate.payoff_weights()?.component_mul(indices);
    top_s_decision(&c, s)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemUcbConfig {
    pub budget: usize,
    pub regularizer: RegularizerSpec,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Re-estimate the graph every `k` rounds after warm-up.
    #[serde(default = "default_solve_every")]
    pub solve_every_k: usize,
}

fn default_solve_every() -> usize {
    1
}

impl SemUcbConfig {
    pub fn new(budget: usize, regularizer: RegularizerSpec) -> Self {
        Self {
            budget,
            regularizer,
            solver: SolverSettings::default(),
            solve_every_k: 1,
        }
    }
}

/// Mutable learning state of one SEM-UCB run.
#[derive(Debug, Clone)]
pub struct UcbState {
    pub log: FeedbackLog,
    pub indices: DVector<f64>,
    pub confidence: DVector<f64>,
    pub estimated_adjacency: AdjacencyMatrix,
    pub round: usize,
}

impl UcbState {
    fn new(n: usize) -> Self {
        Self {
            log: FeedbackLog::new(n),
            indices: DVector::zeros(n),
            confidence: DVector::zeros(n),
            estimated_adjacency: AdjacencyMatrix::zeros(n),
            round: 0,
        }
    }

    /// Recomputes `E_t = β̂_t + C_t` from the log at `t = log.round()`.
    fn refresh_indices(&mut self, s: usize) -> Result<()> {
        let t = self.log.round();
        let counts = self.log.pull_counts();
        let means = self.log.empirical_means();
        for i in 0..counts.len() {
            if counts[i] == 0 {
                return Err(Error::UnobservedArm(i));
            }
            self.confidence[i] = confidence_radius(counts[i], t, s);
            self.indices[i] = means[i] + self.confidence[i];
        }
        Ok(())
    }
}

/// SEM-UCB: warm-up on the initialization matrix, then per round
/// re-estimate the graph, refresh the UCB indices and play the top-`s`
/// arms by estimated payoff weight.
pub struct SemUcb {
    config: SemUcbConfig,
    init: InitializationMatrix,
    state: UcbState,
    stats: SufficientStats,
    w_max: f64,
    solves: usize,
    unconverged_solves: usize,
    rescales: usize,
}

impl SemUcb {
    pub fn new(n: usize, config: SemUcbConfig, rng: &mut SimRng) -> Result<Self> {
        config.regularizer.validate()?;
        config.solver.validate()?;
        if config.solve_every_k == 0 {
            return Err(Error::Parameter("solve_every_k must be >= 1".into()));
        }
        let init = build_initialization_matrix(n, config.budget, rng)?;
        Ok(Self {
            config,
            init,
            state: UcbState::new(n),
            stats: SufficientStats::new(n),
            w_max: 0.0,
            solves: 0,
            unconverged_solves: 0,
            rescales: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.init.n()
    }

    pub fn state(&self) -> &UcbState {
        &self.state
    }

    pub fn initialization(&self) -> &InitializationMatrix {
        &self.init
    }

    pub fn solves(&self) -> usize {
        self.solves
    }

    pub fn unconverged_solves(&self) -> usize {
        self.unconverged_solves
    }

    pub fn rescales(&self) -> usize {
        self.rescales
    }

    fn reestimate(&mut self) -> Result<()> {
        let warm: DMatrix<f64> = self.state.estimated_adjacency.weights().clone();
        let outcome = estimate_from_stats(
            &self.stats,
            &self.config.regularizer,
            &self.config.solver,
            Some(&warm),
        )?;
        self.solves += 1;
        if !outcome.converged {
            self.unconverged_solves += 1;
        }
        if outcome.rescaled {
            self.rescales += 1;
        }
        self.state.estimated_adjacency = outcome.adjacency;
        Ok(())
    }

    /// Semi-bandit update from `z` plus graph data from the pair
    /// `(graph_z, graph_y)`. In simulation both exogenous vectors coincide;
    /// panel data may supply full exogenous columns to the graph learner.
    pub fn observe_split(
        &mut self,
        x: &DecisionVector,
        z: &DVector<f64>,
        graph_z: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<()> {
        self.state.log.record(x, z, y)?;
        self.stats.push(graph_z.as_slice(), y.as_slice())?;
        self.state.round = self.state.log.round();
        Ok(())
    }

    /// Plays round `t` against `env`, which maps a decision to `(z, y)`.
    pub fn play_round(
        &mut self,
        t: usize,
        rng: &mut SimRng,
        mut env: impl FnMut(&DecisionVector) -> Result<(DVector<f64>, DVector<f64>)>,
    ) -> Result<DecisionVector> {
        let x = self.select(t, rng)?;
        let (z, y) = env(&x)?;
        if z.len() != self.n() || y.len() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: z.len().min(y.len()),
            });
        }
        self.observe(&x, &z, &y)?;
        Ok(x)
    }
}

impl Policy for SemUcb {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Semucb
    }

    fn select(&mut self, t: usize, _rng: &mut SimRng) -> Result<DecisionVector> {
        let n = self.n();
        if t == 0 {
            return Err(Error::Parameter("rounds are 1-based".into()));
        }
        if t != self.state.log.round() + 1 {
            return Err(Error::Parameter(format!(
                "round {t} requested after {} observed rounds",
                self.state.log.round()
            )));
        }
        let x = if t <= n {
            self.init.decision(t)?
        } else {
            if (t - n - 1) % self.config.solve_every_k == 0 {
                self.reestimate()?;
            }
            self.state.refresh_indices(self.config.budget)?;
            select_decision(&self.state.estimated_adjacency, &self.state.indices, self.config.budget)?
        };
        // w_{t-1} = 1ᵀ (I − Â_{t−1})⁻¹ diag(x_t)
        let reach = self.state.estimated_adjacency.payoff_weights()?;
        for i in x.indices() {
            self.w_max = self.w_max.max(reach[i]);
        }
        Ok(x)
    }

    fn observe(&mut self, x: &DecisionVector, z: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        self.observe_split(x, z, z, y)
    }

    fn estimate(&self) -> Option<&AdjacencyMatrix> {
        Some(&self.state.estimated_adjacency)
    }

    fn w_max(&self) -> Option<f64> {
        Some(self.w_max)
    }

    fn diagnostics(&self) -> (usize, usize) {
        (self.unconverged_solves, self.rescales)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::{sample_rewards, EnvSpec};
    use crate::graph_learn::matrix_mse;
    use crate::sem::{compute_exogenous, propagate, SemModel};
    use crate::seeded_rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn index_examples() {
        assert_eq!(ucb_index(0.4, 3, 1, 6).unwrap(), 0.4);
        assert_abs_diff_eq!(ucb_index(0.5, 7, 100, 6).unwrap(), 0.5 + 100f64.ln().sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(ucb_index(0.5, 7, 100, 6).unwrap(), 2.64600, epsilon = 5e-5);
        assert_abs_diff_eq!(ucb_index(0.5, 700, 100, 6).unwrap(), 0.71460, epsilon = 1e-5);
        assert!(matches!(ucb_index(0.5, 0, 10, 6), Err(Error::UnobservedArm(_))));
    }

    #[test]
    fn select_examples() {
        let e = DVector::from_column_slice(&[0.9, 0.1, 0.5]);
        assert_eq!(select_decision(&AdjacencyMatrix::zeros(3), &e, 2).unwrap().indices(), vec![0, 2]);
        let a = AdjacencyMatrix::dag_from_edges(2, &[(0, 1, 0.5)]).unwrap();
        let e = DVector::from_column_slice(&[0.55, 0.5]);
        assert_eq!(select_decision(&a, &e, 1).unwrap().indices(), vec![1]);
        let bad = DVector::from_column_slice(&[-0.1, 0.5]);
        assert!(select_decision(&a, &bad, 1).is_err());
    }

    fn brute_force_index_argmax(a: &AdjacencyMatrix, e: &DVector<f64>, s: usize) -> Vec<usize> {
        let n = a.n();
        let inverse = a.system_matrix().try_inverse().unwrap();
        let mut best = (f64::NEG_INFINITY, 0u32);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize > s {
                continue;
            }
            let x = DVector::from_fn(n, |i, _| (mask >> i & 1) as f64);
            let value = (inverse.row_sum() * DMatrix::from_diagonal(e) * x)[0];
            if value > best.0 {
                best = (value, mask);
            }
        }
        (0..n).filter(|&i| best.1 >> i & 1 == 1).collect()
    }

    #[test]
    fn select_matches_exhaustive_search() {
        let mut rng = seeded_rng(21);
        for k in 0..100 {
            let n = rng.random_range(1..=8);
            let s = rng.random_range(1..=3.min(n));
            let spec = EnvSpec { n_arms: n, edge_density: 0.4, seed: k, ..EnvSpec::default() };
            let a = spec.generate().unwrap().adjacency;
            let e = DVector::from_fn(n, |_, _| rng.random_range(0.0..3.0));
            let fast = select_decision(&a, &e, s).unwrap().indices();
            assert_eq!(fast, brute_force_index_argmax(&a, &e, s), "instance {k}");
            // argmax invariance under positive scaling
            let scaled = select_decision(&a, &(&e * 7.25), s).unwrap().indices();
            assert_eq!(scaled, fast);
        }
    }

    fn run_semucb(model: &SemModel, s: usize, rounds: usize, seed: u64) -> (SemUcb, Vec<DecisionVector>) {
        let mut rng = seeded_rng(seed);
        let mut reward_rng = seeded_rng(seed ^ 0xA5A5);
        let config = SemUcbConfig::new(s, RegularizerSpec::l1(1e-6));
        let mut policy = SemUcb::new(model.n(), config, &mut rng).unwrap();
        let mut plays = Vec::new();
        for t in 1..=rounds {
            let x = policy
                .play_round(t, &mut rng, |x| {
                    let b = sample_rewards(model, &mut reward_rng);
                    let z = compute_exogenous(&b, x)?;
                    let y = propagate(model, &z)?;
                    Ok((z, y))
                })
                .unwrap();
            plays.push(x);
        }
        (policy, plays)
    }

    #[test]
    fn warm_up_replays_initialization_columns() {
        let model = EnvSpec { n_arms: 6, edge_density: 0.3, seed: 4, reward_std: 0.0, ..EnvSpec::default() }
            .generate()
            .unwrap();
        let (policy, plays) = run_semucb(&model, 3, 10, 8);
        for t in 1..=6 {
            assert_eq!(plays[t - 1], policy.initialization().decision(t).unwrap());
        }
        assert!(policy.state().log.pull_counts()[..].iter().all(|&m| m >= 1));
        let total: u64 = policy.state().log.pull_counts().iter().sum();
        let played: usize = plays.iter().map(|x| x.count()).sum();
        assert_eq!(total as usize, played);
        // stacked warm-up inputs have full row rank on noise-free runs
        let z = policy.state().log.exo_history().columns(0, 6).into_owned();
        assert_eq!(z.rank(1e-9), 6);
    }

    #[test]
    fn indices_dominate_means() {
        let model = EnvSpec { n_arms: 5, edge_density: 0.3, seed: 9, ..EnvSpec::default() }.generate().unwrap();
        let (mut policy, _) = run_semucb(&model, 2, 40, 3);
        policy.select(41, &mut seeded_rng(0)).unwrap();
        let state = policy.state();
        for i in 0..5 {
            assert!(state.indices[i] > state.log.empirical_means()[i]);
            assert_abs_diff_eq!(
                state.indices[i],
                state.log.empirical_means()[i] + state.confidence[i],
                epsilon = 1e-15
            );
        }
    }

    /// Once the estimate is exact, every choice is the top-s rule on the true
    /// graph with the current indices. Exploration keeps the optimal share
    /// well below one at this horizon, so only the pooled share is bounded.
    #[test]
    fn noise_free_runs_lock_onto_the_optimum() {
        let (mut hits, mut late) = (0usize, 0usize);
        for seed in 0..20u64 {
            let model = EnvSpec { n_arms: 5, edge_density: 0.4, seed: 100 + seed, reward_std: 0.0, ..EnvSpec::default() }
                .generate()
                .unwrap();
            let mut rng = seeded_rng(seed);
            let mut policy = SemUcb::new(5, SemUcbConfig::new(2, RegularizerSpec::l1(1e-6)), &mut rng).unwrap();
            let optimum = model.optimal_decision(2).unwrap();
            for t in 1..=400 {
                let x = policy.select(t, &mut rng).unwrap();
                if t > 5 {
                    let on_truth = select_decision(&model.adjacency, &policy.state().indices, 2).unwrap();
                    assert_eq!(x, on_truth, "seed {seed} round {t}");
                }
                if t >= 200 {
                    late += 1;
                    hits += usize::from(x == optimum);
                }
                let z = compute_exogenous(&model.mean_rewards, &x).unwrap();
                let y = propagate(&model, &z).unwrap();
                policy.observe(&x, &z, &y).unwrap();
            }
            let mse = matrix_mse(model.adjacency.weights(), policy.estimate().unwrap().weights()).unwrap();
            assert!(mse < 1e-10, "seed {seed}: mse {mse}");
        }
        // uniform play over the ten feasible pairs would give 0.1
        assert!(hits as f64 / late as f64 > 0.4, "optimal share {hits}/{late}");
    }

    #[test]
    fn rejects_out_of_order_rounds() {
        let mut rng = seeded_rng(1);
        let mut policy = SemUcb::new(3, SemUcbConfig::new(1, RegularizerSpec::l1(0.1)), &mut rng).unwrap();
        assert!(policy.select(2, &mut rng).is_err());
        assert!(policy.select(0, &mut rng).is_err());
    }
}
