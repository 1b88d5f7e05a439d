//! Structural equation model primitives.
//!
//! Rewards are coupled through the linear system `y = A y + F z`, where
//! `z = diag(b) x` is the semi-bandit feedback of the selected arms and `y`
//! holds the overall (propagated) rewards. Entry `A[i, j]` is the causal
//! influence of arm `j` on arm `i`. In DAG mode the matrix is strictly upper
//! triangular, so the natural index order is a topological order and every
//! solve is a triangular substitution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Slack allowed when a round's expected payoff exceeds the optimum.
pub const OPTIMALITY_TOLERANCE: f64 = 1e-9;

/// A super arm: a binary selection of at most `budget` base arms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionVector {
    selected: Vec<bool>,
    budget: usize,
}

impl DecisionVector {
    pub fn empty(n: usize, budget: usize) -> Self {
        Self {
            selected: vec![false; n],
            budget,
        }
    }

    /// Builds a decision from 0-based arm indices.
    pub fn from_indices(n: usize, budget: usize, arms: &[usize]) -> Result<Self> {
        let mut selected = vec![false; n];
        for &arm in arms {
            if arm >= n {
                return Err(Error::Parameter(format!("arm {arm} out of range for N={n}")));
            }
            selected[arm] = true;
        }
        Self::from_bits(selected, budget)
    }

    pub fn from_bits(selected: Vec<bool>, budget: usize) -> Result<Self> {
        if budget == 0 {
            return Err(Error::Parameter("budget s must be positive".into()));
        }
        let count = selected.iter().filter(|&&b| b).count();
        if count > budget {
            return Err(Error::Parameter(format!(
                "{count} arms selected but budget is {budget}"
            )));
        }
        Ok(Self { selected, budget })
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|&&b| b).count()
    }

    pub fn is_selected(&self, arm: usize) -> bool {
        self.selected[arm]
    }

    pub fn bits(&self) -> &[bool] {
        &self.selected
    }

    /// Selected arm indices in increasing order.
    pub fn indices(&self) -> Vec<usize> {
        self.selected
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.selected.iter().map(|&b| if b { 1.0 } else { 0.0 }),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureMode {
    /// Strictly upper triangular weights; `I - A` is always invertible.
    StrictUpperTriangularDag,
    /// Any nonnegative zero-diagonal weights; invertibility is checked.
    GeneralDirected,
}

/// Nonnegative causal mixing matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    weights: DMatrix<f64>,
    mode: StructureMode,
}

impl AdjacencyMatrix {
    pub fn new(weights: DMatrix<f64>, mode: StructureMode) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::Dimension {
                expected: weights.nrows(),
                got: weights.ncols(),
            });
        }
        let n = weights.nrows();
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() {
                    return Err(Error::Data(format!("A[{i},{j}] is not finite")));
                }
                if w < 0.0 {
                    return Err(Error::Parameter(format!("A[{i},{j}] = {w} is negative")));
                }
                if i == j && w != 0.0 {
                    return Err(Error::Parameter(format!("diagonal entry A[{i},{i}] = {w}")));
                }
                if mode == StructureMode::StrictUpperTriangularDag && i > j && w != 0.0 {
                    return Err(Error::Structure(format!(
                        "A[{i},{j}] = {w} below the diagonal in DAG mode"
                    )));
                }
            }
        }
        let adjacency = Self { weights, mode };
        if mode == StructureMode::GeneralDirected {
            let system = adjacency.system_matrix();
            if !system.lu().is_invertible() {
                return Err(Error::Singular);
            }
        }
        Ok(adjacency)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            weights: DMatrix::zeros(n, n),
            mode: StructureMode::StrictUpperTriangularDag,
        }
    }

    /// Convenience constructor for DAG matrices from 0-based `(i, j, w)` triples.
    pub fn dag_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut weights = DMatrix::zeros(n, n);
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Parameter(format!("edge ({i},{j}) out of range")));
            }
            weights[(i, j)] = w;
        }
        Self::new(weights, StructureMode::StrictUpperTriangularDag)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn mode(&self) -> StructureMode {
        self.mode
    }

    pub fn is_dag(&self) -> bool {
        self.mode == StructureMode::StrictUpperTriangularDag
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }

    /// `I - A`.
    pub fn system_matrix(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n(), self.n()) - &self.weights
    }

    /// Solves `(I - A) y = rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        if rhs.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: rhs.len(),
            });
        }
        let y = match self.mode {
            StructureMode::StrictUpperTriangularDag => {
                // y[i] only depends on y[j] with j > i.
                let mut y = rhs.clone();
                for i in (0..n).rev() {
                    let mut acc = rhs[i];
                    for j in (i + 1)..n {
                        acc += self.weights[(i, j)] * y[j];
                    }
                    y[i] = acc;
                }
                y
            }
            StructureMode::GeneralDirected => self
                .system_matrix()
                .lu()
                .solve(rhs)
                .ok_or(Error::Singular)?,
        };
        debug_assert!(
            (self.system_matrix() * &y - rhs).amax() <= 1e-10 * (1.0 + rhs.amax()),
            "SEM solve residual too large"
        );
        Ok(y)
    }

    /// Row vector `1ᵀ (I - A)⁻¹`, i.e. the total downstream reach of one unit
    /// of input at each arm.
    pub fn payoff_weights(&self) -> Result<DVector<f64>> {
        let n = self.n();
        match self.mode {
            StructureMode::StrictUpperTriangularDag => {
                // (I - A)ᵀ c = 1 is lower triangular: forward substitution.
                let mut c = DVector::from_element(n, 1.0);
                for j in 0..n {
                    let mut acc = 1.0;
                    for i in 0..j {
                        acc += self.weights[(i, j)] * c[i];
                    }
                    c[j] = acc;
                }
                Ok(c)
            }
            StructureMode::GeneralDirected => self
                .system_matrix()
                .transpose()
                .lu()
                .solve(&DVector::from_element(n, 1.0))
                .ok_or(Error::Singular),
        }
    }
}

/// Per-arm instantaneous reward law: independent normals with a common
/// standard deviation, truncated to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub std: f64,
}

impl TruncatedNormal {
    /// Mean of the law whose untruncated normal is centred at `location`.
    /// Differs from `location` unless it sits at 0.5 or `std` is zero.
    pub fn mean(&self, location: f64) -> f64 {
        if self.std == 0.0 {
            return location;
        }
        let unit = Normal::new(0.0, 1.0).expect("standard normal");
        let lo = (0.0 - location) / self.std;
        let hi = (1.0 - location) / self.std;
        let mass = unit.cdf(hi) - unit.cdf(lo);
        if mass <= 0.0 {
            return location.clamp(0.0, 1.0);
        }
        location + self.std * (unit.pdf(lo) - unit.pdf(hi)) / mass
    }
}

/// The reward-generating environment.
#[derive(Debug, Clone)]
pub struct SemModel {
    pub adjacency: AdjacencyMatrix,
    pub input_gain: DVector<f64>,
    pub mean_rewards: DVector<f64>,
    pub reward_sampler: TruncatedNormal,
}

impl SemModel {
    /// Model with identity input gain.
    pub fn new(adjacency: AdjacencyMatrix, mean_rewards: DVector<f64>, reward_std: f64) -> Result<Self> {
        let n = adjacency.n();
        Self::with_gain(adjacency, DVector::from_element(n, 1.0), mean_rewards, reward_std)
    }

    pub fn with_gain(
        adjacency: AdjacencyMatrix,
        input_gain: DVector<f64>,
        mean_rewards: DVector<f64>,
        reward_std: f64,
    ) -> Result<Self> {
        let n = adjacency.n();
        for v in [&input_gain, &mean_rewards] {
            if v.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: v.len(),
                });
            }
        }
        if input_gain.iter().any(|g| !g.is_finite()) {
            return Err(Error::Data("input gain must be finite".into()));
        }
        if let Some(b) = mean_rewards.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::Parameter(format!("mean reward {b} outside [0, 1]")));
        }
        if !(reward_std >= 0.0 && reward_std.is_finite()) {
            return Err(Error::Parameter(format!("reward std {reward_std} must be >= 0")));
        }
        Ok(Self {
            adjacency,
            input_gain,
            mean_rewards,
            reward_sampler: TruncatedNormal { std: reward_std },
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    /// Actual per-arm means of the instantaneous rewards after truncation.
    pub fn effective_means(&self) -> DVector<f64> {
        self.mean_rewards.map(|b| self.reward_sampler.mean(b))
    }

    /// Per-arm payoff weights `c[i] = (1ᵀ (I - A)⁻¹)[i] · F[i] · E[b[i]]`.
    pub fn arm_values(&self) -> Result<DVector<f64>> {
        let c = self.adjacency.payoff_weights()?;
        Ok(c.component_mul(&self.input_gain)
            .component_mul(&self.effective_means()))
    }

    pub fn expected_payoff(&self, x: &DecisionVector) -> Result<f64> {
        check_len(self.n(), x.len())?;
        let values = self.arm_values()?;
        Ok(x.indices().into_iter().map(|i| values[i]).sum())
    }

    pub fn optimal_decision(&self, s: usize) -> Result<DecisionVector> {
        top_s_decision(&self.arm_values()?, s)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::Dimension { expected, got })
    } else {
        Ok(())
    }
}

/// Semi-bandit feedback `z = diag(b) x`.
pub fn compute_exogenous(b: &DVector<f64>, x: &DecisionVector) -> Result<DVector<f64>> {
    check_len(b.len(), x.len())?;
    Ok(DVector::from_iterator(
        b.len(),
        b.iter()
            .zip(x.bits())
            .map(|(&bi, &sel)| if sel { bi } else { 0.0 }),
    ))
}

/// Overall rewards `y` solving `(I - A) y = F z`.
pub fn propagate(model: &SemModel, z: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(model.n(), z.len())?;
    model.adjacency.solve(&z.component_mul(&model.input_gain))
}

/// Payoff `1ᵀ y`.
pub fn payoff(y: &DVector<f64>) -> f64 {
    y.sum()
}

/// `1ᵀ (I - A)⁻¹ diag(β) x` with identity input gain.
pub fn expected_payoff(a: &AdjacencyMatrix, beta: &DVector<f64>, x: &DecisionVector) -> Result<f64> {
    check_len(a.n(), beta.len())?;
    check_len(a.n(), x.len())?;
    let c = a.payoff_weights()?;
    Ok(x.indices().into_iter().map(|i| c[i] * beta[i]).sum())
}

/// Indices of the `s` largest weights, ties to the lowest index.
pub fn top_s(weights: &DVector<f64>, s: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // stable sort keeps lower indices first among equal weights
    order.sort_by(|&i, &j| weights[j].total_cmp(&weights[i]));
    order.truncate(s);
    order.sort_unstable();
    order
}

pub(crate) fn top_s_decision(weights: &DVector<f64>, s: usize) -> Result<DecisionVector> {
    let n = weights.len();
    if s == 0 || s > n {
        return Err(Error::Parameter(format!("budget s={s} outside 1..={n}")));
    }
    DecisionVector::from_indices(n, s, &top_s(weights, s))
}

/// Maximizer of the expected payoff over all feasible decisions: the `s`
/// arms with the largest `c[i] β[i]`.
pub fn optimal_decision(a: &AdjacencyMatrix, beta: &DVector<f64>, s: usize) -> Result<DecisionVector> {
    check_len(a.n(), beta.len())?;
    let c = a.payoff_weights()?;
    top_s_decision(&c.component_mul(beta), s)
}

/// Exhaustive search over every decision with at most `s` arms.
///
/// Uses a dense inverse of `I - A`, independent of the triangular solves
/// behind [`optimal_decision`]. Exponential in `N`.
pub fn brute_force_optimal(a: &AdjacencyMatrix, beta: &DVector<f64>, s: usize) -> Result<DecisionVector> {
    let n = a.n();
    check_len(n, beta.len())?;
    if s == 0 || s > n {
        return Err(Error::Parameter(format!("budget s={s} outside 1..={n}")));
    }
    if n >= 64 {
        return Err(Error::Size(1u128 << n.min(127)));
    }
    let inverse = a.system_matrix().try_inverse().ok_or(Error::Singular)?;
    let column_reach: Vec<f64> = (0..n).map(|j| inverse.column(j).sum()).collect();

    let mut best_mask = 0u64;
    let mut best_value = f64::NEG_INFINITY;
    for mask in 0u64..(1u64 << n) {
        if mask.count_ones() as usize > s {
            continue;
        }
        let value: f64 = (0..n)
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| column_reach[i] * beta[i])
            .sum();
        if value > best_value {
            best_value = value;
            best_mask = mask;
        }
    }
    let arms: Vec<usize> = (0..n).filter(|&i| best_mask >> i & 1 == 1).collect();
    DecisionVector::from_indices(n, s, &arms)
}

/// Accumulated exogenous and endogenous observations with per-arm counters.
#[derive(Debug, Clone)]
pub struct FeedbackLog {
    n: usize,
    exo: Vec<f64>,
    endo: Vec<f64>,
    pull_counts: Vec<u64>,
    reward_sums: Vec<f64>,
    empirical_means: Vec<f64>,
    round: usize,
}

impl FeedbackLog {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            exo: Vec::new(),
            endo: Vec::new(),
            pull_counts: vec![0; n],
            reward_sums: vec![0.0; n],
            empirical_means: vec![0.0; n],
            round: 0,
        }
    }

    /// Appends one round of feedback. Arm `i` counts as observed when it was
    /// selected in `x`; its instantaneous reward is `z[i]`.
    pub fn record(&mut self, x: &DecisionVector, z: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        check_len(self.n, x.len())?;
        check_len(self.n, z.len())?;
        check_len(self.n, y.len())?;
        if z.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("feedback contains non-finite values".into()));
        }
        self.exo.extend(z.iter());
        self.endo.extend(y.iter());
        for i in x.indices() {
            self.pull_counts[i] += 1;
            self.reward_sums[i] += z[i];
            self.empirical_means[i] = self.reward_sums[i] / self.pull_counts[i] as f64;
        }
        self.round += 1;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn pull_counts(&self) -> &[u64] {
        &self.pull_counts
    }

    pub fn empirical_means(&self) -> &[f64] {
        &self.empirical_means
    }

    pub fn reward_sums(&self) -> &[f64] {
        &self.reward_sums
    }

    /// `Z_t`, one column per round.
    pub fn exo_history(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.round, &self.exo)
    }

    /// `Y_t`, one column per round.
    pub fn endo_history(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.round, &self.endo)
    }

    pub fn exo_column(&self, t: usize) -> &[f64] {
        &self.exo[t * self.n..(t + 1) * self.n]
    }

    pub fn endo_column(&self, t: usize) -> &[f64] {
        &self.endo[t * self.n..(t + 1) * self.n]
    }
}

/// Per-round expected payoffs and the cumulative regret against the optimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegretReport {
    pub per_round_expected_payoff: Vec<f64>,
    pub optimal_expected_payoff: f64,
    pub cumulative_regret: Vec<f64>,
    pub recovery_mse: Option<Vec<f64>>,
    pub selections: Vec<DecisionVector>,
}

impl RegretReport {
    pub fn new(optimal_expected_payoff: f64) -> Self {
        Self {
            per_round_expected_payoff: Vec::new(),
            optimal_expected_payoff,
            cumulative_regret: Vec::new(),
            recovery_mse: None,
            selections: Vec::new(),
        }
    }

    /// Appends a round with expected payoff `mu_t`.
    pub fn accumulate_regret(&mut self, mu_t: f64) -> Result<()> {
        let optimum = self.optimal_expected_payoff;
        if mu_t > optimum + OPTIMALITY_TOLERANCE {
            return Err(Error::Consistency {
                round: mu_t,
                optimum,
            });
        }
        let previous = self.cumulative_regret.last().copied().unwrap_or(0.0);
        self.per_round_expected_payoff.push(mu_t);
        self.cumulative_regret.push(previous + (optimum - mu_t).max(0.0));
        Ok(())
    }

    pub fn record_selection(&mut self, x: DecisionVector) {
        self.selections.push(x);
    }

    pub fn record_mse(&mut self, mse: f64) {
        self.recovery_mse.get_or_insert_with(Vec::new).push(mse);
    }

    pub fn rounds(&self) -> usize {
        self.cumulative_regret.len()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }

    /// `R_t / t` for the 1-based round `t`.
    pub fn time_averaged_regret(&self, t: usize) -> f64 {
        self.cumulative_regret[t - 1] / t as f64
    }
}
