//! Online estimation of the causal mixing matrix.
//!
//! Solves
//!
//! ```text
//! minimize_A  ‖Y − A Y − Z‖²_F + g(A)
//! subject to  A ≥ 0 and the structural zeros of the feasible set
//! ```
//!
//! with an accelerated projected proximal-gradient method. The smooth term
//! only depends on the data through `G = Y Yᵀ`, `C = (Y − Z) Yᵀ` and
//! `‖Y − Z‖²`, which [`SufficientStats`] accumulates column by column, so
//! an online learner pays `O(N³)` per iteration regardless of the history
//! length.

mod solver;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sem::{AdjacencyMatrix, StructureMode};

pub use solver::{estimate_from_stats, SolveOutcome, TraceRow};

/// Spectral radius ceiling enforced on cyclic estimates.
pub const SPECTRAL_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerKind {
    /// `λ ‖A‖₁`
    L1,
    /// Directed total variation `λ Σ A[i,j] Σ_k [Y[i,k] − Y[j,k]]⁺`.
    Dtv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub lambda: f64,
}

impl RegularizerSpec {
    pub fn l1(lambda: f64) -> Self {
        Self {
            kind: RegularizerKind::L1,
            lambda,
        }
    }

    pub fn dtv(lambda: f64) -> Self {
        Self {
            kind: RegularizerKind::Dtv,
            lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!("lambda {} must be >= 0", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeasibleSet {
    /// Nonnegative and strictly upper triangular (acyclic, known order).
    NonnegStrictUpper,
    /// Nonnegative with zero diagonal; cycles allowed.
    NonnegZeroDiagonal,
}

impl FeasibleSet {
    pub fn is_free(self, i: usize, j: usize) -> bool {
        match self {
            FeasibleSet::NonnegStrictUpper => i < j,
            FeasibleSet::NonnegZeroDiagonal => i != j,
        }
    }

    /// Zeroes structurally forbidden cells and clips negatives.
    pub fn project(self, a: &mut DMatrix<f64>) {
        let n = a.nrows();
        for j in 0..a.ncols() {
            for i in 0..n {
                let v = &mut a[(i, j)];
                if !self.is_free(i, j) || *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }

    pub fn contains(self, a: &DMatrix<f64>) -> bool {
        (0..a.nrows()).all(|i| {
            (0..a.ncols()).all(|j| {
                let v = a[(i, j)];
                v >= 0.0 && (self.is_free(i, j) || v == 0.0)
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Stop once the prox-gradient step is at most `tolerance · max(1, ‖A‖_F)`.
    pub tolerance: f64,
    pub feasible_set: FeasibleSet,
    /// Keep a per-iteration `(iteration, objective, step)` trace.
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tolerance: 1e-9,
            feasible_set: FeasibleSet::NonnegStrictUpper,
            record_trace: false,
        }
    }
}

impl SolverSettings {
    pub fn cyclic() -> Self {
        Self {
            feasible_set: FeasibleSet::NonnegZeroDiagonal,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Parameter("max_iterations must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Parameter("tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// Data summaries sufficient for the least-squares objective and the DTV
/// coefficients.
#[derive(Debug, Clone)]
pub struct SufficientStats {
    n: usize,
    columns: usize,
    /// `Y Yᵀ`
    gram: DMatrix<f64>,
    /// `(Y − Z) Yᵀ`
    cross: DMatrix<f64>,
    /// `‖Y − Z‖²_F`
    residual_energy: f64,
    /// `d[i, j] = Σ_k [Y[i,k] − Y[j,k]]⁺`
    dtv: DMatrix<f64>,
}

impl SufficientStats {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            columns: 0,
            gram: DMatrix::zeros(n, n),
            cross: DMatrix::zeros(n, n),
            residual_energy: 0.0,
            dtv: DMatrix::zeros(n, n),
        }
    }

    pub fn from_data(z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        check_data(z, y)?;
        let mut stats = Self::new(z.nrows());
        for k in 0..z.ncols() {
            stats.push_unchecked(z.column(k).as_slice(), y.column(k).as_slice());
        }
        Ok(stats)
    }

    /// Adds one `(z, y)` column.
    pub fn push(&mut self, z: &[f64], y: &[f64]) -> Result<()> {
        for v in [z, y] {
            if v.len() != self.n {
                return Err(Error::Dimension {
                    expected: self.n,
                    got: v.len(),
                });
            }
        }
        if z.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feedback".into()));
        }
        self.push_unchecked(z, y);
        Ok(())
    }

    fn push_unchecked(&mut self, z: &[f64], y: &[f64]) {
        let n = self.n;
        for j in 0..n {
            for i in 0..n {
                self.gram[(i, j)] += y[i] * y[j];
                self.cross[(i, j)] += (y[i] - z[i]) * y[j];
                let diff = y[i] - y[j];
                if diff > 0.0 {
                    self.dtv[(i, j)] += diff;
                }
            }
        }
        self.residual_energy += y.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        self.columns += 1;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    pub fn residual_energy(&self) -> f64 {
        self.residual_energy
    }

    pub fn dtv(&self) -> &DMatrix<f64> {
        &self.dtv
    }
}

fn check_data(z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if z.shape() != y.shape() {
        return Err(Error::Dimension {
            expected: z.nrows() * z.ncols(),
            got: y.nrows() * y.ncols(),
        });
    }
    if z.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite entries in Z or Y".into()));
    }
    Ok(())
}

/// Estimates the mixing matrix from full histories `Z`, `Y` (one column per
/// round), starting from zero.
pub fn estimate_adjacency(
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    reg: &RegularizerSpec,
    settings: &SolverSettings,
) -> Result<SolveOutcome> {
    check_data(z, y)?;
    if z.ncols() == 0 {
        return Err(Error::InsufficientData("need at least one column".into()));
    }
    let stats = SufficientStats::from_data(z, y)?;
    estimate_from_stats(&stats, reg, settings, None)
}

/// `‖A − Â‖²_F / N²`.
pub fn adjacency_mse(truth: &AdjacencyMatrix, estimate: &AdjacencyMatrix) -> Result<f64> {
    matrix_mse(truth.weights(), estimate.weights())
}

pub fn matrix_mse(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    let n = a.nrows() as f64;
    Ok((a - b).norm_squared() / (n * n))
}

/// `d[i, j] = Σ_k max(Y[i,k] − Y[j,k], 0)`.
pub fn dtv_coefficients(y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = y.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        y.row(i)
            .iter()
            .zip(y.row(j).iter())
            .map(|(a, b)| (a - b).max(0.0))
            .sum()
    })
}

/// Regularizer value on `a`; DTV needs the coefficient matrix `d`.
pub fn penalty_value(a: &DMatrix<f64>, reg: &RegularizerSpec, dtv: Option<&DMatrix<f64>>) -> f64 {
    match reg.kind {
        RegularizerKind::L1 => reg.lambda * a.iter().map(|v| v.abs()).sum::<f64>(),
        RegularizerKind::Dtv => {
            let d = dtv.expect("DTV penalty needs coefficients");
            reg.lambda * a.component_mul(d).sum()
        }
    }
}

/// Full objective `‖Y − A Y − Z‖²_F + g(A)` evaluated directly on the data.
pub fn objective_value(
    a: &DMatrix<f64>,
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    reg: &RegularizerSpec,
) -> Result<f64> {
    check_data(z, y)?;
    if a.nrows() != y.nrows() || a.ncols() != y.nrows() {
        return Err(Error::Dimension {
            expected: y.nrows(),
            got: a.nrows(),
        });
    }
    let residual = y - a * y - z;
    let d = matches!(reg.kind, RegularizerKind::Dtv).then(|| dtv_coefficients(y));
    Ok(residual.norm_squared() + penalty_value(a, reg, d.as_ref()))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() || a.amax() == 0.0 {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Scales `a` down so that its spectral radius stays below
/// `1 − SPECTRAL_MARGIN`. Returns whether a rescale happened.
pub fn enforce_spectral_margin(a: &mut DMatrix<f64>) -> bool {
    let rho = spectral_radius(a);
    let ceiling = 1.0 - SPECTRAL_MARGIN;
    if rho >= ceiling {
        *a *= ceiling / rho;
        true
    } else {
        false
    }
}

pub(crate) fn into_adjacency(weights: DMatrix<f64>, set: FeasibleSet) -> Result<AdjacencyMatrix> {
    let mode = match set {
        FeasibleSet::NonnegStrictUpper => StructureMode::StrictUpperTriangularDag,
        FeasibleSet::NonnegZeroDiagonal => StructureMode::GeneralDirected,
    };
    AdjacencyMatrix::new(weights, mode)
}

/// Writes a solver trace as `iteration,objective,step`.
pub fn write_trace_csv(trace: &[TraceRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in trace {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Predicts overall signals `(I − Â)⁻¹ z` for each column of `z`.
pub fn predict(adjacency: &AdjacencyMatrix, z: &DVector<f64>) -> Result<DVector<f64>> {
    adjacency.solve(z)
}
