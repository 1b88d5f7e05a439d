use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    enforce_spectral_margin, into_adjacency, penalty_value, FeasibleSet, RegularizerKind,
    RegularizerSpec, SolverSettings, SufficientStats,
};
use crate::error::{Error, Result};
use crate::sem::AdjacencyMatrix;

/// Eigenvalues of `Y Yᵀ` below this fraction of the largest are treated as
/// zero when building the factored objective.
const RANK_CUTOFF: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub adjacency: AdjacencyMatrix,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    /// Cyclic estimate was scaled down to keep `I − Â` invertible.
    pub rescaled: bool,
    pub trace: Vec<TraceRow>,
}

/// The least-squares term in factored form: with `G = Q Λ Qᵀ`,
/// `‖Y − AY − Z‖² = ‖A R − B‖² + offset` where `R = Q Λ^{1/2}` and
/// `B = C Q Λ^{-1/2}`. Differences between iterates are then sums of
/// squares instead of cancellations against `‖Y − Z‖²`.
struct Quadratic {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    factor: DMatrix<f64>,
    target: DMatrix<f64>,
    offset: f64,
    lipschitz: f64,
}

impl Quadratic {
    fn new(stats: &SufficientStats) -> Self {
        let n = stats.n();
        let eigen = stats.gram().clone().symmetric_eigen();
        let top = eigen.eigenvalues.iter().copied().fold(0.0, f64::max);
        let kept: Vec<usize> = (0..n)
            .filter(|&k| eigen.eigenvalues[k] > RANK_CUTOFF * top && eigen.eigenvalues[k] > 0.0)
            .collect();
        let mut factor = DMatrix::zeros(n, kept.len());
        let mut target = DMatrix::zeros(n, kept.len());
        for (col, &k) in kept.iter().enumerate() {
            let q = eigen.eigenvectors.column(k);
            let root = eigen.eigenvalues[k].sqrt();
            factor.set_column(col, &(q * root));
            target.set_column(col, &(stats.cross() * q / root));
        }
        let offset = (stats.residual_energy() - target.norm_squared()).max(0.0);
        Self {
            gram: stats.gram().clone(),
            cross: stats.cross().clone(),
            factor,
            target,
            offset,
            lipschitz: 2.0 * top,
        }
    }

    fn value(&self, a: &DMatrix<f64>) -> f64 {
        (a * &self.factor - &self.target).norm_squared() + self.offset
    }

    /// `−2 (Y − AY − Z) Yᵀ = 2 (A G − C)`.
    fn gradient(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        (a * &self.gram - &self.cross) * 2.0
    }
}

struct Problem<'a> {
    quad: Quadratic,
    reg: &'a RegularizerSpec,
    set: FeasibleSet,
    /// Linear penalty coefficients (DTV) folded into the gradient.
    linear: Option<DMatrix<f64>>,
    dtv: Option<&'a DMatrix<f64>>,
}

impl Problem<'_> {
    fn objective(&self, a: &DMatrix<f64>) -> f64 {
        self.quad.value(a) + penalty_value(a, self.reg, self.dtv)
    }

    /// Gradient step, proximal map of the regularizer, projection.
    fn prox_step(&self, point: &DMatrix<f64>, grad: &DMatrix<f64>, step: f64) -> DMatrix<f64> {
        let mut next = point - grad * step;
        if let Some(linear) = &self.linear {
            next -= linear * step;
        }
        if self.reg.kind == RegularizerKind::L1 {
            // prox of λ‖·‖₁ on the nonnegative orthant: shift down, clip at 0
            next.apply(|v| *v -= self.reg.lambda * step);
        }
        self.set.project(&mut next);
        next
    }
}

/// Projected accelerated proximal gradient with monotone acceptance and
/// function-value restarts. The accepted objective sequence never
/// increases.
pub fn estimate_from_stats(
    stats: &SufficientStats,
    reg: &RegularizerSpec,
    settings: &SolverSettings,
    warm_start: Option<&DMatrix<f64>>,
) -> Result<SolveOutcome> {
    reg.validate()?;
    settings.validate()?;
    let n = stats.n();
    if stats.columns() == 0 {
        return Err(Error::InsufficientData("need at least one column".into()));
    }

    let linear = (reg.kind == RegularizerKind::Dtv).then(|| stats.dtv() * reg.lambda);
    let problem = Problem {
        quad: Quadratic::new(stats),
        reg,
        set: settings.feasible_set,
        linear,
        dtv: Some(stats.dtv()),
    };

    let mut x = match warm_start {
        Some(w) if w.shape() == (n, n) => w.clone(),
        Some(w) => {
            return Err(Error::Dimension {
                expected: n,
                got: w.nrows(),
            })
        }
        None => DMatrix::zeros(n, n),
    };
    problem.set.project(&mut x);
    if x.iter().any(|v| !v.is_finite()) {
        x.fill(0.0);
    }

    let mut lipschitz = if problem.quad.lipschitz > 0.0 {
        problem.quad.lipschitz
    } else {
        1.0
    };
    let mut fx = problem.objective(&x);
    let mut y = x.clone();
    let mut theta = 1.0_f64;
    let mut restarted = true;
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();
    if settings.record_trace {
        trace.push(TraceRow {
            iteration: 0,
            objective: fx,
            step: 1.0 / lipschitz,
        });
    }

    for iteration in 1..=settings.max_iterations {
        iterations = iteration;
        let grad = problem.quad.gradient(&y);
        let fy = problem.quad.value(&y);
        let z = loop {
            let step = 1.0 / lipschitz;
            let candidate = problem.prox_step(&y, &grad, step);
            let diff = &candidate - &y;
            let model = fy + grad.dot(&diff) + 0.5 * lipschitz * diff.norm_squared();
            let actual = problem.quad.value(&candidate);
            if actual <= model + 1e-12 * (1.0 + fy.abs()) || lipschitz > 1e300 {
                break candidate;
            }
            // backtracking fallback
            lipschitz *= 2.0;
        };
        let fz = problem.objective(&z);

        // prox-gradient fixed-point residual
        let residual = (&z - &y).norm();
        let small_step = residual <= settings.tolerance * z.norm().max(1.0);
        if fz <= fx {
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let momentum = (theta - 1.0) / theta_next;
            y = &z + (&z - &x) * momentum;
            x = z;
            theta = theta_next;
            fx = fz;
            restarted = false;
            converged = small_step;
        } else if restarted {
            // a plain step from the best point cannot improve it
            converged = true;
        } else {
            theta = 1.0;
            y = x.clone();
            restarted = true;
        }

        if settings.record_trace {
            trace.push(TraceRow {
                iteration,
                objective: fx,
                step: 1.0 / lipschitz,
            });
        }
        if converged {
            break;
        }
    }

    let mut weights = x;
    let mut rescaled = false;
    if settings.feasible_set == FeasibleSet::NonnegZeroDiagonal {
        rescaled = enforce_spectral_margin(&mut weights);
        if rescaled {
            fx = problem.objective(&weights);
        }
    }
    let adjacency = into_adjacency(weights, settings.feasible_set)?;
    Ok(SolveOutcome {
        adjacency,
        converged,
        iterations,
        objective: fx,
        rescaled,
        trace,
    })
}
