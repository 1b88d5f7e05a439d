use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sem::{top_s, AdjacencyMatrix, DecisionVector};

pub const BLOCK_DAYS: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSplit {
    /// Sorted training day indices, including any tail after the last block.
    pub train: Vec<usize>,
    /// Sorted validation day indices, one per block.
    pub validation: Vec<usize>,
    pub blocks: Vec<std::ops::Range<usize>>,
}

impl CvSplit {
    pub fn is_validation(&self, day: usize) -> bool {
        self.validation.binary_search(&day).is_ok()
    }
}

/// Consecutive 11-day blocks with one uniformly chosen validation day each.
pub fn make_cv_split<R: Rng + ?Sized>(t: usize, rng: &mut R) -> Result<CvSplit> {
    if t < BLOCK_DAYS {
        return Err(Error::InsufficientData(format!("{t} days is shorter than one {BLOCK_DAYS}-day block")));
    }
    let blocks: Vec<_> = (0..t / BLOCK_DAYS)
        .map(|b| b * BLOCK_DAYS..(b + 1) * BLOCK_DAYS)
        .collect();
    let validation: Vec<usize> = blocks.iter().map(|b| rng.random_range(b.clone())).collect();
    let train = (0..t).filter(|d| validation.binary_search(d).is_err()).collect();
    Ok(CvSplit {
        train,
        validation,
        blocks,
    })
}

/// `ŷ = (I − Â)⁻¹ z`.
pub fn predict_day(adjacency: &AdjacencyMatrix, z: &DVector<f64>) -> Result<DVector<f64>> {
    adjacency.solve(z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionErrors {
    /// `(day, ‖y − ŷ‖₁ / N)` for each validation day.
    pub per_day: Vec<(usize, f64)>,
    pub mean: f64,
}

/// Mean absolute prediction error over `days`, with `z` and `y` given as
/// `N × T` matrices.
pub fn prediction_error(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    adjacency: &AdjacencyMatrix,
    days: &[usize],
) -> Result<PredictionErrors> {
    let n = adjacency.n();
    if y.shape() != z.shape() || y.nrows() != n {
        return Err(Error::Dimension {
            expected: n,
            got: y.nrows(),
        });
    }
    if days.is_empty() {
        return Err(Error::InsufficientData("no validation days".into()));
    }
    let mut per_day = Vec::with_capacity(days.len());
    for &day in days {
        if day >= y.ncols() {
            return Err(Error::Parameter(format!("day {day} outside the panel")));
        }
        let y_hat = predict_day(adjacency, &z.column(day).into_owned())?;
        let l1: f64 = (y.column(day) - y_hat).abs().sum();
        per_day.push((day, l1 / n as f64));
    }
    let mean = per_day.iter().map(|(_, e)| e).sum::<f64>() / per_day.len() as f64;
    Ok(PredictionErrors { per_day, mean })
}

/// Per-region contributions `(1ᵀ (I − Â)⁻¹)[j] · z[j]`; they sum to `1ᵀ ŷ`.
pub fn contributions(adjacency: &AdjacencyMatrix, z: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(adjacency.payoff_weights()?.component_mul(z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub day: usize,
    /// `None` when the day's total is zero.
    pub semucb: Option<f64>,
    pub naive: Option<f64>,
    pub naive_selection: Vec<usize>,
}

/// Contribution share of SEM-UCB's selection against the naive choice of
/// the `s` regions with the most overall cases on the same day.
pub fn naive_comparison(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    adjacency: &AdjacencyMatrix,
    semucb_selections: &[DecisionVector],
    s: usize,
) -> Result<Vec<RatioRow>> {
    if semucb_selections.len() != y.ncols() || z.shape() != y.shape() {
        return Err(Error::Dimension {
            expected: y.ncols(),
            got: semucb_selections.len(),
        });
    }
    let weights = adjacency.payoff_weights()?;
    let mut rows = Vec::with_capacity(y.ncols());
    for (day, x) in semucb_selections.iter().enumerate() {
        let y_t = y.column(day).into_owned();
        let share = weights.component_mul(&z.column(day));
        let total = y_t.sum();
        let naive_selection = top_s(&y_t, s);
        let ratio = |arms: &[usize]| (total > 0.0).then(|| arms.iter().map(|&j| share[j]).sum::<f64>() / total);
        rows.push(RatioRow {
            day,
            semucb: ratio(&x.indices()),
            naive: ratio(&naive_selection),
            naive_selection,
        });
    }
    Ok(rows)
}
