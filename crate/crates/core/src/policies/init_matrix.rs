use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sem::DecisionVector;

/// Warm-up schedule: column `t` is played in round `t`.
///
/// Upper triangular with a unit diagonal. Column `i` (1-based) has all of its
/// above-diagonal cells set when `i <= s`, and `s − 1` of them chosen at
/// random otherwise, so every column selects `min(i, s)` arms.
#[derive(Debug, Clone, PartialEq)]
pub struct InitializationMatrix {
    columns: DMatrix<f64>,
    budget: usize,
}

pub fn build_initialization_matrix<R: Rng + ?Sized>(
    n: usize,
    s: usize,
    rng: &mut R,
) -> Result<InitializationMatrix> {
    if s == 0 || s > n {
        return Err(Error::Parameter(format!("budget s={s} outside 1..={n}")));
    }
    let mut m = DMatrix::zeros(n, n);
    for col in 0..n {
        m[(col, col)] = 1.0;
        if col < s {
            for row in 0..col {
                m[(row, col)] = 1.0;
            }
        } else {
            for row in rand::seq::index::sample(rng, col, s - 1) {
                m[(row, col)] = 1.0;
            }
        }
    }
    Ok(InitializationMatrix {
        columns: m,
        budget: s,
    })
}

impl InitializationMatrix {
    pub fn n(&self) -> usize {
        self.columns.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// Decision for the 1-based warm-up round `t`.
    pub fn decision(&self, t: usize) -> Result<DecisionVector> {
        if t == 0 || t > self.n() {
            return Err(Error::Parameter(format!("warm-up round {t} outside 1..={}", self.n())));
        }
        let bits = self.columns.column(t - 1).iter().map(|&v| v != 0.0).collect();
        DecisionVector::from_bits(bits, self.budget)
    }
}
