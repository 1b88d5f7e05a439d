//! Selection policies: SEM-UCB and the structure-blind comparators.

mod baselines;
mod init_matrix;
mod semucb;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sem::{AdjacencyMatrix, DecisionVector};
use crate::SimRng;

pub use baselines::{random_round, Cucb, EpsilonGreedy, OraclePolicy, RandomPolicy, DEFAULT_EPSILON};
pub use init_matrix::{build_initialization_matrix, InitializationMatrix};
pub use semucb::{select_decision, ucb_index, SemUcb, SemUcbConfig, UcbState};

/// A sequential decision maker facing one environment.
pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    /// Decision for the 1-based round `t`.
    fn select(&mut self, t: usize, rng: &mut SimRng) -> Result<DecisionVector>;

    /// Feedback for the decision just played: `z = diag(b) x` and the
    /// overall rewards `y`.
    fn observe(&mut self, x: &DecisionVector, z: &DVector<f64>, y: &DVector<f64>) -> Result<()>;

    /// Current estimate of the mixing matrix, for policies that learn one.
    fn estimate(&self) -> Option<&AdjacencyMatrix> {
        None
    }

    /// Largest payoff weight of a selected arm seen so far.
    fn w_max(&self) -> Option<f64> {
        None
    }

    /// `(unconverged graph solves, spectral rescales)` so far.
    fn diagnostics(&self) -> (usize, usize) {
        (0, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Semucb,
    Cucb,
    Epsgreedy,
    Random,
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Semucb,
        PolicyKind::Cucb,
        PolicyKind::Epsgreedy,
        PolicyKind::Random,
        PolicyKind::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Semucb => "semucb",
            PolicyKind::Cucb => "cucb",
            PolicyKind::Epsgreedy => "epsgreedy",
            PolicyKind::Random => "random",
            PolicyKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_names_round_trip() {
        for kind in PolicyKind::ALL {
            assert_eq!(kind.as_str().parse::<PolicyKind>().unwrap(), kind);
        }
        assert!("dfl-csr".parse::<PolicyKind>().is_err());
        assert_eq!(serde_json::to_string(&PolicyKind::Epsgreedy).unwrap(), "\"epsgreedy\"");
    }
}
