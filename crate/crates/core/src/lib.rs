//! Combinatorial semi-bandits whose per-arm rewards are causally coupled
//! through a linear structural equation model.
//!
//! - [`sem`]: the forward model, payoffs, optimal decisions and regret.
//! - [`envgen`]: seeded synthetic environments.
//! - [`graph_learn`]: regularized least-squares estimation of the mixing
//!   matrix (L1 and directed total variation).
//! - [`policies`]: SEM-UCB and structure-blind baselines.
//! - [`harness`]: episodes, λ search, regret bound, report emission.
//! - [`covid`]: regional case-count pipeline (smoothing, KDE, cross
//!   validation, naive comparison).

pub mod covid;
pub mod envgen;
pub mod error;
pub mod graph_learn;
pub mod harness;
pub mod policies;
pub mod sem;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream type used throughout; every stream is explicitly seeded.
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a label.
pub fn derive_seed(base: u64, label: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
