//! Heat-bath algorithmic cooling: diagonal state model, the two-sort and
//! partner-pairing protocols, Markov-chain analysis of the two-sort
//! dynamics and a gate-level synthesis of the two-sort step.

pub mod circuit;
pub mod error;
pub mod markov;
pub mod permutation;
pub mod ppa_analysis;
pub mod protocols;
pub mod state;

pub use error::{Error, Result};
pub use state::{DiagonalState, ResetSpec};
