//! Cost and robustness of the partner-pairing sort: cycle structure of each
//! iteration's permutation (NBDS) and the noisy state-estimation model.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocols::{descending_order, ppa_step, reset_channel};
use crate::state::{tv_distance, DiagonalState, ResetSpec};

pub use crate::permutation::{cycle_decomposition, nbds, Nbds, Permutation};

/// Sort-permutation NBDS over one PPA run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NbdsRecord {
    pub n: usize,
    pub epsilon: f64,
    /// Distinct non-trivial cycle lengths per iteration.
    pub per_iteration_nbds: Vec<usize>,
    /// Same, counting 1-cycles as a block size.
    pub per_iteration_nbds_incl: Vec<usize>,
    pub max_nbds: usize,
    pub iterations_run: usize,
}

impl NbdsRecord {
    pub fn max_nbds_incl(&self) -> usize {
        self.per_iteration_nbds_incl.iter().copied().max().unwrap_or(0)
    }

    /// Rows `n,epsilon,iter,nbds_incl,nbds_excl` (iterations counted from 1).
    pub fn csv_rows(&self) -> String {
        self.per_iteration_nbds
            .iter()
            .zip(&self.per_iteration_nbds_incl)
            .enumerate()
            .map(|(i, (excl, incl))| {
                format!("{},{},{},{},{}\n", self.n, self.epsilon, i + 1, incl, excl)
            })
            .collect()
    }

    pub const CSV_HEADER: &'static str = "n,epsilon,iter,nbds_incl,nbds_excl\n";
}

/// Runs PPA on `n` computation qubits plus the reset qubit and records the
/// NBDS of every sort.
///
/// Stops early once a sort is the identity and leaves the state unchanged:
/// from then on every iteration repeats.
pub fn nbds_trajectory(
    n: usize,
    reset: &ResetSpec,
    initial: &DiagonalState,
    max_iters: usize,
) -> Result<NbdsRecord> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "NBDS analysis needs at least 2 computation qubits, got {n}"
        )));
    }
    if max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }
    if initial.num_qubits() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            actual: initial.num_qubits(),
        });
    }
    let mut excl = Vec::new();
    let mut incl = Vec::new();
    let mut state = initial.clone();
    for _ in 0..max_iters {
        let (next, perm) = ppa_step(&state, reset)?;
        let counts = nbds(&perm);
        excl.push(counts.excl_fixed);
        incl.push(counts.incl_fixed);
        let settled = perm.is_identity() && tv_distance(&state, &next)? <= 1e-15;
        state = next;
        if settled {
            break;
        }
    }
    Ok(NbdsRecord {
        n,
        epsilon: reset.epsilon(),
        max_nbds: excl.iter().copied().max().unwrap_or(0),
        iterations_run: excl.len(),
        per_iteration_nbds: excl,
        per_iteration_nbds_incl: incl,
    })
}

/// A tomography-style estimate `p_i + g_i`, `g_i ~ Normal(0, σ²)` drawn
/// independently per population. `σ = 0` returns the populations untouched
/// without consuming randomness.
pub fn noisy_estimate<R: Rng + ?Sized>(state: &DiagonalState, sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(state.probs().to_vec());
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(state.probs().iter().map(|p| p + noise.sample(rng)).collect())
}

/// PPA with an imperfect state estimate: the sort is computed from the noisy
/// estimate and applied to the true populations, then the reset follows.
pub fn noisy_ppa_step<R: Rng + ?Sized>(
    state: &DiagonalState,
    reset: &ResetSpec,
    sigma: f64,
    rng: &mut R,
) -> Result<(DiagonalState, Permutation)> {
    if sigma == 0.0 {
        return ppa_step(state, reset);
    }
    let estimate = noisy_estimate(state, sigma, rng)?;
    let perm = Permutation::from_order(&descending_order(&estimate))?;
    let permuted = DiagonalState::new(state.num_qubits(), perm.apply(state.probs())?)?;
    Ok((reset_channel(&permuted, reset)?, perm))
}
