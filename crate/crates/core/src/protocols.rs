//! Cooling protocols: the bath reset, the fixed two-sort compression (TSAC)
//! and the state-dependent partner-pairing sort (PPA).

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::permutation::{nbds, Nbds, Permutation};
use crate::ppa_analysis::{noisy_estimate, noisy_ppa_step};
use crate::state::{
    polarization_lenient, tv_distance, DensityMatrix, DiagonalState, ResetSpec,
    MAX_DENSITY_QUBITS,
};

/// Relative gap below which two populations count as equal when sorting.
///
/// Populations that are equal in exact arithmetic (the converged partner
/// pairs, Hamming-weight classes of a thermal state) differ by a few ulps in
/// floating point; treating those as ties keeps the stable ordering.
pub const SORT_TIE_RTOL: f64 = 1e-12;

fn require_cooling_register(state: &DiagonalState) -> Result<()> {
    if state.num_qubits() < 2 {
        return Err(Error::InvalidParameter(format!(
            "a cooling register needs at least one computation qubit and the reset qubit, got {} qubit(s)",
            state.num_qubits()
        )));
    }
    Ok(())
}

/// `Tr_R(ρ) ⊗ ρ_R` on populations: merge each pair `(2k, 2k+1)` and split it
/// again with the bath weights.
pub fn reset_channel(state: &DiagonalState, reset: &ResetSpec) -> Result<DiagonalState> {
    require_cooling_register(state)?;
    let [up, down] = reset.populations();
    let probs = state
        .probs()
        .chunks_exact(2)
        .flat_map(|pair| {
            let merged = pair[0] + pair[1];
            [merged * up, merged * down]
        })
        .collect();
    DiagonalState::renormalized(state.num_qubits(), probs)
}

/// Swaps the neighbours `(1, 2), (3, 4), …, (N-3, N-2)`, leaving the first and
/// last population in place.
pub fn two_sort(state: &DiagonalState) -> DiagonalState {
    let mut probs = state.probs().to_vec();
    two_sort_in_place(&mut probs);
    DiagonalState::new(state.num_qubits(), probs).expect("a permutation preserves validity")
}

fn two_sort_in_place<T>(values: &mut [T]) {
    let mut j = 1;
    while j + 2 < values.len() {
        values.swap(j, j + 1);
        j += 2;
    }
}

/// The basis permutation of the two-sort unitary on `num_qubits` qubits.
pub fn two_sort_permutation(num_qubits: usize) -> Permutation {
    let mut map: Vec<usize> = (0..1usize << num_qubits).collect();
    two_sort_in_place(&mut map);
    Permutation::new(map).expect("two-sort is an involution")
}

/// One TSAC iteration: reset, then the two-sort swap.
pub fn tsac_step(state: &DiagonalState, reset: &ResetSpec) -> Result<DiagonalState> {
    Ok(two_sort(&reset_channel(state, reset)?))
}

/// One TSAC iteration on a full density matrix:
/// `U_TS† (Tr_R(ρ) ⊗ ρ_R) U_TS`.
pub fn tsac_step_density(dm: &DensityMatrix, reset: &ResetSpec) -> Result<DensityMatrix> {
    if dm.num_qubits() < 2 {
        return Err(Error::InvalidParameter(
            "a cooling register needs at least two qubits".into(),
        ));
    }
    if dm.num_qubits() > MAX_DENSITY_QUBITS {
        return Err(Error::OutOfRange(format!(
            "density-matrix steps are limited to {MAX_DENSITY_QUBITS} qubits"
        )));
    }
    let reduced = dm.partial_trace_last()?;
    let bath = reset.populations();
    let dim = dm.dim();
    let map = two_sort_permutation(dm.num_qubits());
    let map = map.map();
    let mut out = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            // Only the reset qubit's diagonal survives the tensor with ρ_R.
            if i & 1 != j & 1 {
                continue;
            }
            let value = reduced[(i >> 1, j >> 1)] * bath[i & 1];
            // U_TS is a real symmetric involution: conjugation relabels rows
            // and columns by the same map.
            out[(map[i], map[j])] = value;
        }
    }
    DensityMatrix::unchecked_psd(dm.num_qubits(), out)
}

/// Indices of `values` in non-increasing order. The sort is stable, and
/// entries within [`SORT_TIE_RTOL`] of their neighbour keep their original
/// relative order.
pub fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() {
            let (hi, lo) = (values[order[end - 1]], values[order[end]]);
            if hi - lo > SORT_TIE_RTOL * hi.abs().max(lo.abs()) {
                break;
            }
            end += 1;
        }
        order[start..end].sort_unstable();
        start = end;
    }
    order
}

/// The permutation that puts the populations in non-increasing order.
pub fn ppa_sort_permutation(state: &DiagonalState) -> Permutation {
    Permutation::from_order(&descending_order(state.probs())).expect("sort order is a bijection")
}

/// One PPA iteration: sort the full diagonal, then reset.
pub fn ppa_step(state: &DiagonalState, reset: &ResetSpec) -> Result<(DiagonalState, Permutation)> {
    require_cooling_register(state)?;
    let perm = ppa_sort_permutation(state);
    let sorted = DiagonalState::new(state.num_qubits(), perm.apply(state.probs())?)?;
    Ok((reset_channel(&sorted, reset)?, perm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProtocolKind {
    Tsac,
    Ppa,
    NoisyPpa,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Tsac => "tsac",
            ProtocolKind::Ppa => "ppa",
            ProtocolKind::NoisyPpa => "noisy_ppa",
        }
    }
}

/// One iteration `t → t+1`.
#[derive(Debug, Clone)]
pub struct ProtocolStep {
    pub kind: ProtocolKind,
    /// The compression permutation applied this iteration.
    pub applied_permutation: Arc<Permutation>,
    pub pre_state: DiagonalState,
    pub post_state: DiagonalState,
    pub iteration_index: usize,
}

/// Per-iteration bookkeeping kept for every run. Iteration 0 is the initial
/// state and has no distance or permutation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub iter: usize,
    pub tv_to_prev: Option<f64>,
    pub pol_q0: f64,
    pub nbds: Option<Nbds>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub kind: ProtocolKind,
    pub max_iters: usize,
    /// Stop once consecutive iterates are closer than this in TV distance.
    pub stop_tv: f64,
    /// Standard deviation of the population-estimate noise.
    pub noise_sigma: f64,
    pub rng_seed: u64,
    /// Retain full [`ProtocolStep`]s (states and permutations) as well as
    /// the per-iteration records.
    pub keep_steps: bool,
}

impl RunOptions {
    pub fn new(kind: ProtocolKind, max_iters: usize) -> Self {
        Self {
            kind,
            max_iters,
            stop_tv: 0.0,
            noise_sigma: 0.0,
            rng_seed: 0,
            keep_steps: false,
        }
    }

    pub fn stop_tv(mut self, stop_tv: f64) -> Self {
        self.stop_tv = stop_tv;
        self
    }

    pub fn noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.rng_seed = seed;
        self
    }

    pub fn keep_steps(mut self, keep: bool) -> Self {
        self.keep_steps = keep;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.stop_tv.is_finite() && self.stop_tv >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "stop_tv must be finite and >= 0, got {}",
                self.stop_tv
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.kind == ProtocolKind::Ppa && self.noise_sigma > 0.0 {
            return Err(Error::InvalidParameter(
                "noiseless PPA does not take a noise sigma; use the noisy variant".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub kind: ProtocolKind,
    pub reset: ResetSpec,
    /// Empty unless [`RunOptions::keep_steps`] was set.
    pub steps: Vec<ProtocolStep>,
    pub records: Vec<StepRecord>,
    /// First-qubit polarization, initial state included.
    pub polarization_series: Vec<f64>,
    pub initial_state: DiagonalState,
    pub final_state: DiagonalState,
    /// Whether the run stopped on the TV criterion rather than `max_iters`.
    pub converged: bool,
}

impl Trajectory {
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    /// Columns `iter,tv_to_prev,pol_q0,nbds`; `nbds` counts distinct
    /// non-trivial cycle lengths and is blank for TSAC.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,tv_to_prev,pol_q0,nbds\n");
        for r in &self.records {
            let tv = r.tv_to_prev.map(|v| v.to_string()).unwrap_or_default();
            let nbds = r.nbds.map(|v| v.excl_fixed.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.iter, tv, r.pol_q0, nbds));
        }
        out
    }
}

/// Iterates one protocol from `initial` until consecutive iterates are within
/// `stop_tv` or `max_iters` is reached. Deterministic for a given seed.
pub fn run_protocol(
    initial: &DiagonalState,
    reset: &ResetSpec,
    options: &RunOptions,
) -> Result<Trajectory> {
    options.validate()?;
    require_cooling_register(initial)?;
    let kind = options.kind;
    let mut rng = ChaCha8Rng::seed_from_u64(options.rng_seed);
    let fixed = Arc::new(two_sort_permutation(initial.num_qubits()));

    let pol0 = polarization_lenient(initial, 0);
    let mut records = vec![StepRecord {
        iter: 0,
        tv_to_prev: None,
        pol_q0: pol0,
        nbds: None,
    }];
    let mut polarization_series = vec![pol0];
    let mut steps = Vec::new();
    let mut state = initial.clone();
    let mut converged = false;

    for t in 0..options.max_iters {
        let (next, perm) = match kind {
            ProtocolKind::Tsac => {
                if options.noise_sigma > 0.0 {
                    // The estimate is taken but never consulted.
                    let _ = noisy_estimate(&state, options.noise_sigma, &mut rng);
                }
                (tsac_step(&state, reset)?, Arc::clone(&fixed))
            }
            ProtocolKind::Ppa => {
                let (next, perm) = ppa_step(&state, reset)?;
                (next, Arc::new(perm))
            }
            ProtocolKind::NoisyPpa => {
                let (next, perm) = noisy_ppa_step(&state, reset, options.noise_sigma, &mut rng)?;
                (next, Arc::new(perm))
            }
        };
        let tv = tv_distance(&state, &next)?;
        let pol = polarization_lenient(&next, 0);
        records.push(StepRecord {
            iter: t + 1,
            tv_to_prev: Some(tv),
            pol_q0: pol,
            nbds: (kind != ProtocolKind::Tsac).then(|| nbds(&perm)),
        });
        polarization_series.push(pol);
        if options.keep_steps {
            steps.push(ProtocolStep {
                kind,
                applied_permutation: perm,
                pre_state: state,
                post_state: next.clone(),
                iteration_index: t,
            });
        }
        state = next;
        if tv < options.stop_tv {
            converged = true;
            break;
        }
    }

    Ok(Trajectory {
        kind,
        reset: *reset,
        steps,
        records,
        polarization_series,
        initial_state: initial.clone(),
        final_state: state,
        converged,
    })
}
