//! Population vectors, density matrices and the bath reset state.
//!
//! Basis index `i` of an `m`-qubit register is read big-endian: qubit 0 is
//! the most significant bit. In a cooling register the computation qubits come
//! first and the reset qubit is the last (least significant) one, so
//! neighbouring pairs `(2k, 2k + 1)` differ only in the reset qubit.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;

use crate::error::{parse_err, Error, Result};

/// Entries above `-NEGATIVE_TOLERANCE` are clamped to zero; anything lower is rejected.
pub const NEGATIVE_TOLERANCE: f64 = 1e-14;
/// Allowed deviation of a probability vector (or trace) from one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;
/// Smallest eigenvalue accepted for a density matrix.
pub const PSD_TOLERANCE: f64 = -1e-10;
/// Largest register held as a dense population vector.
pub const MAX_DIAGONAL_QUBITS: usize = 26;
/// Largest register held as a dense density matrix.
pub const MAX_DENSITY_QUBITS: usize = 12;

/// Heat-bath polarization `ε` and its partition constant `z = e^ε + e^-ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResetSpec {
    epsilon: f64,
    z: f64,
    #[serde(skip)]
    excited: f64,
}

impl ResetSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "polarization must be finite and > 0, got {epsilon}"
            )));
        }
        let z = epsilon.exp() + (-epsilon).exp();
        // e^-ε / z written so it stays accurate when ε is large.
        let excited = 1.0 / (1.0 + (2.0 * epsilon).exp());
        Ok(Self {
            epsilon,
            z,
            excited,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// Population `e^ε / z` of the reset qubit's `|0⟩`.
    pub fn ground_population(&self) -> f64 {
        1.0 - self.excited
    }

    /// Population `e^-ε / z` of the reset qubit's `|1⟩`.
    pub fn excited_population(&self) -> f64 {
        self.excited
    }

    pub fn populations(&self) -> [f64; 2] {
        [self.ground_population(), self.excited_population()]
    }
}

/// Populations of the computational basis states of `num_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalState {
    num_qubits: usize,
    probs: Vec<f64>,
}

fn check_num_qubits(num_qubits: usize, max: usize) -> Result<usize> {
    if num_qubits == 0 {
        return Err(Error::InvalidParameter("need at least one qubit".into()));
    }
    if num_qubits > max {
        return Err(Error::OutOfRange(format!(
            "{num_qubits} qubits exceeds the supported maximum of {max}"
        )));
    }
    Ok(1usize << num_qubits)
}

impl DiagonalState {
    /// Validates and stores a probability vector. Tiny negative round-off
    /// (above `-1e-14`) is clamped to zero.
    pub fn new(num_qubits: usize, mut probs: Vec<f64>) -> Result<Self> {
        let dim = check_num_qubits(num_qubits, MAX_DIAGONAL_QUBITS)?;
        if probs.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: probs.len(),
            });
        }
        for (i, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidState(format!("entry {i} is not finite")));
            }
            if *p < -NEGATIVE_TOLERANCE {
                return Err(Error::InvalidState(format!("entry {i} is negative ({p})")));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { num_qubits, probs })
    }

    /// Builds a state from non-negative weights by dividing by their sum.
    pub fn from_weights(num_qubits: usize, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidState(format!(
                "weights must have a positive finite sum, got {total}"
            )));
        }
        if let Some(w) = weights.iter().find(|w| **w < 0.0) {
            return Err(Error::InvalidState(format!("negative weight {w}")));
        }
        Self::new(num_qubits, weights.into_iter().map(|w| w / total).collect())
    }

    /// Output of a trace-preserving step: the sum may only have drifted by
    /// round-off, which is divided out.
    pub(crate) fn renormalized(num_qubits: usize, mut probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Numerical(format!(
                "normalization drifted to {total} in a trace-preserving step"
            )));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(num_qubits, probs)
    }

    /// A point drawn uniformly from the probability simplex.
    pub fn random<R: Rng + ?Sized>(num_qubits: usize, rng: &mut R) -> Result<Self> {
        let dim = check_num_qubits(num_qubits, MAX_DIAGONAL_QUBITS)?;
        let weights: Vec<f64> = (0..dim).map(|_| Exp1.sample(rng)).collect();
        Self::from_weights(num_qubits, weights)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// `self ⊗ other`, with `self` occupying the more significant qubits.
    pub fn tensor(&self, other: &DiagonalState) -> Result<DiagonalState> {
        let num_qubits = self.num_qubits + other.num_qubits;
        check_num_qubits(num_qubits, MAX_DIAGONAL_QUBITS)?;
        let probs = self
            .probs
            .iter()
            .flat_map(|a| other.probs.iter().map(move |b| a * b))
            .collect();
        DiagonalState::renormalized(num_qubits, probs)
    }

    /// Appends a reset qubit at bath polarization.
    pub fn with_reset(&self, reset: &ResetSpec) -> Result<DiagonalState> {
        self.tensor(&DiagonalState {
            num_qubits: 1,
            probs: reset.populations().to_vec(),
        })
    }

    /// Traces out the last qubit: `p_k = λ_{2k} + λ_{2k+1}`.
    pub fn trace_out_last(&self) -> Result<DiagonalState> {
        if self.num_qubits < 2 {
            return Err(Error::InvalidParameter(
                "cannot trace out the only qubit".into(),
            ));
        }
        let probs = self.probs.chunks_exact(2).map(|c| c[0] + c[1]).collect();
        DiagonalState::renormalized(self.num_qubits - 1, probs)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# m={}\n", self.num_qubits);
        for p in &self.probs {
            out.push_str(&format!("{p}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let num_qubits = parse_header(lines.next())?;
        let mut probs = Vec::new();
        for (idx, line) in lines {
            let value = line
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(idx + 1, e.to_string()))?;
            probs.push(value);
        }
        Self::new(num_qubits, probs)
    }
}

fn parse_header(line: Option<(usize, &str)>) -> Result<usize> {
    let (idx, line) = line.ok_or_else(|| parse_err(1, "missing `# m=<num_qubits>` header"))?;
    line.trim()
        .strip_prefix("# m=")
        .and_then(|m| m.trim().parse::<usize>().ok())
        .ok_or_else(|| parse_err(idx + 1, format!("expected `# m=<num_qubits>`, got `{line}`")))
}

/// The product state with every qubit at the bath polarization.
pub fn make_thermal(num_qubits: usize, reset: &ResetSpec) -> Result<DiagonalState> {
    let dim = check_num_qubits(num_qubits, MAX_DIAGONAL_QUBITS)?;
    let eps = reset.epsilon();
    let log_norm = num_qubits as f64 * reset.z().ln();
    // Entries depend only on the Hamming weight, so equal populations stay
    // bit-identical (the partner-pairing sort relies on exact ties here).
    let probs: Vec<f64> = (0..dim)
        .map(|i: usize| {
            let excitations = i.count_ones() as f64;
            (eps * (num_qubits as f64 - 2.0 * excitations) - log_norm).exp()
        })
        .collect();
    DiagonalState::from_weights(num_qubits, probs)
}

pub fn make_maximally_mixed(num_qubits: usize) -> Result<DiagonalState> {
    let dim = check_num_qubits(num_qubits, MAX_DIAGONAL_QUBITS)?;
    DiagonalState::new(num_qubits, vec![1.0 / dim as f64; dim])
}

/// Log-ratio polarization `(1/2) ln(P0 / P1)` of a single qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolarizationReading {
    pub qubit_index: usize,
    pub value: f64,
}

impl PolarizationReading {
    /// The bias `P0 - P1 = tanh(value)`.
    pub fn bias(&self) -> f64 {
        self.value.tanh()
    }
}

/// Inverse of [`PolarizationReading::bias`].
pub fn polarization_from_bias(bias: f64) -> f64 {
    bias.atanh()
}

/// Marginal populations `(P0, P1)` of one qubit.
pub fn marginal_populations(state: &DiagonalState, qubit_index: usize) -> Result<(f64, f64)> {
    if qubit_index >= state.num_qubits() {
        return Err(Error::InvalidParameter(format!(
            "qubit {qubit_index} out of range for {} qubits",
            state.num_qubits()
        )));
    }
    let mask = 1usize << (state.num_qubits() - 1 - qubit_index);
    let (mut p0, mut p1) = (0.0, 0.0);
    for (i, p) in state.probs().iter().enumerate() {
        if i & mask == 0 {
            p0 += p;
        } else {
            p1 += p;
        }
    }
    Ok((p0, p1))
}

pub fn polarization(state: &DiagonalState, qubit_index: usize) -> Result<PolarizationReading> {
    let (p0, p1) = marginal_populations(state, qubit_index)?;
    if p0 <= 0.0 || p1 <= 0.0 {
        return Err(Error::DegenerateMarginal {
            qubit: qubit_index,
            p0,
            p1,
        });
    }
    Ok(PolarizationReading {
        qubit_index,
        value: 0.5 * (p0.ln() - p1.ln()),
    })
}

/// Like [`polarization`] but maps a vanishing marginal to `±inf` instead of
/// failing; used for trajectory bookkeeping.
pub(crate) fn polarization_lenient(state: &DiagonalState, qubit_index: usize) -> f64 {
    match marginal_populations(state, qubit_index) {
        Ok((p0, p1)) => 0.5 * (p0.ln() - p1.ln()),
        Err(_) => f64::NAN,
    }
}

pub fn tv_distance(a: &DiagonalState, b: &DiagonalState) -> Result<f64> {
    tv_distance_slices(a.probs(), b.probs())
}

/// `(1/2) Σ |a_i - b_i|`.
pub fn tv_distance_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Full density matrix of `num_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Checks hermiticity, unit trace and positive semidefiniteness.
    pub fn new(num_qubits: usize, entries: DMatrix<Complex64>) -> Result<Self> {
        let dm = Self::unchecked_psd(num_qubits, entries)?;
        let min = dm.min_eigenvalue();
        if min < PSD_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "density matrix has negative eigenvalue {min}"
            )));
        }
        Ok(dm)
    }

    /// Hermiticity and trace checks only; for outputs of channels, which are
    /// positive by construction.
    pub(crate) fn unchecked_psd(num_qubits: usize, entries: DMatrix<Complex64>) -> Result<Self> {
        let dim = check_num_qubits(num_qubits, MAX_DENSITY_QUBITS)?;
        if entries.nrows() != dim || entries.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: entries.nrows().max(entries.ncols()),
            });
        }
        for i in 0..dim {
            for j in i..dim {
                let diff = entries[(i, j)] - entries[(j, i)].conj();
                if !diff.norm().is_finite() || diff.norm() > HERMITIAN_TOLERANCE {
                    return Err(Error::InvalidState(format!(
                        "not Hermitian at ({i}, {j})"
                    )));
                }
            }
        }
        let trace = entries.trace();
        if (trace.re - 1.0).abs() > NORMALIZATION_TOLERANCE || trace.im.abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidState(format!("trace is {trace}, not 1")));
        }
        Ok(Self {
            num_qubits,
            entries,
        })
    }

    /// Embeds a population vector as a diagonal matrix.
    pub fn from_diagonal(state: &DiagonalState) -> Result<Self> {
        check_num_qubits(state.num_qubits(), MAX_DENSITY_QUBITS)?;
        let diag = nalgebra::DVector::from_iterator(
            state.len(),
            state.probs().iter().map(|p| Complex64::new(*p, 0.0)),
        );
        Ok(Self {
            num_qubits: state.num_qubits(),
            entries: DMatrix::from_diagonal(&diag),
        })
    }

    /// `G G† / tr(G G†)` for a complex Ginibre matrix `G`: full rank with
    /// generic coherences.
    pub fn random<R: Rng + ?Sized>(num_qubits: usize, rng: &mut R) -> Result<Self> {
        let dim = check_num_qubits(num_qubits, MAX_DENSITY_QUBITS)?;
        let g = DMatrix::from_fn(dim, dim, |_, _| {
            Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
        });
        let mut rho = &g * g.adjoint();
        let trace = rho.trace().re;
        rho /= Complex64::new(trace, 0.0);
        // Exact hermiticity; the product is only Hermitian up to round-off.
        let rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        Self::new(num_qubits, rho)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `Tr_last(ρ)` as a raw matrix on the remaining qubits.
    pub fn partial_trace_last(&self) -> Result<DMatrix<Complex64>> {
        if self.num_qubits < 2 {
            return Err(Error::InvalidParameter(
                "cannot trace out the only qubit".into(),
            ));
        }
        let half = self.dim() / 2;
        Ok(DMatrix::from_fn(half, half, |a, b| {
            self.entries[(2 * a, 2 * b)] + self.entries[(2 * a + 1, 2 * b + 1)]
        }))
    }

    /// One line per row, each entry written as `re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# m={}\n", self.num_qubits);
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .map(|j| {
                    let c = self.entries[(i, j)];
                    format!("{},{}", c.re, c.im)
                })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let num_qubits = parse_header(lines.next())?;
        let dim = check_num_qubits(num_qubits, MAX_DENSITY_QUBITS)?;
        let mut values = Vec::with_capacity(dim * dim);
        let mut rows = 0;
        for (idx, line) in lines {
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(idx + 1, e.to_string()))?;
            if fields.len() != 2 * dim {
                return Err(parse_err(
                    idx + 1,
                    format!("expected {} fields, found {}", 2 * dim, fields.len()),
                ));
            }
            values.extend(fields.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])));
            rows += 1;
        }
        if rows != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: rows,
            });
        }
        Self::new(num_qubits, DMatrix::from_row_slice(dim, dim, &values))
    }
}

/// Real parts of the diagonal of `dm`.
pub fn diagonal_of(dm: &DensityMatrix) -> Result<DiagonalState> {
    let probs: Vec<f64> = dm.entries().diagonal().iter().map(|c| c.re).collect();
    DiagonalState::renormalized(dm.num_qubits(), probs).map_err(|_| {
        Error::InvalidState("diagonal of the density matrix is not normalized".into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reset(eps: f64) -> ResetSpec {
        ResetSpec::new(eps).unwrap()
    }

    #[test]
    fn reset_spec_rejects_non_positive_polarization() {
        assert!(ResetSpec::new(0.0).is_err());
        assert!(ResetSpec::new(-0.1).is_err());
        assert!(ResetSpec::new(f64::NAN).is_err());
    }

    #[test]
    fn reset_populations() {
        for eps in [1e-3, 0.02, 0.5, 3.0] {
            let r = reset(eps);
            assert!(r.z() > 2.0);
            let [g, e] = r.populations();
            assert!((g + e - 1.0).abs() <= f64::EPSILON);
            assert!((g - eps.exp() / r.z()).abs() < 1e-15);
            assert!((e - (-eps).exp() / r.z()).abs() < 1e-15);
        }
    }

    #[test]
    fn thermal_single_qubit_is_the_reset_state() {
        let r = reset(0.02);
        let s = make_thermal(1, &r).unwrap();
        let z = 0.02f64.exp() + (-0.02f64).exp();
        assert!((s.probs()[0] - 0.02f64.exp() / z).abs() < 1e-15);
        assert!((s.probs()[1] - (-0.02f64).exp() / z).abs() < 1e-15);
    }

    #[test]
    fn thermal_two_qubits_is_a_tensor_square() {
        let r = reset(0.3);
        let one = make_thermal(1, &r).unwrap();
        let two = make_thermal(2, &r).unwrap();
        let squared = one.tensor(&one).unwrap();
        for (a, b) in two.probs().iter().zip(squared.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((two.probs()[0] - (0.6f64).exp() / r.z().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn thermal_three_qubits_sums_to_one() {
        let s = make_thermal(3, &reset(0.1)).unwrap();
        let total: f64 = s.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(make_thermal(0, &reset(0.1)).is_err());
    }

    #[test]
    fn thermal_ties_are_exact() {
        let s = make_thermal(4, &reset(0.17)).unwrap();
        // 0b0011 and 0b1100 have the same Hamming weight.
        assert_eq!(s.probs()[3].to_bits(), s.probs()[12].to_bits());
    }

    #[test]
    fn maximally_mixed() {
        assert_eq!(make_maximally_mixed(1).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(make_maximally_mixed(2).unwrap().probs(), &[0.25; 4]);
        let s = make_maximally_mixed(4).unwrap();
        for q in 0..4 {
            assert_eq!(polarization(&s, q).unwrap().value, 0.0);
        }
    }

    #[test]
    fn polarization_of_thermal_is_bath_polarization() {
        let r = reset(0.07);
        let s = make_thermal(3, &r).unwrap();
        for q in 0..3 {
            assert!((polarization(&s, q).unwrap().value - 0.07).abs() < 1e-14);
        }
    }

    #[test]
    fn polarization_errors() {
        let s = DiagonalState::new(1, vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            polarization(&s, 0),
            Err(Error::DegenerateMarginal { .. })
        ));
        assert!(polarization(&s, 1).is_err());
    }

    #[test]
    fn bias_conversion_round_trips() {
        let r = reset(0.2);
        let reading = polarization(&make_thermal(1, &r).unwrap(), 0).unwrap();
        let bias = reading.bias();
        let [g, e] = r.populations();
        assert!((bias - (g - e)).abs() < 1e-15);
        assert!((polarization_from_bias(bias) - 0.2).abs() < 1e-14);
    }

    #[test]
    fn polarization_ignores_appended_thermal_qubits() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = reset(0.4);
        let bath = make_thermal(1, &r).unwrap();
        for _ in 0..20 {
            let s = DiagonalState::random(3, &mut rng).unwrap();
            let extended = s.tensor(&bath).unwrap();
            for q in 0..3 {
                let a = polarization(&s, q).unwrap().value;
                let b = polarization(&extended, q).unwrap().value;
                assert!((a - b).abs() < 1e-12, "qubit {q}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn construction_rejects_invalid_vectors() {
        assert!(DiagonalState::new(1, vec![1.1, -0.1]).is_err());
        assert!(DiagonalState::new(1, vec![0.6, 0.6]).is_err());
        assert!(DiagonalState::new(2, vec![0.5, 0.5]).is_err());
        let clamped = DiagonalState::new(1, vec![1.0, -1e-16]).unwrap();
        assert_eq!(clamped.probs()[1], 0.0);
    }

    #[test]
    fn tv_distance_examples() {
        let a = DiagonalState::new(1, vec![0.7, 0.3]).unwrap();
        let b = DiagonalState::new(1, vec![0.6, 0.4]).unwrap();
        assert!((tv_distance(&a, &b).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        let e0 = DiagonalState::new(1, vec![1.0, 0.0]).unwrap();
        let e1 = DiagonalState::new(1, vec![0.0, 1.0]).unwrap();
        assert_eq!(tv_distance(&e0, &e1).unwrap(), 1.0);
        assert!(tv_distance(&a, &make_maximally_mixed(2).unwrap()).is_err());
    }

    #[test]
    fn diagonal_of_examples() {
        let half = DiagonalState::new(1, vec![0.5, 0.5]).unwrap();
        let dm = DensityMatrix::from_diagonal(&half).unwrap();
        assert_eq!(diagonal_of(&dm).unwrap().probs(), &[0.5, 0.5]);

        let c = |re: f64, im: f64| Complex64::new(re, im);
        let coherent = DMatrix::from_row_slice(2, 2, &[c(0.6, 0.0), c(0.1, 0.0), c(0.1, 0.0), c(0.4, 0.0)]);
        let dm = DensityMatrix::new(1, coherent).unwrap();
        assert_eq!(diagonal_of(&dm).unwrap().probs(), &[0.6, 0.4]);
    }

    #[test]
    fn diagonal_of_random_density_matrix_reads_the_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 1..=4 {
            let dm = DensityMatrix::random(m, &mut rng).unwrap();
            let diag = diagonal_of(&dm).unwrap();
            for (i, p) in diag.probs().iter().enumerate() {
                assert!((p - dm.entries()[(i, i)].re).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn diagonal_embedding_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = DiagonalState::random(3, &mut rng).unwrap();
        let back = diagonal_of(&DensityMatrix::from_diagonal(&s).unwrap()).unwrap();
        assert!(tv_distance(&s, &back).unwrap() < 1e-14);
    }

    #[test]
    fn density_matrix_validation() {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let non_hermitian = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.2, 0.0), c(0.5, 0.0)]);
        assert!(DensityMatrix::new(1, non_hermitian).is_err());
        let bad_trace = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.6, 0.0)]);
        assert!(DensityMatrix::new(1, bad_trace).is_err());
        let not_psd = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.9, 0.0), c(0.9, 0.0), c(0.5, 0.0)]);
        assert!(DensityMatrix::new(1, not_psd).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = DiagonalState::random(3, &mut rng).unwrap();
        let back = DiagonalState::from_csv(&s.to_csv()).unwrap();
        for (a, b) in s.probs().iter().zip(back.probs()) {
            assert!((a - b).abs() <= 1e-15);
        }
        let dm = DensityMatrix::random(2, &mut rng).unwrap();
        let back = DensityMatrix::from_csv(&dm.to_csv()).unwrap();
        for (a, b) in dm.entries().iter().zip(back.entries().iter()) {
            assert!((a - b).norm() <= 1e-15);
        }
        assert!(DiagonalState::from_csv("0.5\n0.5\n").is_err());
        assert!(DiagonalState::from_csv("# m=1\n0.5\nabc\n").is_err());
    }
}
