//! The TSAC population dynamics as a Markov chain on the computation
//! register.
//!
//! With the reset qubit traced out, one TSAC iteration maps the computation
//! populations `p` to `T p` where `T` is the column-stochastic tridiagonal
//! matrix
//!
//! ```text
//!        | e^ε   e^ε                     |
//!        | e^-ε  0     e^ε               |
//!  T = 1/z |       e^-ε  0     ⋱          |
//!        |             ⋱     0     e^ε   |
//!        |                   e^-ε  e^-ε  |
//! ```
//!
//! Its spectrum is `{1} ∪ {2 cos(kπ/2^n)/z : k = 1 … 2^n - 1}` and the +1
//! eigenvector is the geometric profile `p_k ∝ e^{-2εk}`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::state::{tv_distance_slices, DiagonalState, ResetSpec, MAX_DIAGONAL_QUBITS};

/// Largest `n` for which [`build_transfer_matrix`] is accepted.
pub const MAX_TRANSFER_QUBITS: usize = 14;
/// Largest `n` for dense eigendecomposition in [`verify_spectrum`].
pub const MAX_SPECTRUM_QUBITS: usize = 10;
/// `(2^n - 1) ε` above this makes the smallest optimal-state population underflow.
pub const MAX_OAS_LOG_RANGE: f64 = 600.0;
/// Numeric eigenvalues with larger imaginary parts are rejected.
pub const IMAGINARY_TOLERANCE: f64 = 1e-9;

/// Tridiagonal column-stochastic transfer matrix, stored by bands.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    n: usize,
    epsilon: f64,
    /// `T[i+1][i]`
    lower: Vec<f64>,
    diag: Vec<f64>,
    /// `T[i][i+1]`
    upper: Vec<f64>,
}

impl TransferMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if row == col {
            self.diag[row]
        } else if row == col + 1 {
            self.lower[col]
        } else if col == row + 1 {
            self.upper[row]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.get(i, j))
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| {
                let mut s = self.diag[j];
                if j > 0 {
                    s += self.upper[j - 1];
                }
                if j + 1 < self.dim() {
                    s += self.lower[j];
                }
                s
            })
            .collect()
    }

    /// Dense export, one row per line.
    pub fn to_csv(&self) -> Result<String> {
        if self.n > MAX_SPECTRUM_QUBITS {
            return Err(Error::OutOfRange(format!(
                "dense export is limited to n <= {MAX_SPECTRUM_QUBITS}"
            )));
        }
        let mut out = String::new();
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim()).map(|j| self.get(i, j).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        Ok(out)
    }
}

fn check_n(n: usize, max: usize) -> Result<usize> {
    if n == 0 || n > max {
        return Err(Error::OutOfRange(format!(
            "number of computation qubits must be in 1..={max}, got {n}"
        )));
    }
    Ok(1usize << n)
}

/// Builds `T` for `n` computation qubits from the TSAC update rule.
pub fn build_transfer_matrix(n: usize, reset: &ResetSpec) -> Result<TransferMatrix> {
    let dim = check_n(n, MAX_TRANSFER_QUBITS)?;
    let [up, down] = reset.populations();
    let mut diag = vec![0.0; dim];
    // p'_0 = (p_0 + p_1) e^ε/z and p'_last = (p_last-1 + p_last) e^-ε/z
    diag[0] = up;
    diag[dim - 1] = down;
    // interior: p'_i = p_{i-1} e^-ε/z + p_{i+1} e^ε/z
    Ok(TransferMatrix {
        n,
        epsilon: reset.epsilon(),
        lower: vec![down; dim - 1],
        diag,
        upper: vec![up; dim - 1],
    })
}

/// Sparse product `T p`.
pub fn apply_transfer(t: &TransferMatrix, p: &[f64]) -> Result<Vec<f64>> {
    let dim = t.dim();
    if p.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: p.len(),
        });
    }
    Ok((0..dim)
        .map(|i| {
            let mut v = t.diag[i] * p[i];
            if i > 0 {
                v += t.lower[i - 1] * p[i - 1];
            }
            if i + 1 < dim {
                v += t.upper[i] * p[i + 1];
            }
            v
        })
        .collect())
}

/// `{1} ∪ {2 cos(kπ/2^n)/z}`, sorted descending.
pub fn analytic_eigenvalues(n: usize, reset: &ResetSpec) -> Result<Vec<f64>> {
    let dim = check_n(n, MAX_DIAGONAL_QUBITS)?;
    let z = reset.z();
    let mut values = Vec::with_capacity(dim);
    values.push(1.0);
    values.extend((1..dim).map(|k| 2.0 * (k as f64 * PI / dim as f64).cos() / z));
    Ok(values)
}

fn log_p0(n: usize, eps: f64) -> f64 {
    let dim = (n as f64).exp2();
    // p0 = (1 - e^{-2ε}) / (1 - e^{-2ε 2^n})
    ((-2.0 * eps).exp_m1() / (-2.0 * eps * dim).exp_m1()).ln()
}

/// The optimal asymptotic state `p_k = p0 e^{-2εk}` on `n` computation qubits.
pub fn oas(n: usize, reset: &ResetSpec) -> Result<DiagonalState> {
    let dim = check_n(n, MAX_DIAGONAL_QUBITS)?;
    let eps = reset.epsilon();
    let range = (dim - 1) as f64 * eps;
    if range > MAX_OAS_LOG_RANGE {
        return Err(Error::OutOfRange(format!(
            "(2^n - 1)·ε = {range} exceeds {MAX_OAS_LOG_RANGE}; the optimal state would underflow"
        )));
    }
    let lp0 = log_p0(n, eps);
    let probs = (0..dim).map(|k| (lp0 - 2.0 * eps * k as f64).exp()).collect();
    DiagonalState::new(n, probs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralGap {
    /// `1 - 2 cos(π/2^n)/z`
    pub gap: f64,
    /// `(z - 2)/z`
    pub lower_bound: f64,
}

pub fn spectral_gap(n: usize, reset: &ResetSpec) -> Result<SpectralGap> {
    if n == 0 || n > 60 {
        return Err(Error::OutOfRange(format!("n must be in 1..=60, got {n}")));
    }
    let z = reset.z();
    let gap = 1.0 - 2.0 * (PI / (n as f64).exp2()).cos() / z;
    let lower_bound = (z - 2.0) / z;
    if gap < lower_bound {
        return Err(Error::Numerical(format!(
            "gap {gap} fell below its bound {lower_bound}"
        )));
    }
    Ok(SpectralGap { gap, lower_bound })
}

fn log_inverse_xi_l(n: usize, reset: &ResetSpec, xi: f64) -> Result<f64> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidParameter(format!("xi must lie in (0, 1), got {xi}")));
    }
    let eps = reset.epsilon();
    // l is the smallest optimal-state population, p0 e^{-2ε(2^n - 1)}
    let log_l = log_p0(n, eps) - 2.0 * ((n as f64).exp2() - 1.0) * eps;
    Ok(-xi.ln() - log_l)
}

/// Upper bound `ln(1/(ξ l)) / Δ` on the iterations needed to come within TV
/// distance `ξ` of the optimal state, using the exact gap.
pub fn mixing_time_bound(n: usize, reset: &ResetSpec, xi: f64) -> Result<f64> {
    let gap = spectral_gap(n, reset)?;
    Ok(log_inverse_xi_l(n, reset, xi)? / gap.gap)
}

/// The same bound with `Δ` replaced by its lower bound `(z-2)/z`.
pub fn mixing_time_bound_loose(n: usize, reset: &ResetSpec, xi: f64) -> Result<f64> {
    let gap = spectral_gap(n, reset)?;
    Ok(log_inverse_xi_l(n, reset, xi)? / gap.lower_bound)
}

/// Numeric spectrum of `T` together with the +1 eigenvector.
///
/// `T` is a birth–death chain, hence similar to a symmetric matrix through
/// the diagonal scaling `D = diag(e^{-εk})`. The eigendecomposition runs on
/// `D⁻¹ T D`: the raw matrix is so non-normal (stationary weights spanning
/// `e^{-2ε 2^n}`) that a general eigensolver returns eigenvalues on the
/// pseudospectral ellipse instead of the real axis.
pub fn numeric_spectrum(t: &TransferMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if t.n() > MAX_SPECTRUM_QUBITS {
        return Err(Error::OutOfRange(format!(
            "dense eigendecomposition is limited to n <= {MAX_SPECTRUM_QUBITS}"
        )));
    }
    let eps = t.epsilon();
    let dim = t.dim();
    let scaled = DMatrix::from_fn(dim, dim, |i, j| {
        t.get(i, j) * (-(eps * (j as f64 - i as f64))).exp()
    });
    let asymmetry = (&scaled - scaled.transpose()).amax();
    if asymmetry > 1e-12 {
        return Err(Error::Numerical(format!(
            "diagonal similarity left an asymmetry of {asymmetry}"
        )));
    }
    let symmetric = (&scaled + scaled.transpose()) * 0.5;
    let eig = SymmetricEigen::new(symmetric);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let top = eig.eigenvectors.column(order[0]);
    let mut vector: Vec<f64> = (0..dim)
        .map(|k| top[k] * (-(eps * k as f64)).exp())
        .collect();
    let total: f64 = vector.iter().sum();
    vector.iter_mut().for_each(|v| *v /= total);
    Ok((values, vector))
}

/// Eigenvalues of the unscaled `T` from a general real eigensolver, sorted
/// descending. Imaginary parts up to [`IMAGINARY_TOLERANCE`] are dropped;
/// anything larger is an error. Only meaningful while `T` is well
/// conditioned (small `n·ε`).
pub fn raw_numeric_eigenvalues(t: &TransferMatrix) -> Result<Vec<f64>> {
    if t.n() > MAX_SPECTRUM_QUBITS {
        return Err(Error::OutOfRange(format!(
            "dense eigendecomposition is limited to n <= {MAX_SPECTRUM_QUBITS}"
        )));
    }
    let mut values = Vec::with_capacity(t.dim());
    for c in t.to_dense().complex_eigenvalues().iter() {
        if c.im.abs() > IMAGINARY_TOLERANCE {
            return Err(Error::Numerical(format!(
                "eigenvalue {c} has a non-negligible imaginary part"
            )));
        }
        values.push(c.re);
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub n: usize,
    pub epsilon: f64,
    pub analytic_eigenvalues: Vec<f64>,
    pub numeric_eigenvalues: Vec<f64>,
    pub gap: f64,
    pub gap_lower_bound: f64,
    /// Largest difference between the sorted analytic and numeric spectra.
    pub max_abs_error: f64,
    /// TV distance between the normalized +1 eigenvector and the optimal state.
    pub stationary_tv_to_oas: f64,
}

impl SpectrumReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Compares the numeric spectrum of `T` with the closed form and the +1
/// eigenvector with the optimal state.
pub fn verify_spectrum(n: usize, reset: &ResetSpec) -> Result<SpectrumReport> {
    check_n(n, MAX_SPECTRUM_QUBITS)?;
    let t = build_transfer_matrix(n, reset)?;
    let analytic = analytic_eigenvalues(n, reset)?;
    let (numeric, stationary) = numeric_spectrum(&t)?;
    let max_abs_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let target = oas(n, reset)?;
    let gap = spectral_gap(n, reset)?;
    Ok(SpectrumReport {
        n,
        epsilon: reset.epsilon(),
        analytic_eigenvalues: analytic,
        numeric_eigenvalues: numeric,
        gap: gap.gap,
        gap_lower_bound: gap.lower_bound,
        max_abs_error,
        stationary_tv_to_oas: tv_distance_slices(&stationary, target.probs())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{polarization, tv_distance_slices};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reset(eps: f64) -> ResetSpec {
        ResetSpec::new(eps).unwrap()
    }

    #[test]
    fn transfer_matrix_at_n2() {
        let eps = 0.3;
        let r = reset(eps);
        let z = r.z();
        let (a, b) = (eps.exp() / z, (-eps).exp() / z);
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[a, a, 0.0, 0.0, b, 0.0, a, 0.0, 0.0, b, 0.0, a, 0.0, 0.0, b, b],
        );
        let t = build_transfer_matrix(2, &r).unwrap().to_dense();
        assert!((t - expect).amax() < 1e-15);
    }

    #[test]
    fn transfer_matrix_at_n1() {
        let r = reset(0.5);
        let t = build_transfer_matrix(1, &r).unwrap();
        let [a, b] = r.populations();
        assert_eq!(t.to_dense(), DMatrix::from_row_slice(2, 2, &[a, a, b, b]));
        assert!(build_transfer_matrix(0, &r).is_err());
        assert!(build_transfer_matrix(15, &r).is_err());
    }

    #[test]
    fn transfer_matrix_is_column_stochastic_and_sparse() {
        for n in 1..=6 {
            let t = build_transfer_matrix(n, &reset(0.17)).unwrap();
            for s in t.column_sums() {
                assert!((s - 1.0).abs() < 1e-14);
            }
            let dense = t.to_dense();
            for j in 0..t.dim() {
                assert!(dense.column(j).iter().filter(|v| **v != 0.0).count() <= 2);
                assert!(dense.column(j).iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn uniform_vector_first_entry() {
        for n in 1..=5 {
            let r = reset(0.2);
            let t = build_transfer_matrix(n, &r).unwrap();
            let dim = t.dim();
            let out = apply_transfer(&t, &vec![1.0 / dim as f64; dim]).unwrap();
            assert!((out[0] - 2.0 * 0.2f64.exp() / (r.z() * dim as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn apply_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = reset(0.3);
        let t = build_transfer_matrix(4, &r).unwrap();
        let p = DiagonalState::random(4, &mut rng).unwrap();
        let dense = t.to_dense() * nalgebra::DVector::from_column_slice(p.probs());
        let sparse = apply_transfer(&t, p.probs()).unwrap();
        for (a, b) in sparse.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(apply_transfer(&t, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn single_qubit_transfer_from_uniform() {
        let r = reset(0.4);
        let t = build_transfer_matrix(1, &r).unwrap();
        let out = apply_transfer(&t, &[0.5, 0.5]).unwrap();
        assert!((out[0] - r.ground_population()).abs() < 1e-15);
        assert!((out[1] - r.excited_population()).abs() < 1e-15);
    }

    #[test]
    fn oas_is_a_fixed_point() {
        for (n, eps) in [(1, 0.1), (3, 0.05), (6, 0.5), (9, 0.2)] {
            let r = reset(eps);
            let p = oas(n, &r).unwrap();
            let t = build_transfer_matrix(n, &r).unwrap();
            let out = apply_transfer(&t, p.probs()).unwrap();
            assert!(tv_distance_slices(&out, p.probs()).unwrap() < 1e-13);
        }
    }

    #[test]
    fn oas_examples() {
        let r = reset(0.1);
        let one = oas(1, &r).unwrap();
        assert!((one.probs()[0] - r.ground_population()).abs() < 1e-15);
        let two = oas(2, &r).unwrap();
        let p0 = (1.0 - (-0.2f64).exp()) / (1.0 - (-0.8f64).exp());
        for (k, p) in two.probs().iter().enumerate() {
            assert!((p - p0 * (-0.2 * k as f64).exp()).abs() < 1e-15);
        }
        assert!(oas(10, &reset(0.6)).is_err());
        assert!(oas(10, &reset(0.5)).is_ok());
    }

    #[test]
    fn oas_first_qubit_polarization() {
        // Brute-force sums of the geometric profile: P0/P1 = e^{2^n ε}.
        for n in 1..=8 {
            for eps in [0.01, 0.1, 0.2] {
                let p = oas(n, &reset(eps)).unwrap();
                let half = p.len() / 2;
                let p0: f64 = p.probs()[..half].iter().sum();
                let p1: f64 = p.probs()[half..].iter().sum();
                let expect = (1usize << (n - 1)) as f64 * eps;
                assert!((0.5 * (p0 / p1).ln() - expect).abs() < 1e-10);
                assert!((polarization(&p, 0).unwrap().value - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn analytic_eigenvalues_examples() {
        let r = reset(0.3);
        let v = analytic_eigenvalues(2, &r).unwrap();
        let s = 2f64.sqrt() / r.z();
        for (a, b) in v.iter().zip([1.0, s, 0.0, -s]) {
            assert!((a - b).abs() < 1e-15);
        }
        let v = analytic_eigenvalues(1, &r).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(v[1].abs() < 1e-16);
        for n in 1..=8 {
            let v = analytic_eigenvalues(n, &r).unwrap();
            assert_eq!(v.iter().filter(|x| **x == 1.0).count(), 1);
            assert!(v[1..].iter().all(|x| x.abs() <= 2.0 / r.z() && x.abs() < 1.0));
        }
    }

    #[test]
    fn numeric_spectrum_matches_closed_form() {
        let report = verify_spectrum(3, &reset(0.1)).unwrap();
        assert!(report.max_abs_error < 1e-10);
        let report = verify_spectrum(2, &reset(0.1)).unwrap();
        assert!(report.max_abs_error < 1e-10);
        let report = verify_spectrum(6, &reset(0.5)).unwrap();
        assert!(report.max_abs_error < 1e-9);
        assert!(report.stationary_tv_to_oas < 1e-10);
        let report = verify_spectrum(1, &reset(0.7)).unwrap();
        assert!(report.max_abs_error < 1e-15);
        assert!(verify_spectrum(11, &reset(0.1)).is_err());
    }

    #[test]
    fn raw_eigensolver_agrees_when_well_conditioned() {
        let r = reset(0.1);
        let t = build_transfer_matrix(3, &r).unwrap();
        let raw = raw_numeric_eigenvalues(&t).unwrap();
        let analytic = analytic_eigenvalues(3, &r).unwrap();
        for (a, b) in raw.iter().zip(&analytic) {
            assert!((a - b).abs() < 1e-10, "{raw:?}");
        }
    }

    #[test]
    fn spectral_gap_examples() {
        let r = reset(0.5);
        let g = spectral_gap(1, &r).unwrap();
        assert!((g.gap - 1.0).abs() < 1e-15);
        assert!((g.lower_bound - (r.z() - 2.0) / r.z()).abs() < 1e-16);

        let r = reset(0.02);
        let g = spectral_gap(2, &r).unwrap();
        let z = 0.02f64.exp() + (-0.02f64).exp();
        assert!((g.gap - (1.0 - 2f64.sqrt() / z)).abs() < 1e-15);
        assert!((g.gap - 0.2930).abs() < 1e-4);

        let r = reset(0.1);
        let g = spectral_gap(14, &r).unwrap();
        assert!((g.gap - g.lower_bound).abs() < 1e-6);
    }

    #[test]
    fn mixing_bound_examples() {
        let r = reset(0.1);
        let expect = (1.0 / (1e-3 * (-0.1f64).exp() / r.z())).ln();
        assert!((mixing_time_bound(1, &r, 1e-3).unwrap() - expect).abs() < 1e-9);
        assert!(mixing_time_bound(2, &r, 0.0).is_err());
        assert!(mixing_time_bound(2, &r, 1.0).is_err());
        let tight = mixing_time_bound(4, &r, 1e-3).unwrap();
        let loose = mixing_time_bound_loose(4, &r, 1e-3).unwrap();
        assert!(tight <= loose);
    }

    #[test]
    fn mixing_bound_grows_like_two_to_the_n() {
        let r = reset(0.1);
        let ratios: Vec<f64> = (9..=13)
            .map(|n| {
                mixing_time_bound(n + 1, &r, 1e-6).unwrap() / mixing_time_bound(n, &r, 1e-6).unwrap()
            })
            .collect();
        assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
        assert!(ratios.iter().all(|q| (1.8..=2.2).contains(q)), "{ratios:?}");
        assert!((ratios.last().unwrap() - 2.0).abs() < 0.05, "{ratios:?}");
    }

    #[test]
    fn powers_stay_column_stochastic() {
        let t = build_transfer_matrix(3, &reset(0.3)).unwrap();
        for j in 0..t.dim() {
            let mut v = vec![0.0; t.dim()];
            v[j] = 1.0;
            for _ in 0..10_000 {
                v = apply_transfer(&t, &v).unwrap();
            }
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn report_serializes() {
        let json = verify_spectrum(2, &reset(0.1)).unwrap().to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["analytic_eigenvalues"].as_array().unwrap().len(), 4);
        let csv = build_transfer_matrix(1, &reset(0.1)).unwrap().to_csv().unwrap();
        assert_eq!(csv.lines().count(), 2);
    }
}
