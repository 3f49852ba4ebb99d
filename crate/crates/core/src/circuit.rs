//! Gate-level synthesis of the two-sort unitary.
//!
//! `U_TS = SHIFT₊₁ · X_last · MCX · SHIFT₋₁`: shifting every basis label down
//! by one turns the neighbour swaps `(1,2), (3,4), …` into `(0,1), (2,3), …`
//! restricted to labels below `N-2`, which is "flip the last qubit unless all
//! other qubits are 1".
//!
//! Qubit 0 is the most significant bit of a basis label.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{parse_err, Error, Result};
use crate::permutation::Permutation;

/// Largest register for dense reconstruction.
pub const MAX_UNITARY_QUBITS: usize = 10;
/// Largest register for the bit-level simulator.
pub const MAX_CLASSICAL_QUBITS: usize = 24;
const MAX_SYNTH_QUBITS: usize = 62;

pub type ComplexMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GateKind {
    X,
    H,
    Cx,
    Ccx,
    CPhase(f64),
    Rz(f64),
    Mcx { num_controls: usize },
}

impl GateKind {
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::X => "X",
            GateKind::H => "H",
            GateKind::Cx => "CX",
            GateKind::Ccx => "CCX",
            GateKind::CPhase(_) => "CPHASE",
            GateKind::Rz(_) => "RZ",
            GateKind::Mcx { .. } => "MCX",
        }
    }

    fn angle(&self) -> Option<f64> {
        match self {
            GateKind::CPhase(t) | GateKind::Rz(t) => Some(*t),
            _ => None,
        }
    }

    fn num_controls(&self) -> usize {
        match self {
            GateKind::X | GateKind::H | GateKind::Rz(_) => 0,
            GateKind::Cx | GateKind::CPhase(_) => 1,
            GateKind::Ccx => 2,
            GateKind::Mcx { num_controls } => *num_controls,
        }
    }

    /// X, CX, CCX and MCX permute basis states.
    pub fn is_classical(&self) -> bool {
        matches!(self, GateKind::X | GateKind::Cx | GateKind::Ccx | GateKind::Mcx { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub controls: Vec<usize>,
}

impl Gate {
    pub fn x(target: usize) -> Self {
        Self::raw(GateKind::X, target, vec![])
    }

    pub fn h(target: usize) -> Self {
        Self::raw(GateKind::H, target, vec![])
    }

    pub fn cx(control: usize, target: usize) -> Self {
        Self::raw(GateKind::Cx, target, vec![control])
    }

    pub fn ccx(c0: usize, c1: usize, target: usize) -> Self {
        Self::raw(GateKind::Ccx, target, vec![c0, c1])
    }

    pub fn cphase(control: usize, target: usize, theta: f64) -> Self {
        Self::raw(GateKind::CPhase(theta), target, vec![control])
    }

    pub fn rz(target: usize, theta: f64) -> Self {
        Self::raw(GateKind::Rz(theta), target, vec![])
    }

    /// X on `target` conditioned on all `controls`, using the smallest gate
    /// kind that fits.
    pub fn controlled_x(controls: &[usize], target: usize) -> Self {
        match controls {
            [] => Self::x(target),
            [c] => Self::cx(*c, target),
            [a, b] => Self::ccx(*a, *b, target),
            _ => Self::raw(
                GateKind::Mcx {
                    num_controls: controls.len(),
                },
                target,
                controls.to_vec(),
            ),
        }
    }

    fn raw(kind: GateKind, target: usize, controls: Vec<usize>) -> Self {
        Self {
            kind,
            targets: vec![target],
            controls,
        }
    }

    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        if self.targets.len() != 1 {
            return Err(Error::InvalidGate(format!(
                "{} needs exactly one target, got {:?}",
                self.kind.name(),
                self.targets
            )));
        }
        if self.controls.len() != self.kind.num_controls() {
            return Err(Error::InvalidGate(format!(
                "{} needs {} controls, got {:?}",
                self.kind.name(),
                self.kind.num_controls(),
                self.controls
            )));
        }
        if let Some(theta) = self.kind.angle() {
            if !theta.is_finite() {
                return Err(Error::InvalidGate(format!("angle {theta} is not finite")));
            }
        }
        let mut seen = vec![false; num_qubits];
        for &q in self.targets.iter().chain(&self.controls) {
            if q >= num_qubits {
                return Err(Error::InvalidGate(format!(
                    "qubit {q} outside a {num_qubits}-qubit register"
                )));
            }
            if std::mem::replace(&mut seen[q], true) {
                return Err(Error::InvalidGate(format!(
                    "qubit {q} used twice in {}",
                    self.kind.name()
                )));
            }
        }
        Ok(())
    }

    pub fn target(&self) -> usize {
        self.targets[0]
    }

    pub fn adjoint(&self) -> Self {
        let kind = match self.kind {
            GateKind::CPhase(t) => GateKind::CPhase(-t),
            GateKind::Rz(t) => GateKind::Rz(-t),
            k => k,
        };
        Self {
            kind,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateCounts {
    pub per_kind: BTreeMap<String, usize>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateSequence {
    num_qubits: usize,
    gates: Vec<Gate>,
}

impl GateSequence {
    pub fn new(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            gates: Vec::new(),
        }
    }

    pub fn from_gates(num_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        let mut seq = Self::new(num_qubits);
        for g in gates {
            seq.push(g)?;
        }
        Ok(seq)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.validate(self.num_qubits)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn counts(&self) -> GateCounts {
        let mut per_kind = BTreeMap::new();
        for g in &self.gates {
            *per_kind.entry(g.kind.name().to_string()).or_insert(0) += 1;
        }
        GateCounts {
            per_kind,
            total: self.gates.len(),
        }
    }

    /// Reversed order with negated angles.
    pub fn adjoint(&self) -> Self {
        Self {
            num_qubits: self.num_qubits,
            gates: self.gates.iter().rev().map(Gate::adjoint).collect(),
        }
    }

    /// Appends `other`, which runs after `self`.
    pub fn extend(&mut self, other: &GateSequence) -> Result<()> {
        if other.num_qubits != self.num_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.num_qubits,
                actual: other.num_qubits,
            });
        }
        self.gates.extend_from_slice(&other.gates);
        Ok(())
    }

    /// Netlist text: a `qubits <n>` header, then `KIND q<targets> c<controls> [theta]`
    /// per gate.
    pub fn to_netlist(&self) -> String {
        let mut out = format!("qubits {}\n", self.num_qubits);
        for g in &self.gates {
            let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
            let _ = write!(out, "{} q{} c{}", g.kind.name(), join(&g.targets), join(&g.controls));
            if let Some(theta) = g.kind.angle() {
                let _ = write!(out, " {theta:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_netlist(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (line, header) = lines.next().ok_or_else(|| parse_err(1, "empty netlist"))?;
        let num_qubits = header
            .strip_prefix("qubits ")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| parse_err(line, "expected `qubits <n>`"))?;
        let mut seq = Self::new(num_qubits);
        for (line, text) in lines {
            let fields: Vec<&str> = text.split_whitespace().collect();
            if fields.len() < 3 {
                return Err(parse_err(line, "expected `KIND q<targets> c<controls> [theta]`"));
            }
            let list = |field: &str, prefix: char| -> Result<Vec<usize>> {
                let body = field
                    .strip_prefix(prefix)
                    .ok_or_else(|| parse_err(line, format!("expected `{prefix}` list, got `{field}`")))?;
                if body.is_empty() {
                    return Ok(vec![]);
                }
                body.split(',')
                    .map(|v| v.parse().map_err(|_| parse_err(line, format!("bad qubit `{v}`"))))
                    .collect()
            };
            let targets = list(fields[1], 'q')?;
            let controls = list(fields[2], 'c')?;
            let theta = || -> Result<f64> {
                fields
                    .get(3)
                    .ok_or_else(|| parse_err(line, "missing angle"))?
                    .parse()
                    .map_err(|_| parse_err(line, "bad angle"))
            };
            let expected_fields = match fields[0] {
                "CPHASE" | "RZ" => 4,
                _ => 3,
            };
            if fields.len() != expected_fields {
                return Err(parse_err(line, format!("wrong field count for {}", fields[0])));
            }
            let kind = match fields[0] {
                "X" => GateKind::X,
                "H" => GateKind::H,
                "CX" => GateKind::Cx,
                "CCX" => GateKind::Ccx,
                "CPHASE" => GateKind::CPhase(theta()?),
                "RZ" => GateKind::Rz(theta()?),
                "MCX" => GateKind::Mcx {
                    num_controls: controls.len(),
                },
                other => return Err(parse_err(line, format!("unknown gate `{other}`"))),
            };
            seq.push(Gate {
                kind,
                targets,
                controls,
            })
            .map_err(|e| parse_err(line, e.to_string()))?;
        }
        Ok(seq)
    }

    /// OpenQASM 2 text. Multi-controlled X macros are written as `mcx`, which
    /// plain `qelib1.inc` does not define; expand them first for strict tools.
    pub fn to_qasm(&self) -> String {
        let mut out = format!(
            "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[{}];\n",
            self.num_qubits
        );
        for g in &self.gates {
            let qubits: Vec<String> = g
                .controls
                .iter()
                .chain(&g.targets)
                .map(|q| format!("q[{q}]"))
                .collect();
            let args = qubits.join(",");
            let _ = match g.kind {
                GateKind::X => writeln!(out, "x {args};"),
                GateKind::H => writeln!(out, "h {args};"),
                GateKind::Cx => writeln!(out, "cx {args};"),
                GateKind::Ccx => writeln!(out, "ccx {args};"),
                GateKind::CPhase(t) => writeln!(out, "cu1({t:?}) {args};"),
                GateKind::Rz(t) => writeln!(out, "rz({t:?}) {args};"),
                GateKind::Mcx { .. } => writeln!(out, "mcx {args};"),
            };
        }
        out
    }
}

fn check_synth(num_qubits: usize, min: usize) -> Result<()> {
    if num_qubits < min || num_qubits > MAX_SYNTH_QUBITS {
        return Err(Error::OutOfRange(format!(
            "register size must be in {min}..={MAX_SYNTH_QUBITS}, got {num_qubits}"
        )));
    }
    Ok(())
}

fn phase_ladder(num_qubits: usize, sign: f64) -> GateSequence {
    let mut seq = GateSequence::new(num_qubits);
    for j in 0..num_qubits {
        seq.gates.push(Gate::h(j));
        for k in j + 1..num_qubits {
            seq.gates
                .push(Gate::cphase(k, j, sign * PI / (1u64 << (k - j)) as f64));
        }
    }
    seq
}

/// H plus controlled-phase ladder without the final swap layer. The result
/// is `R·F`, the DFT `F_{xy} = ω^{xy}/√N` (`ω = e^{2πi/N}`) followed by the
/// qubit-order reversal `R`.
pub fn synth_qft(num_qubits: usize) -> Result<GateSequence> {
    check_synth(num_qubits, 1)?;
    Ok(phase_ladder(num_qubits, 1.0))
}

/// The ladder with negated angles, `R·F†`.
pub fn synth_inverse_qft(num_qubits: usize) -> Result<GateSequence> {
    check_synth(num_qubits, 1)?;
    Ok(phase_ladder(num_qubits, -1.0))
}

/// `|x⟩ ↦ |x + m mod 2^num_qubits⟩`: inverse ladder, one RZ per qubit, then
/// the adjoint ladder. Exact up to a global phase.
pub fn synth_shift(m: i64, num_qubits: usize) -> Result<GateSequence> {
    check_synth(num_qubits, 1)?;
    let modulus = 1i128 << num_qubits;
    let s = (m as i128).rem_euclid(modulus) as f64;
    let ladder = phase_ladder(num_qubits, -1.0);
    let mut seq = ladder.clone();
    for j in 0..num_qubits {
        let theta = -2.0 * PI * s / ((num_qubits - j) as f64).exp2();
        seq.gates.push(Gate::rz(j, theta));
    }
    seq.extend(&ladder.adjoint())?;
    Ok(seq)
}

/// X on the last qubit conditioned on all others, as one macro gate.
pub fn synth_mcx(num_qubits: usize) -> Result<GateSequence> {
    check_synth(num_qubits, 1)?;
    let controls: Vec<usize> = (0..num_qubits - 1).collect();
    GateSequence::from_gates(num_qubits, vec![Gate::controlled_x(&controls, num_qubits - 1)])
}

/// The two-sort unitary on `num_qubits` qubits.
pub fn synth_two_sort(num_qubits: usize) -> Result<GateSequence> {
    check_synth(num_qubits, 2)?;
    let mut seq = synth_shift(-1, num_qubits)?;
    seq.extend(&synth_mcx(num_qubits)?)?;
    seq.push(Gate::x(num_qubits - 1))?;
    seq.extend(&synth_shift(1, num_qubits)?)?;
    Ok(seq)
}

/// A sequence over `{X, CX, CCX}` plus the non-classical gates of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub sequence: GateSequence,
    /// Extra qubit appended when some MCX touched every qubit of the
    /// register. It is borrowed: any input state on it is restored.
    pub ancilla: Option<usize>,
}

/// Rewrites every MCX with three or more controls into Toffolis.
///
/// A `k`-control gate is split across one borrowed qubit `a` into
/// `C^{k₁}X(a) · C^{k₂+1}X(t) · C^{k₁}X(a) · C^{k₂+1}X(t)` with
/// `k₁ = ⌈k/2⌉`, `k₂ = ⌊k/2⌋`; each half has enough idle qubits to run the
/// borrowed-ancilla Toffoli chain, so the cost is linear in `k`.
pub fn expand_mcx(seq: &GateSequence) -> Result<Expansion> {
    let n = seq.num_qubits();
    let needs_extra = seq
        .gates()
        .iter()
        .any(|g| g.controls.len() >= 3 && g.controls.len() + 1 >= n);
    let total = if needs_extra { n + 1 } else { n };
    let mut out = GateSequence::new(total);
    for g in seq.gates() {
        if g.controls.len() < 3 {
            out.push(g.clone())?;
            continue;
        }
        let used: Vec<usize> = g.controls.iter().chain(&g.targets).copied().collect();
        let a = (0..total)
            .find(|q| !used.contains(q))
            .expect("an idle qubit exists");
        let k1 = g.controls.len().div_ceil(2);
        let (first, second) = g.controls.split_at(k1);
        let mut second: Vec<usize> = second.to_vec();
        second.push(a);
        let t = g.target();
        for _ in 0..2 {
            borrowed_chain(&mut out, first, a)?;
            borrowed_chain(&mut out, &second, t)?;
        }
    }
    Ok(Expansion {
        sequence: out,
        ancilla: needs_extra.then_some(n),
    })
}

/// `C^kX` from `4(k-2)` Toffolis using `k-2` idle qubits whose state is
/// arbitrary and gets restored.
fn borrowed_chain(out: &mut GateSequence, controls: &[usize], target: usize) -> Result<()> {
    let k = controls.len();
    if k <= 2 {
        return out.push(Gate::controlled_x(controls, target));
    }
    let busy: Vec<usize> = controls.iter().copied().chain([target]).collect();
    let idle: Vec<usize> = (0..out.num_qubits())
        .filter(|q| !busy.contains(q))
        .take(k - 2)
        .collect();
    if idle.len() < k - 2 {
        return Err(Error::InvalidGate(format!(
            "{k}-control gate needs {} idle qubits",
            k - 2
        )));
    }
    // chain[i] writes into idle[i] (or the target for the last link)
    let link = |i: usize| -> Gate {
        if i == 0 {
            Gate::ccx(controls[0], controls[1], idle[0])
        } else {
            let dest = if i == k - 2 { target } else { idle[i] };
            Gate::ccx(controls[i + 1], idle[i - 1], dest)
        }
    };
    let top = k - 2;
    for round in 0..2 {
        let hi = if round == 0 { top } else { top - 1 };
        for i in (1..=hi).rev() {
            out.push(link(i))?;
        }
        out.push(link(0))?;
        for i in 1..=hi {
            out.push(link(i))?;
        }
    }
    Ok(())
}

/// `u ⊗ I₂` when the expansion appended a borrowed wire, otherwise `u`.
pub fn widen_for(u: &ComplexMatrix, expansion: &Expansion) -> ComplexMatrix {
    match expansion.ancilla {
        Some(_) => u.kronecker(&ComplexMatrix::identity(2, 2)),
        None => u.clone(),
    }
}

/// Counts per kind, optionally after [`expand_mcx`].
pub fn gate_count(seq: &GateSequence, expand: bool) -> Result<GateCounts> {
    if expand {
        Ok(expand_mcx(seq)?.sequence.counts())
    } else {
        Ok(seq.counts())
    }
}

fn bit(num_qubits: usize, q: usize) -> usize {
    1 << (num_qubits - 1 - q)
}

fn apply_gate(g: &Gate, num_qubits: usize, amps: &mut [Complex64]) {
    let cmask = g.controls.iter().fold(0, |m, &c| m | bit(num_qubits, c));
    let t = bit(num_qubits, g.target());
    match g.kind {
        GateKind::H => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            for i in (0..amps.len()).filter(|i| i & t == 0) {
                let (a, b) = (amps[i], amps[i | t]);
                amps[i] = (a + b) * s;
                amps[i | t] = (a - b) * s;
            }
        }
        GateKind::CPhase(theta) => {
            let phase = Complex64::from_polar(1.0, theta);
            let m = cmask | t;
            for (i, a) in amps.iter_mut().enumerate() {
                if i & m == m {
                    *a *= phase;
                }
            }
        }
        GateKind::Rz(theta) => {
            let lo = Complex64::from_polar(1.0, -theta / 2.0);
            let hi = Complex64::from_polar(1.0, theta / 2.0);
            for (i, a) in amps.iter_mut().enumerate() {
                *a *= if i & t == 0 { lo } else { hi };
            }
        }
        _ => {
            for i in 0..amps.len() {
                if i & t == 0 && i & cmask == cmask {
                    amps.swap(i, i | t);
                }
            }
        }
    }
}

/// Dense unitary of the sequence, first gate applied first.
pub fn gates_to_unitary(seq: &GateSequence) -> Result<DMatrix<Complex64>> {
    let n = seq.num_qubits();
    if n > MAX_UNITARY_QUBITS {
        return Err(Error::OutOfRange(format!(
            "dense reconstruction is limited to {MAX_UNITARY_QUBITS} qubits, got {n}"
        )));
    }
    for g in seq.gates() {
        g.validate(n)?;
    }
    let dim = 1usize << n;
    let mut u = DMatrix::zeros(dim, dim);
    let mut col = vec![Complex64::new(0.0, 0.0); dim];
    for c in 0..dim {
        col.fill(Complex64::new(0.0, 0.0));
        col[c] = Complex64::new(1.0, 0.0);
        for g in seq.gates() {
            apply_gate(g, n, &mut col);
        }
        u.set_column(c, &nalgebra::DVector::from_column_slice(&col));
    }
    Ok(u)
}

/// Runs a sequence of X-type gates on one basis label.
pub fn simulate_classical(seq: &GateSequence, input: u64) -> Result<u64> {
    let n = seq.num_qubits();
    if n > MAX_CLASSICAL_QUBITS || input >> n != 0 {
        return Err(Error::OutOfRange(format!(
            "input {input} does not fit a simulable {n}-qubit register"
        )));
    }
    let mut x = input as usize;
    for g in seq.gates() {
        if !g.kind.is_classical() {
            return Err(Error::InvalidGate(format!(
                "{} is not a basis permutation",
                g.kind.name()
            )));
        }
        let cmask = g.controls.iter().fold(0, |m, &c| m | bit(n, c));
        if x & cmask == cmask {
            x ^= bit(n, g.target());
        }
    }
    Ok(x as u64)
}

/// Unitary with a single 1 per column at `U[map[i]][i]`.
pub fn permutation_unitary(perm: &Permutation) -> DMatrix<Complex64> {
    let dim = perm.size();
    let mut u = DMatrix::zeros(dim, dim);
    for (src, &dest) in perm.map().iter().enumerate() {
        u[(dest, src)] = Complex64::new(1.0, 0.0);
    }
    u
}

/// `max |a - e^{iφ} b|` with `φ` fixed on the largest-magnitude entry of `b`.
pub fn phase_aligned_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: b.nrows(),
            actual: a.nrows(),
        });
    }
    let (idx, pivot) = b
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        .ok_or_else(|| Error::InvalidParameter("empty matrix".into()))?;
    if pivot.norm() == 0.0 {
        return Err(Error::InvalidParameter("reference matrix is zero".into()));
    }
    let ratio = a[idx] / pivot;
    let phase = if ratio.norm() > 0.0 {
        ratio / ratio.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - phase * y).norm())
        .fold(0.0, f64::max))
}

/// `max |U U† - I|`.
pub fn unitarity_error(u: &DMatrix<Complex64>) -> f64 {
    let prod = u * u.adjoint();
    let id = DMatrix::<Complex64>::identity(u.nrows(), u.ncols());
    (prod - id).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        a.kronecker(b)
    }

    fn identity(n: usize) -> DMatrix<Complex64> {
        DMatrix::identity(1 << n, 1 << n)
    }

    /// Single-qubit gate on `q` of `n` by Kronecker products.
    fn embed(op: &DMatrix<Complex64>, q: usize, n: usize) -> DMatrix<Complex64> {
        kron(&kron(&identity(q), op), &identity(n - q - 1))
    }

    fn dft(n: usize) -> DMatrix<Complex64> {
        let dim = 1usize << n;
        DMatrix::from_fn(dim, dim, |x, y| {
            Complex64::from_polar(1.0 / (dim as f64).sqrt(), 2.0 * PI * (x * y) as f64 / dim as f64)
        })
    }

    fn bit_reversal(n: usize) -> DMatrix<Complex64> {
        let dim = 1usize << n;
        let rev = |x: usize| (0..n).fold(0, |acc, b| acc | (((x >> b) & 1) << (n - 1 - b)));
        DMatrix::from_fn(dim, dim, |r, col| c((r == rev(col)) as u8 as f64))
    }

    fn cyclic_shift(s: i64, n: usize) -> DMatrix<Complex64> {
        let dim = 1i64 << n;
        DMatrix::from_fn(dim as usize, dim as usize, |r, col| {
            c((r as i64 == (col as i64 + s).rem_euclid(dim)) as u8 as f64)
        })
    }

    /// The two-sort matrix written out entry by entry.
    fn two_sort_reference(n: usize) -> DMatrix<Complex64> {
        let dim = 1usize << n;
        DMatrix::from_fn(dim, dim, |r, col| {
            let image = if col == 0 || col == dim - 1 {
                col
            } else if col % 2 == 1 {
                col + 1
            } else {
                col - 1
            };
            c((r == image) as u8 as f64)
        })
    }

    #[test]
    fn qft_one_qubit_is_hadamard() {
        let seq = synth_qft(1).unwrap();
        assert_eq!(seq.gates(), &[Gate::h(0)]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = DMatrix::from_row_slice(2, 2, &[c(s), c(s), c(s), c(-s)]);
        assert!((gates_to_unitary(&seq).unwrap() - h).camax() < 1e-15);
    }

    #[test]
    fn qft_gate_counts() {
        let seq = synth_qft(2).unwrap();
        assert_eq!(seq.gates(), &[Gate::h(0), Gate::cphase(1, 0, PI / 2.0), Gate::h(1)]);
        for n in 1..=12 {
            assert_eq!(synth_qft(n).unwrap().len(), n * (n + 1) / 2);
        }
        assert!(synth_qft(0).is_err());
    }

    #[test]
    fn qft_matches_bit_reversed_dft() {
        for n in 1..=5 {
            let u = gates_to_unitary(&synth_qft(n).unwrap()).unwrap();
            let expect = bit_reversal(n) * dft(n);
            assert!((u - expect).camax() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn ladder_matches_kronecker_oracle() {
        // H on q0, CPHASE(π/2) between q1 and q0, H on q1, built without the simulator
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = DMatrix::from_row_slice(2, 2, &[c(s), c(s), c(s), c(-s)]);
        let mut cp = identity(2);
        cp[(3, 3)] = Complex64::from_polar(1.0, PI / 2.0);
        let expect = embed(&h, 1, 2) * cp * embed(&h, 0, 2);
        let u = gates_to_unitary(&synth_qft(2).unwrap()).unwrap();
        assert!((u - expect).camax() < 1e-14);
    }

    #[test]
    fn shift_examples() {
        let id = gates_to_unitary(&synth_shift(0, 3).unwrap()).unwrap();
        assert!(phase_aligned_distance(&id, &identity(3)).unwrap() < 1e-10);

        let u = gates_to_unitary(&synth_shift(1, 3).unwrap()).unwrap();
        // |101⟩ = 5 goes to |110⟩ = 6
        assert!((u[(6, 5)].norm() - 1.0).abs() < 1e-10);
        assert!(phase_aligned_distance(&u, &cyclic_shift(1, 3)).unwrap() < 1e-10);

        let back = gates_to_unitary(&synth_shift(7, 3).unwrap()).unwrap();
        assert!(phase_aligned_distance(&(back * u), &identity(3)).unwrap() < 1e-10);
    }

    #[test]
    fn shift_matches_cyclic_permutation() {
        for n in 1..=6 {
            for s in [-3i64, -1, 1, 2, 5, 1 << n] {
                let u = gates_to_unitary(&synth_shift(s, n).unwrap()).unwrap();
                assert!(
                    phase_aligned_distance(&u, &cyclic_shift(s, n)).unwrap() < 1e-10,
                    "s = {s}, n = {n}"
                );
            }
        }
    }

    #[test]
    fn shift_gate_total() {
        for n in 1..=12 {
            assert_eq!(synth_shift(3, n).unwrap().len(), n * n + 2 * n);
        }
    }

    #[test]
    fn shift_group_law() {
        let n = 4;
        for (a, b) in [(1, 1), (3, -5), (7, 9), (-1, 1)] {
            let ua = gates_to_unitary(&synth_shift(a, n).unwrap()).unwrap();
            let ub = gates_to_unitary(&synth_shift(b, n).unwrap()).unwrap();
            let uab = gates_to_unitary(&synth_shift(a + b, n).unwrap()).unwrap();
            assert!(phase_aligned_distance(&(ua * ub), &uab).unwrap() < 1e-9);
        }
    }

    #[test]
    fn mcx_examples() {
        assert_eq!(synth_mcx(1).unwrap().gates(), &[Gate::x(0)]);
        assert_eq!(synth_mcx(2).unwrap().gates(), &[Gate::cx(0, 1)]);
        let u = gates_to_unitary(&synth_mcx(4).unwrap()).unwrap();
        let mut expect = identity(4);
        expect.swap_columns(14, 15);
        assert_eq!(u, expect);
    }

    #[test]
    fn two_sort_small_cases() {
        let u = gates_to_unitary(&synth_two_sort(2).unwrap()).unwrap();
        let mut expect = identity(2);
        expect.swap_columns(1, 2);
        assert!(phase_aligned_distance(&u, &expect).unwrap() < 1e-9);

        let u = gates_to_unitary(&synth_two_sort(3).unwrap()).unwrap();
        assert!(phase_aligned_distance(&u, &two_sort_reference(3)).unwrap() < 1e-9);
        assert!(phase_aligned_distance(&(&u * &u), &identity(3)).unwrap() < 1e-9);
        assert!(synth_two_sort(1).is_err());
    }

    #[test]
    fn two_sort_matches_reference_up_to_eight_qubits() {
        for n in 2..=8 {
            let u = gates_to_unitary(&synth_two_sort(n).unwrap()).unwrap();
            assert!(unitarity_error(&u) < 1e-10);
            assert!(phase_aligned_distance(&u, &two_sort_reference(n)).unwrap() < 1e-9, "n = {n}");
            let perm = crate::protocols::two_sort_permutation(n);
            assert!(phase_aligned_distance(&u, &permutation_unitary(&perm)).unwrap() < 1e-9);
        }
    }

    #[test]
    fn expanded_mcx_is_exact_with_a_borrowed_qubit() {
        for n in 1..=8 {
            let exp = expand_mcx(&synth_mcx(n).unwrap()).unwrap();
            assert!(exp
                .sequence
                .gates()
                .iter()
                .all(|g| matches!(g.kind, GateKind::X | GateKind::Cx | GateKind::Ccx)));
            let u = gates_to_unitary(&exp.sequence).unwrap();
            let base = gates_to_unitary(&synth_mcx(n).unwrap()).unwrap();
            let expect = match exp.ancilla {
                Some(_) => kron(&base, &identity(1)),
                None => base,
            };
            assert_eq!(exp.ancilla.is_some(), n >= 4);
            assert!((u - expect).camax() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn expanded_mcx_classical_check_and_linear_cost() {
        for n in 4..=14 {
            let exp = expand_mcx(&synth_mcx(n).unwrap()).unwrap();
            let total = exp.sequence.num_qubits();
            for x in 0..(1u64 << total) {
                let y = simulate_classical(&exp.sequence, x).unwrap();
                // controls are the top n-1 bits of the register proper
                let reg = x >> (total - n);
                let all = (1u64 << (n - 1)) - 1;
                let flip = if reg >> 1 == all { 1u64 << (total - n) } else { 0 };
                assert_eq!(y, x ^ flip, "n = {n}, x = {x:b}");
            }
            let toffolis = exp.sequence.len();
            assert!(toffolis <= 8 * (n - 1), "n = {n}: {toffolis}");
        }
    }

    #[test]
    fn expansion_uses_idle_register_qubits() {
        // 3 controls inside 5 qubits: qubit 4 is idle, no extra wire
        let seq = GateSequence::from_gates(5, vec![Gate::controlled_x(&[0, 1, 2], 3)]).unwrap();
        let exp = expand_mcx(&seq).unwrap();
        assert_eq!(exp.ancilla, None);
        let expect = gates_to_unitary(&seq).unwrap();
        assert!((gates_to_unitary(&exp.sequence).unwrap() - expect).camax() < 1e-12);
    }

    #[test]
    fn gate_counts_two_sort() {
        let seq = synth_two_sort(4).unwrap();
        let counts = gate_count(&seq, false).unwrap();
        // two shifts of m² + 2m, one MCX, one X
        assert_eq!(counts.total, 2 * (16 + 8) + 2);
        assert_eq!(counts.per_kind["MCX"], 1);
        assert_eq!(counts.per_kind["RZ"], 8);
        let expanded = gate_count(&seq, true).unwrap();
        assert!(!expanded.per_kind.contains_key("MCX"));
        assert!(expanded.total > counts.total);
    }

    #[test]
    fn unitary_examples() {
        let empty = GateSequence::new(2);
        assert_eq!(gates_to_unitary(&empty).unwrap(), identity(2));
        let x = GateSequence::from_gates(1, vec![Gate::x(0)]).unwrap();
        assert_eq!(
            gates_to_unitary(&x).unwrap(),
            DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
        );
        assert!(gates_to_unitary(&GateSequence::new(11)).is_err());
    }

    #[test]
    fn gate_validation() {
        let mut seq = GateSequence::new(3);
        assert!(seq.push(Gate::cx(1, 1)).is_err());
        assert!(seq.push(Gate::x(3)).is_err());
        assert!(seq.push(Gate::rz(0, f64::NAN)).is_err());
        let bad = Gate {
            kind: GateKind::Cx,
            targets: vec![0],
            controls: vec![],
        };
        assert!(seq.push(bad).is_err());
        assert!(seq.is_empty());
        assert!(simulate_classical(&synth_qft(2).unwrap(), 0).is_err());
    }

    #[test]
    fn netlist_round_trip() {
        let seq = synth_two_sort(2).unwrap();
        let text = seq.to_netlist();
        assert!(text.starts_with("qubits 2\n"));
        assert_eq!(GateSequence::from_netlist(&text).unwrap(), seq);
        let seq = synth_two_sort(5).unwrap();
        assert_eq!(GateSequence::from_netlist(&seq.to_netlist()).unwrap(), seq);
        assert!(GateSequence::from_netlist("qubits 2\nFOO q0 c\n").is_err());
        assert!(GateSequence::from_netlist("qubits 2\nCX q0 c0\n").is_err());
        assert!(GateSequence::from_netlist("qubits 2\nRZ q0 c\n").is_err());
        let qasm = seq.to_qasm();
        assert!(qasm.contains("qreg q[5];"));
        assert!(qasm.contains("mcx q[0],q[1],q[2],q[3],q[4];"));
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = Gate> {
        let angle = -PI..PI;
        (0..6u8, Just((0..n).collect::<Vec<_>>()).prop_shuffle(), angle).prop_map(
            move |(kind, qs, theta)| match kind {
                0 => Gate::x(qs[0]),
                1 => Gate::h(qs[0]),
                2 => Gate::cx(qs[0], qs[1]),
                3 => Gate::ccx(qs[0], qs[1], qs[2]),
                4 => Gate::cphase(qs[0], qs[1], theta),
                _ => Gate::rz(qs[0], theta),
            },
        )
    }

    proptest! {
        #[test]
        fn random_sequences_are_unitary(gates in prop::collection::vec(arb_gate(3), 5)) {
            let seq = GateSequence::from_gates(3, gates).unwrap();
            let u = gates_to_unitary(&seq).unwrap();
            prop_assert!(unitarity_error(&u) < 1e-12);
            let adj = gates_to_unitary(&seq.adjoint()).unwrap();
            prop_assert!((adj - u.adjoint()).camax() < 1e-12);
        }

        #[test]
        fn netlist_round_trips(gates in prop::collection::vec(arb_gate(4), 0..12)) {
            let seq = GateSequence::from_gates(4, gates).unwrap();
            prop_assert_eq!(GateSequence::from_netlist(&seq.to_netlist()).unwrap(), seq);
        }
    }
}
