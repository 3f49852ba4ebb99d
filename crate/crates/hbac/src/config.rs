//! Experiment configuration: a flat `key = value` file, with command-line
//! flags applied on top.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hbac_core::state::{make_maximally_mixed, make_thermal, DiagonalState, ResetSpec};
use serde::Serialize;

use crate::error::{invalid, HarnessError, Result};

/// Upper limits checked before anything large is allocated.
pub const MAX_CONVERGE_N: usize = 12;
pub const MAX_SPECTRUM_N: usize = 10;
pub const MAX_NBDS_N: usize = 12;
pub const MAX_NOISE_N: usize = 12;
pub const MAX_CIRCUIT_M: usize = 16;
pub const MAX_ITERS: usize = 10_000_000;
pub const MAX_SEEDS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Converge,
    Spectrum,
    Nbds,
    Noise,
    Circuit,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Converge => "converge",
            Experiment::Spectrum => "spectrum",
            Experiment::Nbds => "nbds",
            Experiment::Noise => "noise",
            Experiment::Circuit => "circuit",
        }
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "converge" => Experiment::Converge,
            "spectrum" => Experiment::Spectrum,
            "nbds" => Experiment::Nbds,
            "noise" => Experiment::Noise,
            "circuit" => Experiment::Circuit,
            _ => return Err(invalid(format!("unknown experiment `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    Thermal,
    Mixed,
    Custom(PathBuf),
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialState::Thermal => f.write_str("thermal"),
            InitialState::Mixed => f.write_str("mixed"),
            InitialState::Custom(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Computation qubits; the upper end of the sweep for `nbds` and the
    /// largest register for `circuit`.
    pub n: usize,
    /// Lower end of the sweep for `nbds` and `circuit`.
    pub n_min: usize,
    pub epsilon: f64,
    /// Bath polarizations swept by `nbds`.
    pub epsilon_list: Vec<f64>,
    pub sigma_list: Vec<f64>,
    pub xi: f64,
    pub max_iters: usize,
    pub seeds: Vec<u64>,
    pub initial: InitialState,
    pub output_path: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            n: 2,
            n_min: 2,
            epsilon: 0.1,
            epsilon_list: vec![0.05, 0.1, 0.2],
            sigma_list: vec![0.0],
            xi: 1e-6,
            max_iters: 500,
            seeds: (0..20).collect(),
            initial: InitialState::Thermal,
            output_path: PathBuf::from("out").join(experiment.name()),
        };
        match experiment {
            Experiment::Converge => base,
            Experiment::Spectrum => Self {
                n: 6,
                epsilon: 0.5,
                ..base
            },
            Experiment::Nbds => Self {
                n: 10,
                n_min: 3,
                max_iters: 1000,
                ..base
            },
            Experiment::Noise => Self {
                epsilon: 0.02,
                sigma_list: vec![0.0, 0.001, 0.01, 0.1, 1.0, 10.0],
                ..base
            },
            Experiment::Circuit => Self { n: 8, ..base },
        }
    }

    /// Defaults overlaid with the `key = value` lines of `path`.
    pub fn from_file(experiment: Experiment, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::defaults(experiment);
        cfg.apply_text(&text)?;
        cfg.experiment = experiment;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| invalid(format!("line {}: {}", i + 1, strip(&e))))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => self.experiment = value.parse()?,
            "n" => self.n = parse(key, value)?,
            "n_min" => self.n_min = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "epsilons" | "epsilon_list" => self.epsilon_list = parse_list(key, value)?,
            "sigma" | "sigmas" | "sigma_list" => self.sigma_list = parse_list(key, value)?,
            "xi" => self.xi = parse(key, value)?,
            "iters" | "max_iters" => self.max_iters = parse(key, value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "initial" => {
                self.initial = match value {
                    "thermal" => InitialState::Thermal,
                    "mixed" => InitialState::Mixed,
                    "" => return Err(invalid("initial must be thermal, mixed or a file path")),
                    path => InitialState::Custom(PathBuf::from(path)),
                }
            }
            "out" | "output_path" => self.output_path = PathBuf::from(value),
            _ => return Err(invalid(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// The sweep `n_min..=n` used by `nbds` and `circuit`.
    pub fn n_values(&self) -> Vec<usize> {
        (self.n_min..=self.n).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let check_eps = |eps: f64| -> Result<()> {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(invalid(format!("epsilon must be finite and > 0, got {eps}")));
            }
            Ok(())
        };
        check_eps(self.epsilon)?;
        if self.max_iters == 0 || self.max_iters > MAX_ITERS {
            return Err(invalid(format!(
                "iters must be in 1..={MAX_ITERS}, got {}",
                self.max_iters
            )));
        }
        let range = |lo: usize, hi: usize, what: &str, v: usize| -> Result<()> {
            if v < lo || v > hi {
                return Err(invalid(format!("{what} must be in {lo}..={hi} for {}, got {v}", self.experiment.name())));
            }
            Ok(())
        };
        let guard = |n: usize, eps: f64| -> Result<()> {
            let span = ((1u64 << n) - 1) as f64 * eps;
            if span > hbac_core::markov::MAX_OAS_LOG_RANGE {
                return Err(invalid(format!(
                    "(2^n - 1)·epsilon = {span} exceeds {}; pick a smaller n or epsilon",
                    hbac_core::markov::MAX_OAS_LOG_RANGE
                )));
            }
            Ok(())
        };
        match self.experiment {
            Experiment::Converge => {
                range(1, MAX_CONVERGE_N, "n", self.n)?;
                guard(self.n, self.epsilon)?;
                if !(self.xi > 0.0 && self.xi < 1.0) {
                    return Err(invalid(format!("xi must lie in (0, 1), got {}", self.xi)));
                }
            }
            Experiment::Spectrum => {
                range(1, MAX_SPECTRUM_N, "n", self.n)?;
                guard(self.n, self.epsilon)?;
            }
            Experiment::Nbds => {
                range(2, MAX_NBDS_N, "n", self.n)?;
                range(2, self.n, "n_min", self.n_min)?;
                if self.epsilon_list.is_empty() {
                    return Err(invalid("epsilons must not be empty"));
                }
                for &eps in &self.epsilon_list {
                    check_eps(eps)?;
                }
            }
            Experiment::Noise => {
                range(1, MAX_NOISE_N, "n", self.n)?;
                if self.sigma_list.is_empty() {
                    return Err(invalid("sigma must list at least one value"));
                }
                for &s in &self.sigma_list {
                    if !(s.is_finite() && s >= 0.0) {
                        return Err(invalid(format!("sigma must be finite and >= 0, got {s}")));
                    }
                }
                if self.seeds.is_empty() || self.seeds.len() > MAX_SEEDS {
                    return Err(invalid(format!("seeds must hold 1..={MAX_SEEDS} values")));
                }
            }
            Experiment::Circuit => {
                range(2, MAX_CIRCUIT_M, "n", self.n)?;
                range(2, self.n, "n_min", self.n_min)?;
            }
        }
        if let InitialState::Custom(path) = &self.initial {
            if !path.is_file() {
                return Err(invalid(format!("initial state file {} not found", path.display())));
            }
        }
        Ok(())
    }

    /// Initial state on `num_qubits` qubits.
    pub fn initial_state(&self, num_qubits: usize, reset: &ResetSpec) -> Result<DiagonalState> {
        Ok(match &self.initial {
            InitialState::Thermal => make_thermal(num_qubits, reset)?,
            InitialState::Mixed => make_maximally_mixed(num_qubits)?,
            InitialState::Custom(path) => {
                let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
                    path: path.clone(),
                    source,
                })?;
                let state = DiagonalState::from_csv(&text)?;
                if state.num_qubits() != num_qubits {
                    return Err(invalid(format!(
                        "initial state in {} has {} qubits, expected {num_qubits}",
                        path.display(),
                        state.num_qubits()
                    )));
                }
                state
            }
        })
    }

    /// Canonical `key = value` text, one key per line in a fixed order.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let seeds = self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        format!(
            "experiment = {}\nn = {}\nn_min = {}\nepsilon = {}\nepsilons = {}\nsigma = {}\nxi = {}\niters = {}\nseeds = {}\ninitial = {}\nout = {}\n",
            self.experiment.name(),
            self.n,
            self.n_min,
            self.epsilon,
            list(&self.epsilon_list),
            list(&self.sigma_list),
            self.xi,
            self.max_iters,
            seeds,
            self.initial,
            self.output_path.display(),
        )
    }
}

fn strip(e: &HarnessError) -> String {
    match e {
        HarnessError::Validation(m) => m.clone(),
        other => other.to_string(),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| invalid(format!("cannot parse `{value}` for {key}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}

/// `1,2,3`, `0..20` (end excluded) or `0..=19`.
fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    if let Some((lo, hi)) = value.split_once("..") {
        let lo: u64 = parse("seeds", lo.trim())?;
        let (hi, inclusive) = match hi.strip_prefix('=') {
            Some(h) => (h, true),
            None => (hi, false),
        };
        let hi: u64 = parse("seeds", hi.trim())?;
        let end = if inclusive { hi.saturating_add(1) } else { hi };
        if end.saturating_sub(lo) > MAX_SEEDS as u64 {
            return Err(invalid(format!("at most {MAX_SEEDS} seeds are supported")));
        }
        return Ok((lo..end).collect());
    }
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse("seeds", v))
        .collect()
}
