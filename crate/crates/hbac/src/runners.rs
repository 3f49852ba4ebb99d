//! One runner per experiment. Each writes its CSV/JSON files into the
//! configured output directory and returns a JSON summary plus the list of
//! failed checks.

use std::fmt::Write as _;

use hbac_core::circuit::{
    expand_mcx, gate_count, gates_to_unitary, permutation_unitary, phase_aligned_distance,
    synth_two_sort, unitarity_error, widen_for, GateSequence,
};
use hbac_core::markov::{
    build_transfer_matrix, mixing_time_bound, mixing_time_bound_loose, oas, verify_spectrum,
};
use hbac_core::ppa_analysis::nbds_trajectory;
use hbac_core::protocols::{
    ppa_step, run_protocol, tsac_step, two_sort_permutation, ProtocolKind, RunOptions,
};
use hbac_core::state::{polarization, tv_distance, ResetSpec};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{invalid, HarnessError, Result};
use crate::record::{input_hash, unix_now, OutputDir, RunRecord};

/// Registers up to this size get a dense reconstruction check.
pub const CIRCUIT_VERIFY_MAX: usize = 8;
pub const CIRCUIT_TOLERANCE: f64 = 1e-9;
pub const SPECTRUM_TOLERANCE: f64 = 1e-9;
pub const STATIONARY_TOLERANCE: f64 = 1e-10;

pub struct Outcome {
    pub record: RunRecord,
    pub summary: Value,
    pub failures: Vec<String>,
}

struct Partial {
    summary: Value,
    failures: Vec<String>,
}

/// Validates, runs and records one experiment. Files are written even when
/// a check fails; the failure is reported in [`Outcome::failures`].
pub fn run(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let pool = thread_pool()?;
    let started_unix = unix_now();
    let hash = input_hash(config)?;
    let mut out = OutputDir::create(&config.output_path)?;
    let partial = pool.install(|| match config.experiment {
        Experiment::Converge => run_converge(config, &mut out),
        Experiment::Spectrum => run_spectrum(config, &mut out),
        Experiment::Nbds => run_nbds(config, &mut out),
        Experiment::Noise => run_noise(config, &mut out),
        Experiment::Circuit => run_circuit(config, &mut out),
    })?;
    out.write("config.txt", &config.to_text())?;
    out.write(
        &format!("plots/{}.txt", config.experiment.name()),
        plot_recipe(config.experiment),
    )?;
    out.write("summary.json", &pretty(&partial.summary))?;
    let mut files = out.into_files();
    files.push("run.json".into());
    let record = RunRecord {
        config: config.clone(),
        started_unix,
        finished_unix: unix_now(),
        input_hash: hash,
        files,
    };
    let mut out = OutputDir::create(&config.output_path)?;
    out.write("run.json", &pretty(&record))?;
    Ok(Outcome {
        record,
        summary: partial.summary,
        failures: partial.failures,
    })
}

/// Like [`run`], turning failed checks into [`HarnessError::Assertion`].
pub fn run_checked(config: &ExperimentConfig) -> Result<Outcome> {
    let outcome = run(config)?;
    if !outcome.failures.is_empty() {
        return Err(HarnessError::Assertion(outcome.failures.join("; ")));
    }
    Ok(outcome)
}

/// Worker pool sized by `HBAC_THREADS` when set.
fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("HBAC_THREADS") {
        let threads: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|t| *t > 0)
            .ok_or_else(|| invalid(format!("HBAC_THREADS must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))
}

/// Random stream for run `index` of a seed.
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).rotate_left(32)
}

/// False for NaN as well as for values at or above `tol`.
fn below(v: f64, tol: f64) -> bool {
    v < tol
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summary serializes");
    s.push('\n');
    s
}

fn plot_recipe(experiment: Experiment) -> &'static str {
    match experiment {
        Experiment::Converge => {
            "converge.csv: x = iter, y = tsac_tv_to_oas and ppa_tv_to_oas on a log axis.\n\
             Second panel: tsac_pol_q0 and ppa_pol_q0 against iter with the limit from summary.json.\n"
        }
        Experiment::Spectrum => {
            "spectrum.json: scatter analytic_eigenvalues against numeric_eigenvalues.\n\
             transfer_matrix.csv: dense T, one row per line, for a heat map.\n"
        }
        Experiment::Nbds => {
            "nbds_summary.csv: x = n, y = max_nbds_excl on a log2 axis, one line per epsilon.\n\
             nbds.csv: per-iteration nbds_excl against iter for a chosen (n, epsilon).\n"
        }
        Experiment::Noise => {
            "noise_summary.csv: x = iter, y = ppa_mean with a ppa_min/ppa_max band, one curve per sigma;\n\
             tsac_mean for comparison. noise.csv holds every (sigma, seed) trajectory.\n"
        }
        Experiment::Circuit => {
            "circuit_counts.csv: x = m, y = expanded_gates and expanded_over_m2.\n\
             circuit/two_sort_m<m>.net is the netlist for each register size.\n"
        }
    }
}

fn run_converge(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Partial> {
    let n = cfg.n;
    let reset = ResetSpec::new(cfg.epsilon)?;
    let target = oas(n, &reset)?;
    let bound = mixing_time_bound(n, &reset, cfg.xi)?;
    let bound_loose = mixing_time_bound_loose(n, &reset, cfg.xi)?;
    let iterations = cfg.max_iters.max(bound.ceil() as usize + 1);
    let initial = cfg.initial_state(n + 1, &reset)?;

    let mut csv = String::from("iter,tsac_tv_to_oas,ppa_tv_to_oas,tsac_pol_q0,ppa_pol_q0\n");
    let mut tsac = initial.clone();
    let mut ppa = initial;
    let mut ppa_settled = false;
    let (mut tsac_mix, mut ppa_mix) = (None, None);
    let (mut tsac_tv, mut ppa_tv, mut tsac_pol, mut ppa_pol) = (0.0, 0.0, 0.0, 0.0);
    for t in 0..=iterations {
        if t > 0 {
            tsac = tsac_step(&tsac, &reset)?;
        }
        if t == 0 || !ppa_settled {
            if t > 0 {
                let (next, perm) = ppa_step(&ppa, &reset)?;
                ppa_settled = perm.is_identity() && tv_distance(&ppa, &next)? <= 1e-15;
                ppa = next;
            }
            ppa_tv = tv_distance(&ppa.trace_out_last()?, &target)?;
            ppa_pol = polarization(&ppa, 0)?.value;
        }
        tsac_tv = tv_distance(&tsac.trace_out_last()?, &target)?;
        tsac_pol = polarization(&tsac, 0)?.value;
        if tsac_mix.is_none() && tsac_tv <= cfg.xi {
            tsac_mix = Some(t);
        }
        if ppa_mix.is_none() && ppa_tv <= cfg.xi {
            ppa_mix = Some(t);
        }
        let _ = writeln!(csv, "{t},{tsac_tv},{ppa_tv},{tsac_pol},{ppa_pol}");
    }
    out.write("converge.csv", &csv)?;

    let mut failures = Vec::new();
    match tsac_mix {
        Some(t) if t as f64 <= bound => {}
        Some(t) => failures.push(format!("TSAC needed {t} iterations, above the bound {bound}")),
        None => failures.push(format!(
            "TSAC did not reach xi = {} within {iterations} iterations (bound {bound})",
            cfg.xi
        )),
    }
    let limit = (1u64 << (n - 1)) as f64 * cfg.epsilon;
    Ok(Partial {
        summary: json!({
            "experiment": "converge",
            "n": n,
            "epsilon": cfg.epsilon,
            "xi": cfg.xi,
            "iterations": iterations,
            "mixing_time_bound": bound,
            "mixing_time_bound_loose": bound_loose,
            "tsac_t_mix": tsac_mix,
            "ppa_t_mix": ppa_mix,
            "tsac_final_tv_to_oas": tsac_tv,
            "ppa_final_tv_to_oas": ppa_tv,
            "tsac_final_pol_q0": tsac_pol,
            "ppa_final_pol_q0": ppa_pol,
            "limit_pol_q0": limit,
            "bound_holds": failures.is_empty(),
        }),
        failures,
    })
}

fn run_spectrum(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Partial> {
    let reset = ResetSpec::new(cfg.epsilon)?;
    let report = verify_spectrum(cfg.n, &reset)?;
    out.write("spectrum.json", &report.to_json())?;
    out.write("transfer_matrix.csv", &build_transfer_matrix(cfg.n, &reset)?.to_csv()?)?;
    let mut failures = Vec::new();
    if !below(report.max_abs_error, SPECTRUM_TOLERANCE) {
        failures.push(format!(
            "eigenvalue error {} exceeds {SPECTRUM_TOLERANCE}",
            report.max_abs_error
        ));
    }
    if !below(report.stationary_tv_to_oas, STATIONARY_TOLERANCE) {
        failures.push(format!(
            "+1 eigenvector is {} from the optimal state in TV",
            report.stationary_tv_to_oas
        ));
    }
    Ok(Partial {
        summary: json!({
            "experiment": "spectrum",
            "n": cfg.n,
            "epsilon": cfg.epsilon,
            "gap": report.gap,
            "gap_lower_bound": report.gap_lower_bound,
            "max_abs_error": report.max_abs_error,
            "stationary_tv_to_oas": report.stationary_tv_to_oas,
        }),
        failures,
    })
}

/// Least-squares slope of `log2(y)` against `x`; `None` with fewer than two
/// points or a non-positive `y`.
pub fn log2_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() || ys.iter().any(|y| *y <= 0.0) {
        return None;
    }
    let ly: Vec<f64> = ys.iter().map(|y| y.log2()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

fn run_nbds(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Partial> {
    let jobs: Vec<(f64, usize)> = cfg
        .epsilon_list
        .iter()
        .flat_map(|&eps| cfg.n_values().into_iter().map(move |n| (eps, n)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(eps, n)| -> Result<_> {
            let reset = ResetSpec::new(eps)?;
            let initial = cfg.initial_state(n + 1, &reset)?;
            Ok(nbds_trajectory(n, &reset, &initial, cfg.max_iters)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = String::from(hbac_core::ppa_analysis::NbdsRecord::CSV_HEADER);
    let mut table = String::from("epsilon,n,max_nbds_excl,max_nbds_incl,iterations_run\n");
    for r in &records {
        rows.push_str(&r.csv_rows());
        let _ = writeln!(
            table,
            "{},{},{},{},{}",
            r.epsilon,
            r.n,
            r.max_nbds,
            r.max_nbds_incl(),
            r.iterations_run
        );
    }
    out.write("nbds.csv", &rows)?;
    out.write("nbds_summary.csv", &table)?;

    let mut fits = Vec::new();
    for &eps in &cfg.epsilon_list {
        let subset: Vec<_> = records.iter().filter(|r| r.epsilon == eps).collect();
        let ns: Vec<f64> = subset.iter().map(|r| r.n as f64).collect();
        let maxes: Vec<f64> = subset.iter().map(|r| r.max_nbds as f64).collect();
        fits.push(json!({
            "epsilon": eps,
            "n": subset.iter().map(|r| r.n).collect::<Vec<_>>(),
            "max_nbds": subset.iter().map(|r| r.max_nbds).collect::<Vec<_>>(),
            "log2_slope": log2_slope(&ns, &maxes),
            "non_decreasing": subset.windows(2).all(|w| w[0].max_nbds <= w[1].max_nbds),
        }));
    }
    Ok(Partial {
        summary: json!({ "experiment": "nbds", "max_iters": cfg.max_iters, "fits": fits }),
        failures: Vec::new(),
    })
}

struct NoiseRun {
    ppa: Vec<f64>,
    tsac: Vec<f64>,
}

fn run_noise(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Partial> {
    let reset = ResetSpec::new(cfg.epsilon)?;
    let initial = cfg.initial_state(cfg.n + 1, &reset)?;
    let jobs: Vec<(usize, f64, u64)> = cfg
        .sigma_list
        .iter()
        .enumerate()
        .flat_map(|(i, &s)| cfg.seeds.iter().map(move |&seed| (i, s, seed)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(i, sigma, seed)| -> Result<NoiseRun> {
            let stream = derive_seed(seed, i);
            let ppa = run_protocol(
                &initial,
                &reset,
                &RunOptions::new(ProtocolKind::NoisyPpa, cfg.max_iters).noise(sigma, stream),
            )?;
            let tsac = run_protocol(
                &initial,
                &reset,
                &RunOptions::new(ProtocolKind::Tsac, cfg.max_iters).noise(sigma, stream),
            )?;
            Ok(NoiseRun {
                ppa: ppa.polarization_series,
                tsac: tsac.polarization_series,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut all = String::from("sigma,seed,iter,ppa_pol_q0,tsac_pol_q0\n");
    for (&(_, sigma, seed), run) in jobs.iter().zip(&runs) {
        for (t, (p, q)) in run.ppa.iter().zip(&run.tsac).enumerate() {
            let _ = writeln!(all, "{sigma},{seed},{t},{p},{q}");
        }
    }
    out.write("noise.csv", &all)?;

    let tail_start = (cfg.max_iters * 2) / 5;
    let limit = (1u64 << (cfg.n - 1)) as f64 * cfg.epsilon;
    let mut band = String::from("sigma,iter,ppa_mean,ppa_min,ppa_max,tsac_mean,tsac_min,tsac_max\n");
    let mut tails = Vec::new();
    let mut tsac_identical = true;
    let per_sigma = cfg.seeds.len();
    for (i, &sigma) in cfg.sigma_list.iter().enumerate() {
        let group = &runs[i * per_sigma..(i + 1) * per_sigma];
        tsac_identical &= group.iter().all(|r| r.tsac == runs[0].tsac);
        for t in 0..=cfg.max_iters {
            let (pm, plo, phi) = stats(group.iter().map(|r| r.ppa[t]));
            let (tm, tlo, thi) = stats(group.iter().map(|r| r.tsac[t]));
            let _ = writeln!(band, "{sigma},{t},{pm},{plo},{phi},{tm},{tlo},{thi}");
        }
        let tail_mean = |series: fn(&NoiseRun) -> &Vec<f64>| -> f64 {
            let values: Vec<f64> = group
                .iter()
                .flat_map(|r| series(r)[tail_start..].iter().copied())
                .collect();
            values.iter().sum::<f64>() / values.len() as f64
        };
        tails.push(json!({
            "sigma": sigma,
            "ppa_tail_mean": tail_mean(|r| &r.ppa),
            "tsac_tail_mean": tail_mean(|r| &r.tsac),
        }));
    }
    out.write("noise_summary.csv", &band)?;
    Ok(Partial {
        summary: json!({
            "experiment": "noise",
            "n": cfg.n,
            "epsilon": cfg.epsilon,
            "iterations": cfg.max_iters,
            "seeds": cfg.seeds.len(),
            "tail_start": tail_start,
            "noiseless_limit": limit,
            "tsac_identical_across_sigma": tsac_identical,
            "tails": tails,
        }),
        failures: Vec::new(),
    })
}

fn stats(values: impl Iterator<Item = f64>) -> (f64, f64, f64) {
    let (mut sum, mut count, mut lo, mut hi) = (0.0, 0usize, f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        sum += v;
        count += 1;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (sum / count as f64, lo, hi)
}

#[derive(Debug, Clone, Serialize)]
pub struct CircuitRow {
    pub m: usize,
    pub gates: usize,
    pub expanded_gates: usize,
    pub expanded_over_m2: f64,
    pub borrowed_ancilla: bool,
    /// Phase-aligned distance to the two-sort matrix; `None` above the
    /// verification size.
    pub error: Option<f64>,
    pub expanded_error: Option<f64>,
    pub unitarity_error: Option<f64>,
    pub netlist_round_trip: bool,
}

fn circuit_row(m: usize) -> Result<(CircuitRow, GateSequence)> {
    let seq = synth_two_sort(m)?;
    let expansion = expand_mcx(&seq)?;
    let counts = gate_count(&seq, false)?;
    let expanded = gate_count(&seq, true)?;
    let (mut error, mut expanded_error, mut unitarity) = (None, None, None);
    if m <= CIRCUIT_VERIFY_MAX {
        let reference = permutation_unitary(&two_sort_permutation(m));
        let u = gates_to_unitary(&seq)?;
        unitarity = Some(unitarity_error(&u));
        error = Some(phase_aligned_distance(&u, &reference)?);
        let wide = widen_for(&reference, &expansion);
        expanded_error = Some(phase_aligned_distance(&gates_to_unitary(&expansion.sequence)?, &wide)?);
    }
    let round_trip = GateSequence::from_netlist(&seq.to_netlist())? == seq;
    Ok((
        CircuitRow {
            m,
            gates: counts.total,
            expanded_gates: expanded.total,
            expanded_over_m2: expanded.total as f64 / (m * m) as f64,
            borrowed_ancilla: expansion.ancilla.is_some(),
            error,
            expanded_error,
            unitarity_error: unitarity,
            netlist_round_trip: round_trip,
        },
        seq,
    ))
}

fn run_circuit(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Partial> {
    let rows = cfg
        .n_values()
        .par_iter()
        .map(|&m| circuit_row(m))
        .collect::<Result<Vec<_>>>()?;
    let mut failures = Vec::new();
    let mut table = String::from(
        "m,gates,expanded_gates,expanded_over_m2,borrowed_ancilla,error,expanded_error\n",
    );
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (row, seq) in &rows {
        out.write(&format!("circuit/two_sort_m{}.net", row.m), &seq.to_netlist())?;
        out.write(&format!("circuit/two_sort_m{}.qasm", row.m), &seq.to_qasm())?;
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{}",
            row.m,
            row.gates,
            row.expanded_gates,
            row.expanded_over_m2,
            row.borrowed_ancilla,
            opt(row.error),
            opt(row.expanded_error)
        );
        for (what, v) in [("synthesized", row.error), ("expanded", row.expanded_error)] {
            if let Some(e) = v {
                if !below(e, CIRCUIT_TOLERANCE) {
                    failures.push(format!("m = {}: {what} circuit is off by {e}", row.m));
                }
            }
        }
        if !row.netlist_round_trip {
            failures.push(format!("m = {}: netlist does not round-trip", row.m));
        }
    }
    out.write("circuit_counts.csv", &table)?;
    let c = rows
        .iter()
        .filter(|(r, _)| r.m >= 3)
        .map(|(r, _)| r.expanded_over_m2)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let rows: Vec<CircuitRow> = rows.into_iter().map(|(r, _)| r).collect();
    Ok(Partial {
        summary: json!({
            "experiment": "circuit",
            "rows": rows,
            "c_max_expanded_over_m2": c,
        }),
        failures,
    })
}
