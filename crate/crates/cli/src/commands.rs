//! Subcommand definitions and drivers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use snsqkd::chernoff::EpsilonBudget;
use snsqkd::exec::Execution;
use snsqkd::mcsim::{self, McConfig, PRNG_ALGORITHM};
use snsqkd::optimizer::OptimizationResult;
use snsqkd::pipeline::{plob_bound, Evaluation, Variant};
use snsqkd::postproc::{KeyResult, Label, MergedLabel};
use snsqkd::qubitmodel::{self, QubitGrid};

use crate::config::{self, Mode, Origin, RunConfig};
use crate::scan::{self, sci};
use crate::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "snsqkd",
    version,
    about = "Key rates for sending-or-not-sending twin-field QKD with two-way error rejection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named device parameters: rowA..rowF or longhaul.
    #[arg(long)]
    pub preset: Option<String>,
    /// Single distance in km.
    #[arg(long)]
    pub distance: Option<f64>,
    /// Distance sweep `start:stop:step` in km.
    #[arg(long)]
    pub range: Option<String>,
    /// `asymptotic` or `finite`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Key-length variants, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    pub variant: Vec<String>,
    /// Seed for optimizer restarts and sampled strings.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Any configuration field, `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimized rates over a distance sweep, written as CSV.
    Scan(CommonArgs),
    /// Full breakdown at one distance.
    Point(CommonArgs),
    /// Optimizer restarts and the optimum at one distance.
    Optimize(CommonArgs),
    /// Repeaterless bounds.
    Plob(CommonArgs),
    /// Monte Carlo check of every pairing expectation.
    McVerify {
        #[command(flatten)]
        common: CommonArgs,
        /// Scale analytic expectations by 1.1 to exercise the failure path.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Density-matrix check of the phase-error iteration.
    QubitCheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Shrink the bound by 10% to exercise the failure path.
        #[arg(long)]
        inject_fault: bool,
    },
}

/// Text to print and whether every check passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    pub success: bool,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self { text, success: true }
    }
}

/// Defaults, then the preset, then the config file, then the remaining flags.
pub fn build_config(args: &CommonArgs) -> Result<RunConfig> {
    let flag = Origin::Flag;
    let mut cfg = RunConfig::default();
    if let Some(p) = &args.preset {
        cfg.set("preset", p, &flag)?;
    }
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        let text = if args.preset.is_some() {
            // the flag wins over the file's preset line
            text.lines()
                .map(|l| {
                    if l.split('=').next().map(str::trim) == Some("preset") {
                        ""
                    } else {
                        l
                    }
                })
                .collect::<Vec<_>>()
                .join("\n")
        } else {
            text
        };
        cfg.apply_text(&text, path)?;
    }
    if let Some(v) = &args.mode {
        cfg.set("mode", v, &flag)?;
    }
    if let Some(v) = args.distance {
        cfg.set("distance", &v.to_string(), &flag)?;
    }
    if let Some(v) = &args.range {
        cfg.set("range", v, &flag)?;
    }
    if !args.variant.is_empty() {
        cfg.set("variants", &args.variant.join(","), &flag)?;
    }
    if let Some(v) = args.seed {
        cfg.set("seed", &v.to_string(), &flag)?;
    }
    if let Some(v) = &args.out {
        cfg.set("out", &v.to_string_lossy(), &flag)?;
    }
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| config::ConfigError {
            origin: flag.clone(),
            field: kv.clone(),
            reason: "expected KEY=VALUE".into(),
        })?;
        cfg.set(k, v, &flag)?;
    }
    cfg.finish()?;
    Ok(cfg)
}

fn emit(cfg: &RunConfig, text: String) -> Result<String> {
    match &cfg.out {
        Some(path) => {
            write_file(path, text.as_bytes())?;
            Ok(format!("wrote {}\n", path.display()))
        }
        None => Ok(text),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Scan(a) => cmd_scan(&build_config(&a)?),
        Command::Point(a) => cmd_point(&build_config(&a)?),
        Command::Optimize(a) => cmd_optimize(&build_config(&a)?),
        Command::Plob(a) => cmd_plob(&build_config(&a)?, a.range.is_some()),
        Command::McVerify { common, inject_fault } => cmd_mc_verify(&build_config(&common)?, inject_fault),
        Command::QubitCheck { common, inject_fault } => cmd_qubit_check(&build_config(&common)?, inject_fault),
    }
}

pub fn cmd_scan(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.variants.is_empty() {
        return Err(config::ConfigError {
            origin: Origin::Flag,
            field: "variants".into(),
            reason: "scan needs at least one key-rate variant".into(),
        }
        .into());
    }
    let rows = scan::run_scan(cfg, Execution::default())?;
    let mut buf = Vec::new();
    scan::write_csv(cfg, &rows, &mut buf)?;
    let text = String::from_utf8(buf).map_err(|e| CliError::Format(e.to_string()))?;
    Ok(Outcome::ok(emit(cfg, text)?))
}

fn key_lines(out: &mut String, key: &KeyResult, n: f64) {
    let _ = writeln!(out, "  untagged term      {}", sci(key.untagged_term));
    let _ = writeln!(out, "  phase-error term   {}", sci(key.phase_term));
    let _ = writeln!(out, "  error-corr. term   {}", sci(key.ec_term));
    let _ = writeln!(out, "  finite penalty     {}", sci(key.finite_penalty));
    let _ = writeln!(out, "  key length N_f     {}", sci(key.key_length));
    let _ = writeln!(
        out,
        "  rate per pulse     {}   (signed {})",
        sci(key.rate),
        sci(key.signed_rate(n))
    );
}

fn budget_lines(out: &mut String, b: &EpsilonBudget) {
    let _ = writeln!(out, "epsilon budget (xi = {:e})", b.xi);
    let _ = writeln!(
        out,
        "  eps_cor = {} xi, eps_hat = {} xi, eps_PA = {} xi, eps_bar = {} xi, eps_n1 = {} xi",
        b.cor, b.hat, b.pa, b.bar, b.n1
    );
    let _ = writeln!(
        out,
        "  eps_sec = 2 eps_hat + 4 eps_bar + eps_PA + eps_n1 = {} xi = {:.1e}",
        b.sec_multiple(),
        b.eps_sec()
    );
    let _ = writeln!(
        out,
        "  eps_tot = eps_cor + eps_sec = {} xi = {:.1e}",
        b.tot_multiple(),
        b.eps_tot()
    );
    let _ = writeln!(out, "  key penalty = {:.4} bits", b.key_penalty());
}

fn evaluation_lines(out: &mut String, cfg: &RunConfig, r: &OptimizationResult) {
    let e: &Evaluation = &r.evaluation;
    let p = &r.best;
    let _ = writeln!(
        out,
        "protocol: p_z = {}  p = {}  mu_z = {}  decoys = [0, {}, {}]  slice = 2pi/{:.3}",
        sci(p.p_z),
        sci(p.p_send),
        sci(p.mu_z),
        p.mu1(),
        p.mu2(),
        2.0 * std::f64::consts::PI / p.slice_width
    );
    let c = &e.counts;
    let _ = writeln!(out, "effective Z-window counts");
    let _ = writeln!(
        out,
        "  n_t = {}  n_C0 = {}  n_C1 = {}  n_D = {}  n_V = {}",
        sci(c.n_t()),
        sci(c.n_c0),
        sci(c.n_c1),
        sci(c.n_d),
        sci(c.n_v)
    );
    let _ = writeln!(
        out,
        "  N_0 = {}  N_1 = {}  E_0 = {}  E_1 = {}  E_Z = {}",
        sci(c.group0()),
        sci(c.group1()),
        sci(c.e_group0()),
        sci(c.e_group1()),
        sci(c.e_z())
    );
    let u = &e.untagged;
    let _ = writeln!(
        out,
        "untagged: n_1 = {}  n_1^0 = {}  n_1^1 = {}  e_1^ph = {}  n_0 = {}",
        sci(u.n1),
        sci(u.n1_0),
        sci(u.n1_1),
        sci(u.e1ph),
        sci(u.n0)
    );
    if let Some(obs) = &e.decoy {
        let _ = writeln!(
            out,
            "decoy statistics: S_0 = {}  S_mu1 = {}  S_mu2 = {}  T = {}",
            sci(obs.one_sided[0]),
            sci(obs.one_sided[1]),
            sci(obs.one_sided[2]),
            sci(obs.slice_errors)
        );
    }
    if let Some(b) = &e.bfer {
        let _ = writeln!(out, "random pairing");
        let mut cells = Vec::new();
        for x in MergedLabel::ALL {
            for y in MergedLabel::ALL {
                cells.push(format!("n_{}{} = {}", x.name(), y.name(), sci(b.pairs.merged(x, y))));
            }
        }
        let _ = writeln!(out, "  {}", cells.join("  "));
        let sub: Vec<String> = [Label::C1, Label::C0]
            .iter()
            .flat_map(|&x| [Label::C1, Label::C0].map(move |y| (x, y)))
            .map(|(x, y)| format!("n_{}{} = {}", x.name(), y.name(), sci(b.pairs.get(x, y))))
            .collect();
        let _ = writeln!(out, "  {}", sub.join("  "));
        let _ = writeln!(out, "  survivors = {}", sci(b.survivors));
        for (i, cl) in b.classes.iter().enumerate() {
            let _ = writeln!(
                out,
                "  class {}: n = {}  E = {}",
                i + 1,
                sci(cl.count),
                sci(cl.error_rate())
            );
        }
        let _ = writeln!(out, "  n~_1 = {}  e~_1^ph = {}", sci(b.n1_tilde), sci(b.e1ph_tilde));
    }
    if let Some(bounds) = &e.bounds {
        let _ = writeln!(
            out,
            "Chernoff bounds: n_1L = {}  e_1u^ph = {}{}",
            sci(bounds.n1_lower),
            sci(bounds.e1ph_upper),
            if bounds.vacuous { "  (vacuous)" } else { "" }
        );
    }
    if let Some(o) = &e.odd {
        let _ = writeln!(
            out,
            "odd-parity sifting: N_R = {}  n'_1 = {}  e'_odd = {}  n_t1 = {}  E_1 = {}",
            sci(o.n_r),
            sci(o.n1_prime),
            sci(o.e_odd),
            sci(o.class1.count),
            sci(o.class1.error_rate())
        );
    }
    if let Some(a) = &e.aopp {
        let _ = writeln!(
            out,
            "AOPP: N_R = {}  N_A = {}  N_C1C0 = {}  N_VD = {}  N~_t = {}  E''_Z = {}  n''_1 = {}  e''_1^ph = {}",
            sci(a.n_r),
            sci(a.n_a),
            sci(a.n_cc),
            sci(a.n_vd),
            sci(a.survivors),
            sci(a.e_z),
            sci(a.n1_pp),
            sci(a.e1ph_pp)
        );
    }
    let _ = writeln!(out, "key terms");
    key_lines(out, &r.key, cfg.exp.total_pulses);
}

fn point_header(cfg: &RunConfig, distance: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "preset {}  mode {}  distance {} km  seed {}",
        cfg.preset,
        cfg.mode.name(),
        distance,
        cfg.seed
    );
    let e = &cfg.exp;
    let _ = writeln!(
        out,
        "device: d = {:e}  eta_0 = {}  f = {}  e_a = {}  alpha_f = {} dB/km  N = {:e}",
        e.dark_count, e.detector_efficiency, e.ec_inefficiency, e.misalignment, e.fiber_loss, e.total_pulses
    );
    out
}

pub fn point_text(cfg: &RunConfig) -> Result<String> {
    let mut out = point_header(cfg, cfg.distance);
    if cfg.mode == Mode::Finite {
        budget_lines(&mut out, &EpsilonBudget::standard(cfg.exp.failure_prob));
    }
    for &v in &cfg.variants {
        let r = scan::solve(cfg, v, cfg.distance, Execution::default())?;
        let _ = writeln!(out, "\n== {v} ==");
        evaluation_lines(&mut out, cfg, &r);
    }
    let _ = writeln!(out);
    plob_lines(&mut out, cfg, cfg.distance);
    Ok(out)
}

pub fn cmd_point(cfg: &RunConfig) -> Result<Outcome> {
    Ok(Outcome::ok(emit(cfg, point_text(cfg)?)?))
}

pub fn cmd_optimize(cfg: &RunConfig) -> Result<Outcome> {
    let mut out = point_header(cfg, cfg.distance);
    for &v in &cfg.variants {
        let r = scan::solve(cfg, v, cfg.distance, Execution::default())?;
        let _ = writeln!(out, "\n== {v} ==");
        let _ = writeln!(out, "slice_k,origin,start,start_rate,end,end_rate,evals");
        for run in &r.runs {
            let k = 2.0 * std::f64::consts::PI / run.slice_width;
            for s in &run.restarts {
                let fmt = |x: &[f64]| x.iter().map(|&v| sci(v)).collect::<Vec<_>>().join(" ");
                let _ = writeln!(
                    out,
                    "{k:.0},{},{},{},{},{},{}",
                    s.origin,
                    fmt(&s.start),
                    sci(s.start_value),
                    fmt(&s.end),
                    sci(s.end_value),
                    s.evals
                );
            }
        }
        evaluation_lines(&mut out, cfg, &r);
    }
    Ok(Outcome::ok(emit(cfg, out)?))
}

fn plob_cell(b: Option<f64>) -> String {
    b.map(sci).unwrap_or_else(|| "unbounded".into())
}

fn plob_lines(out: &mut String, cfg: &RunConfig, l: f64) {
    let _ = writeln!(
        out,
        "PLOB at {l} km: absolute (eta_det = 1) {}  relative (eta_det = {}) {}",
        plob_cell(plob_bound(cfg.exp.fiber_loss, l, 1.0)),
        cfg.exp.detector_efficiency,
        plob_cell(plob_bound(cfg.exp.fiber_loss, l, cfg.exp.detector_efficiency))
    );
}

pub fn cmd_plob(cfg: &RunConfig, sweep: bool) -> Result<Outcome> {
    let distances = if sweep { cfg.range.points() } else { vec![cfg.distance] };
    let mut out = String::from("distance_km,plob1,plob2\n");
    for l in distances {
        let _ = writeln!(
            out,
            "{l},{},{}",
            plob_cell(plob_bound(cfg.exp.fiber_loss, l, 1.0)),
            plob_cell(plob_bound(cfg.exp.fiber_loss, l, cfg.exp.detector_efficiency))
        );
    }
    Ok(Outcome::ok(emit(cfg, out)?))
}

/// Runs the oracle over `mc_seeds` seeds starting at `seed`, using the label
/// proportions of the optimized BFER point at the configured distance.
pub fn mc_verify_report(cfg: &RunConfig, inject_fault: bool) -> Result<(String, bool, Vec<mcsim::SeedRun>)> {
    let mut asym = cfg.clone();
    asym.mode = Mode::Asymptotic;
    asym.source = snsqkd::pipeline::UntaggedSource::Exact;
    asym.exp.total_pulses = 1.0;
    let r = scan::solve(&asym, Variant::Bfer, cfg.distance, Execution::default())?;
    let counts = r.evaluation.counts;
    let untagged = r.evaluation.untagged;
    let mc = McConfig {
        len: cfg.mc_bits,
        fault_scale: if inject_fault { 1.1 } else { 1.0 },
    };
    let seeds: Vec<u64> = (0..cfg.mc_seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let runs = mcsim::verify_seeds(&counts, &untagged, &mc, &seeds, Execution::default())?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# snsqkd mc-verify prng={PRNG_ALGORITHM} bits={} seeds={}",
        cfg.mc_bits,
        seeds.len()
    );
    let _ = writeln!(
        out,
        "# proportions from preset {} at {} km: C0 {:.6e} C1 {:.6e} D {:.6e} V {:.6e}; untagged {:.6e}",
        cfg.preset,
        cfg.distance,
        counts.n_c0 / counts.n_t(),
        counts.n_c1 / counts.n_t(),
        counts.n_d / counts.n_t(),
        counts.n_v / counts.n_t(),
        untagged.n1 / counts.n_t()
    );
    let _ = writeln!(out, "seed,statistic,analytic,empirical,sigma,z");
    let mut flagged_seeds = 0;
    for run in &runs {
        for row in &run.report.rows {
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{:e},{:.4}",
                run.report.seed, row.statistic, row.analytic, row.empirical, row.sigma, row.z
            );
        }
        if !run.report.passed() || !run.sandwich_ok {
            flagged_seeds += 1;
        }
    }
    let flags: usize = runs.iter().map(|r| r.report.flagged().len()).sum();
    let sandwich = runs.iter().filter(|r| !r.sandwich_ok).count();
    let _ = writeln!(
        out,
        "# flagged statistics: {flags}; seeds with flags: {flagged_seeds}/{}; sandwich failures: {sandwich}",
        runs.len()
    );
    Ok((out, flags == 0 && sandwich == 0, runs))
}

pub fn cmd_mc_verify(cfg: &RunConfig, inject_fault: bool) -> Result<Outcome> {
    let (text, success, _) = mc_verify_report(cfg, inject_fault)?;
    let summary = text.lines().last().unwrap_or_default().to_string();
    let text = emit(cfg, text)?;
    let text = if cfg.out.is_some() {
        format!("{text}{summary}\n")
    } else {
        text
    };
    Ok(Outcome { text, success })
}

pub fn qubit_report(cfg: &RunConfig, inject_fault: bool) -> Result<(String, bool)> {
    let grid = QubitGrid {
        n_theta: cfg.qubit_grid,
        n_alpha: cfg.qubit_grid,
        n_beta: cfg.qubit_grid,
        bound_scale: if inject_fault { 0.9 } else { 1.0 },
    };
    let r = qubitmodel::verify_iteration_inequality(&grid, Execution::default())?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "grid {}^3 = {} points, bound scale {}",
        cfg.qubit_grid, r.points, grid.bound_scale
    );
    let _ = writeln!(out, "violations (> 1e-12): {}", r.violations);
    let _ = writeln!(
        out,
        "max e_odd - 2e(1-e): {:e} at theta = {:.6}, alpha = {:.6}, beta = {:.6}",
        r.max_violation, r.worst_point.0, r.worst_point.1, r.worst_point.2
    );
    let _ = writeln!(out, "beta spread of e_odd: {:e}", r.beta_spread);
    let _ = writeln!(out, "matrix vs closed form: {:e}", r.closed_form_gap);
    let mut example_ok = true;
    let _ = writeln!(out, "pure family (|00> + e^(i phi)|11>)/sqrt2:");
    let _ = writeln!(out, "  phi, e_ph, e_odd, e_even, sin^2(phi)");
    for k in 1..=7 {
        let phi = k as f64 * std::f64::consts::PI / 16.0;
        let ex = qubitmodel::parity_example(phi)?;
        example_ok &= ex.odd_error.abs() <= 1e-12 && ex.even_error > 1e-12;
        let _ = writeln!(
            out,
            "  {phi:.6}, {:.6e}, {:.3e}, {:.6e}, {:.6e}",
            ex.initial_error,
            ex.odd_error,
            ex.even_error,
            phi.sin().powi(2)
        );
    }
    let passed = r.passed() && example_ok;
    let _ = writeln!(out, "{}", if passed { "PASS" } else { "FAIL" });
    Ok((out, passed))
}

pub fn cmd_qubit_check(cfg: &RunConfig, inject_fault: bool) -> Result<Outcome> {
    let (text, success) = qubit_report(cfg, inject_fault)?;
    Ok(Outcome {
        text: emit(cfg, text)?,
        success,
    })
}
