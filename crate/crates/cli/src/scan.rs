//! Distance sweeps and their CSV encoding.

use std::io::Write;
use std::path::Path;

use snsqkd::exec::Execution;
use snsqkd::mcsim::PRNG_ALGORITHM;
use snsqkd::optimizer::{optimize, OptimizationResult, OptimizationSpec};
use snsqkd::pipeline::{plob_bound, Evaluator, PipelineConfig, Variant};

use crate::config::{Mode, RunConfig};
use crate::{hexfloat, CliError, Result};

/// Optimized (or fixed-protocol) result for one variant at one distance.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantPoint {
    pub variant: Variant,
    pub rate: f64,
    pub p_z: f64,
    pub p: f64,
    pub mu_z: f64,
    pub slice_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub distance: f64,
    pub points: Vec<VariantPoint>,
    /// `None` where the bound is unbounded.
    pub plob1: Option<f64>,
    pub plob2: Option<f64>,
}

pub fn pipeline_config(cfg: &RunConfig, variant: Variant) -> PipelineConfig {
    let mut pc = if cfg.mode == Mode::Finite {
        PipelineConfig::finite(cfg.exp.failure_prob)
    } else {
        PipelineConfig::asymptotic(variant)
    };
    pc.variant = variant;
    pc.source = cfg.source;
    pc.vacuum_credit = cfg.vacuum_credit;
    pc
}

pub fn optimization_spec(cfg: &RunConfig, pc: &PipelineConfig) -> OptimizationSpec {
    let mut spec = OptimizationSpec::for_config(pc)
        .with_decoys(cfg.mu1, cfg.mu2)
        .with_p_z_max(cfg.p_z_max)
        .with_seed(cfg.seed);
    if let Some(k) = cfg.slice_k {
        spec.base.slice_width = 2.0 * std::f64::consts::PI / k as f64;
        spec.slices.clear();
    }
    spec
}

/// Optimizes (or evaluates the fixed protocol) at one distance.
pub fn solve(cfg: &RunConfig, variant: Variant, distance: f64, exec: Execution) -> Result<OptimizationResult> {
    let exp = cfg.exp_at(distance);
    let pc = pipeline_config(cfg, variant);
    if let Some(proto) = &cfg.protocol {
        let evaluation = Evaluator::new(exp, pc).evaluate(proto)?;
        return Ok(OptimizationResult {
            best: *proto,
            rate: evaluation.key.rate,
            key: evaluation.key,
            evaluation,
            runs: Vec::new(),
        });
    }
    Ok(optimize(&optimization_spec(cfg, &pc).with_exec(exec), &exp, pc)?)
}

pub fn run_scan(cfg: &RunConfig, exec: Execution) -> Result<Vec<ScanRow>> {
    let distances = cfg.range.points();
    let rows = exec.map(&distances, |&l| -> Result<ScanRow> {
        let mut points = Vec::new();
        for &v in &cfg.variants {
            let r = solve(cfg, v, l, Execution::Sequential)?;
            points.push(VariantPoint {
                variant: v,
                rate: r.rate,
                p_z: r.best.p_z,
                p: r.best.p_send,
                mu_z: r.best.mu_z,
                slice_width: r.best.slice_width,
            });
        }
        Ok(ScanRow {
            distance: l,
            points,
            plob1: plob_bound(cfg.exp.fiber_loss, l, 1.0),
            plob2: plob_bound(cfg.exp.fiber_loss, l, cfg.exp.detector_efficiency),
        })
    });
    rows.into_iter().collect()
}

/// Scientific notation with 6 significant digits.
pub fn sci(x: f64) -> String {
    format!("{x:.5e}")
}

pub fn columns(variants: &[Variant]) -> Vec<String> {
    let mut cols = vec!["distance_km".to_string()];
    for v in variants {
        for suffix in ["rate", "rate_hex", "p_z", "p", "mu_z", "slice"] {
            cols.push(format!("{}_{suffix}", v.name()));
        }
    }
    cols.extend(["plob1", "plob1_hex", "plob2", "plob2_hex"].map(String::from));
    cols
}

pub fn header(cfg: &RunConfig) -> String {
    let mut h = String::new();
    h.push_str("# snsqkd scan\n");
    h.push_str(&format!(
        "# preset={} mode={} seed={} prng={PRNG_ALGORITHM}\n",
        cfg.preset,
        cfg.mode.name(),
        cfg.seed
    ));
    let e = &cfg.exp;
    h.push_str(&format!(
        "# dark_count={} detector_efficiency={} ec_inefficiency={} misalignment={} fiber_loss={} total_pulses={} failure_prob={} misalignment_model={:?}\n",
        e.dark_count, e.detector_efficiency, e.ec_inefficiency, e.misalignment, e.fiber_loss, e.total_pulses, e.failure_prob, e.misalignment_model
    ));
    for (k, v) in cfg.applied.iter().filter(|(k, _)| k != "out") {
        h.push_str(&format!("# set {k}={v}\n"));
    }
    h.push_str("# columns: distance_km; per variant: optimized rate per pulse (6 significant digits and exact hexfloat), p_z, p, mu_z, phase slice width (rad);\n");
    h.push_str("# plob1: -log2(1 - 10^(-fiber_loss L / 10)); plob2: the same with one factor of detector_efficiency; 'unbounded' at unit transmittance\n");
    h
}

fn bound_cells(b: Option<f64>) -> [String; 2] {
    match b {
        Some(x) => [sci(x), hexfloat::format(x)],
        None => ["unbounded".into(), hexfloat::format(f64::INFINITY)],
    }
}

pub fn write_csv<W: Write>(cfg: &RunConfig, rows: &[ScanRow], mut out: W) -> Result<()> {
    out.write_all(header(cfg).as_bytes())
        .map_err(|e| CliError::Format(e.to_string()))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns(&cfg.variants))?;
    for row in rows {
        let mut rec = vec![format!("{}", row.distance)];
        for p in &row.points {
            rec.extend([
                sci(p.rate),
                hexfloat::format(p.rate),
                sci(p.p_z),
                sci(p.p),
                sci(p.mu_z),
                sci(p.slice_width),
            ]);
        }
        rec.extend(bound_cells(row.plob1));
        rec.extend(bound_cells(row.plob2));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::Format(e.to_string()))?;
    Ok(())
}

/// Exact values recovered from a scan file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub distance: f64,
    /// `(variant name, rate)` from the hexfloat columns.
    pub rates: Vec<(String, f64)>,
    pub plob1: f64,
    pub plob2: f64,
}

pub fn read_csv(path: &Path) -> Result<Vec<ParsedRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = r.headers()?.clone();
    let hex_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_suffix("_rate_hex").map(|v| (i, v.to_string())))
        .collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Format(format!("missing column {name}")))
    };
    let (c1, c2) = (col("plob1_hex")?, col("plob2_hex")?);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let hex = |i: usize| hexfloat::parse(&rec[i]).map_err(CliError::Format);
        rows.push(ParsedRow {
            distance: rec[0].parse().map_err(|e| CliError::Format(format!("distance: {e}")))?,
            rates: hex_cols
                .iter()
                .map(|(i, v)| hex(*i).map(|x| (v.clone(), x)))
                .collect::<Result<_>>()?,
            plob1: hex(c1)?,
            plob2: hex(c2)?,
        });
    }
    Ok(rows)
}
