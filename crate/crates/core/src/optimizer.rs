//! Rate maximization over protocol parameters.
//!
//! Every free variable is bounded and mapped to an unconstrained coordinate
//! through a logistic transform (applied to the logarithm for log-scaled
//! variables). A coarse grid seeds downhill-simplex refinements from the best
//! cells plus a few seeded random starts.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{ExperimentParams, ProtocolParams};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::pipeline::{Evaluation, Evaluator, PipelineConfig, UntaggedSource};
use crate::postproc::KeyResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
    /// Grid cells along this axis.
    pub grid: usize,
}

impl Bound {
    pub fn new(lo: f64, hi: f64, scale: Scale, grid: usize) -> Self {
        Self { lo, hi, scale, grid }
    }

    /// Maps `u` in `[0, 1]` onto the bounded interval.
    pub fn from_unit(&self, u: f64) -> f64 {
        match self.scale {
            Scale::Linear => self.lo + (self.hi - self.lo) * u,
            Scale::Log => self.lo * (self.hi / self.lo).powf(u),
        }
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        let u = match self.scale {
            Scale::Linear => (v - self.lo) / (self.hi - self.lo),
            Scale::Log => (v / self.lo).ln() / (self.hi / self.lo).ln(),
        };
        u.clamp(0.0, 1.0)
    }

    pub fn from_free(&self, x: f64) -> f64 {
        self.from_unit(logistic(x))
    }

    pub fn to_free(&self, v: f64) -> f64 {
        logit(self.to_unit(v).clamp(1e-12, 1.0 - 1e-12))
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lo < self.hi && self.grid >= 1 && (self.scale == Scale::Linear || self.lo > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam {
                field: "bounds",
                reason: format!("bad bound {self:?}"),
            })
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexSettings {
    pub max_evals: usize,
    /// Initial edge length in free coordinates.
    pub step: f64,
    pub xtol: f64,
    pub ftol: f64,
}

impl Default for SimplexSettings {
    fn default() -> Self {
        Self {
            max_evals: 3000,
            step: 0.6,
            xtol: 1e-9,
            ftol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Restart {
    /// `"grid"` or `"random"`.
    pub origin: &'static str,
    pub start: Vec<f64>,
    pub start_value: f64,
    pub end: Vec<f64>,
    pub end_value: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub restarts: Vec<Restart>,
    pub grid_evals: usize,
}

/// Maximizes `f` by downhill simplex in free coordinates.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], settings: &SimplexSettings) -> (Vec<f64>, f64, usize) {
    let n = start.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut pts: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += settings.step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();
    loop {
        // best first
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        pts = idx.iter().map(|&i| pts[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();

        let (best, worst) = (vals[0], vals[n]);
        let fspread = (best - worst).abs();
        let xspread = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let flat = best.is_finite() && worst.is_finite() && fspread <= settings.ftol * best.abs().max(1e-300);
        if evals.get() >= settings.max_evals || (xspread <= settings.xtol) || (flat && xspread <= 1e-4) {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(1.0);
        let fr = eval(&xr);
        if fr > vals[0] {
            let xe = along(2.0);
            let fe = eval(&xe);
            if fe > fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr > vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr > vals[n] {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc > vals[n].max(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = pts[i].iter().zip(&pts[0]).map(|(x, b)| b + 0.5 * (x - b)).collect();
            vals[i] = eval(&shrunk);
            pts[i] = shrunk;
        }
    }
    let best = (0..=n).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    (pts[best].clone(), vals[best], evals.get())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSettings {
    pub top_cells: usize,
    pub random_restarts: usize,
    pub seed: u64,
    pub simplex: SimplexSettings,
    pub exec: Execution,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            top_cells: 5,
            random_restarts: 2,
            seed: 1,
            simplex: SimplexSettings::default(),
            exec: Execution::default(),
        }
    }
}

/// Grid search followed by simplex refinements; `f` takes bounded values.
pub fn maximize<F>(f: &F, bounds: &[Bound], settings: &SearchSettings) -> Result<MaxResult>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if bounds.is_empty() {
        return Err(Error::InvalidParam {
            field: "free_variables",
            reason: "nothing to optimize".into(),
        });
    }
    for b in bounds {
        b.validate()?;
    }
    let to_values = |x: &[f64]| -> Vec<f64> { x.iter().zip(bounds).map(|(&xi, b)| b.from_free(xi)).collect() };
    let free_f = |x: &[f64]| f(&to_values(x));

    let cells: usize = bounds.iter().map(|b| b.grid).product();
    let grid_units = |mut k: usize| -> Vec<f64> {
        bounds
            .iter()
            .map(|b| {
                let i = k % b.grid;
                k /= b.grid;
                (i as f64 + 0.5) / b.grid as f64
            })
            .collect()
    };
    let grid_vals = settings.exec.map_range(cells, |k| {
        let u = grid_units(k);
        let v: Vec<f64> = u.iter().zip(bounds).map(|(&ui, b)| b.from_unit(ui)).collect();
        f(&v)
    });
    let mut order: Vec<usize> = (0..cells).filter(|&k| grid_vals[k].is_finite()).collect();
    order.sort_by(|&a, &b| grid_vals[b].total_cmp(&grid_vals[a]));

    let mut starts: Vec<(&'static str, Vec<f64>, f64)> = order
        .iter()
        .take(settings.top_cells)
        .map(|&k| ("grid", grid_units(k).into_iter().map(logit).collect(), grid_vals[k]))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    for _ in 0..settings.random_restarts {
        let x: Vec<f64> = bounds.iter().map(|_| logit(rng.gen_range(0.05..0.95))).collect();
        let v = free_f(&x);
        starts.push(("random", x, v));
    }
    if starts.iter().all(|s| !s.2.is_finite()) {
        return Err(Error::Degenerate(
            "objective is infeasible on every grid cell and random start".into(),
        ));
    }

    let restarts: Vec<Restart> = settings.exec.map(&starts, |(origin, x0, v0)| {
        let (x, v, evals) = nelder_mead(&free_f, x0, &settings.simplex);
        let (end, end_value) = if v >= *v0 { (x, v) } else { (x0.clone(), *v0) };
        Restart {
            origin,
            start: to_values(x0),
            start_value: *v0,
            end: to_values(&end),
            end_value,
            evals,
        }
    });
    let best = restarts
        .iter()
        .max_by(|a, b| a.end_value.total_cmp(&b.end_value))
        .expect("at least one restart");
    Ok(MaxResult {
        x: best.end.clone(),
        value: best.end_value,
        restarts: restarts.clone(),
        grid_evals: cells,
    })
}

/// Protocol parameters the optimizer may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeVar {
    PZ,
    PSend,
    MuZ,
    Mu1,
    Mu2,
}

impl FreeVar {
    pub fn name(self) -> &'static str {
        match self {
            FreeVar::PZ => "p_z",
            FreeVar::PSend => "p",
            FreeVar::MuZ => "mu_z",
            FreeVar::Mu1 => "mu1",
            FreeVar::Mu2 => "mu2",
        }
    }

    fn apply(self, proto: &mut ProtocolParams, v: f64) {
        match self {
            FreeVar::PZ => *proto = (*proto).with_p_z(v),
            FreeVar::PSend => proto.p_send = v,
            FreeVar::MuZ => proto.mu_z = v,
            FreeVar::Mu1 => proto.decoy_intensities[1] = v,
            FreeVar::Mu2 => proto.decoy_intensities[2] = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationSpec {
    /// Values of the variables that stay fixed.
    pub base: ProtocolParams,
    pub free: Vec<(FreeVar, Bound)>,
    /// Candidate phase-slice widths; empty keeps `base.slice_width`.
    pub slices: Vec<f64>,
    pub search: SearchSettings,
}

/// `2 pi / k` for `k = 4..=32`.
pub fn slice_candidates() -> Vec<f64> {
    (4..=32).map(|k| 2.0 * PI / k as f64).collect()
}

impl OptimizationSpec {
    /// Sending probability and signal intensity, all windows signal windows.
    pub fn asymptotic() -> Self {
        Self {
            base: ProtocolParams::new(1.0, 0.1, 0.3),
            free: vec![
                (FreeVar::PSend, Bound::new(1e-4, 0.99, Scale::Log, 16)),
                (FreeVar::MuZ, Bound::new(1e-3, 3.0, Scale::Log, 16)),
            ],
            slices: Vec::new(),
            search: SearchSettings::default(),
        }
    }

    /// Adds the signal-window probability and scans the phase slice.
    pub fn finite() -> Self {
        let mut spec = Self::asymptotic();
        spec.base = ProtocolParams::new(0.8, 0.1, 0.3);
        spec.free
            .insert(0, (FreeVar::PZ, Bound::new(0.05, 0.9, Scale::Linear, 6)));
        spec.slices = slice_candidates();
        spec
    }

    pub fn for_config(config: &PipelineConfig) -> Self {
        if config.variant.is_finite() {
            Self::finite()
        } else if config.source == UntaggedSource::Decoy {
            let mut spec = Self::asymptotic();
            spec.slices = slice_candidates();
            spec
        } else {
            Self::asymptotic()
        }
    }

    pub fn with_decoys(mut self, mu1: f64, mu2: f64) -> Self {
        self.base.decoy_intensities = [0.0, mu1, mu2];
        self
    }

    pub fn with_p_z_max(mut self, hi: f64) -> Self {
        for (v, b) in self.free.iter_mut() {
            if *v == FreeVar::PZ {
                b.hi = hi;
            }
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.search.seed = seed;
        self
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.search.exec = exec;
        self
    }

    pub fn params_at(&self, values: &[f64], slice: f64) -> ProtocolParams {
        let mut p = self.base;
        p.slice_width = slice;
        for ((var, _), &v) in self.free.iter().zip(values) {
            var.apply(&mut p, v);
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceRun {
    pub slice_width: f64,
    pub value: f64,
    pub restarts: Vec<Restart>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best: ProtocolParams,
    /// `max(N_f, 0) / N` at the optimum; zero when no point yields key.
    pub rate: f64,
    pub key: KeyResult,
    pub evaluation: Evaluation,
    pub runs: Vec<SliceRun>,
}

impl OptimizationResult {
    pub fn restarts(&self) -> impl Iterator<Item = &Restart> {
        self.runs.iter().flat_map(|r| r.restarts.iter())
    }
}

pub fn optimize(spec: &OptimizationSpec, exp: &ExperimentParams, config: PipelineConfig) -> Result<OptimizationResult> {
    exp.validate()?;
    let evaluator = Evaluator::new(*exp, config);
    let bounds: Vec<Bound> = spec.free.iter().map(|(_, b)| *b).collect();
    let slices = if spec.slices.is_empty() {
        vec![spec.base.slice_width]
    } else {
        spec.slices.clone()
    };
    let mut inner = spec.search;
    // slices are scanned concurrently; each search runs sequentially
    let outer = if slices.len() > 1 {
        inner.exec
    } else {
        Execution::Sequential
    };
    if slices.len() > 1 {
        inner.exec = Execution::Sequential;
    }
    let runs = outer.map(&slices, |&slice| {
        let f = |v: &[f64]| evaluator.objective(&spec.params_at(v, slice));
        maximize(&f, &bounds, &inner).map(|r| (slice, r))
    });
    let mut best: Option<(f64, MaxResult)> = None;
    let mut slice_runs = Vec::new();
    let mut last_err = None;
    for run in runs {
        match run {
            Ok((slice, r)) => {
                slice_runs.push(SliceRun {
                    slice_width: slice,
                    value: r.value,
                    restarts: r.restarts.clone(),
                });
                if best.as_ref().is_none_or(|(_, b)| r.value > b.value) {
                    best = Some((slice, r));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (slice, result) = match best {
        Some(b) => b,
        None => return Err(last_err.unwrap_or_else(|| Error::Degenerate("no slice candidates".into()))),
    };
    let params = spec.params_at(&result.x, slice);
    let evaluation = evaluator.evaluate(&params)?;
    Ok(OptimizationResult {
        best: params,
        rate: evaluation.key.rate,
        key: evaluation.key,
        evaluation,
        runs: slice_runs,
    })
}
