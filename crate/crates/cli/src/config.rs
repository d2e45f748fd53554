//! Flat `key = value` run configuration with flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use snsqkd::channel::{ExperimentParams, MisalignmentModel, ProtocolParams};
use snsqkd::pipeline::{UntaggedSource, Variant};
use snsqkd::presets;
use thiserror::Error;

/// Where a setting came from, for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Flag => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("{origin}: field `{field}`: {reason}")]
pub struct ConfigError {
    pub origin: Origin,
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Asymptotic,
    Finite,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Asymptotic => "asymptotic",
            Mode::Finite => "finite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl DistanceRange {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub exp: ExperimentParams,
    pub mode: Mode,
    pub variants: Vec<Variant>,
    pub source: UntaggedSource,
    pub distance: f64,
    pub range: DistanceRange,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Fixed protocol; `None` optimizes.
    pub protocol: Option<ProtocolParams>,
    pub mu1: f64,
    pub mu2: f64,
    pub p_z_max: f64,
    /// Fixed phase slice `2 pi / k`; `None` scans `k = 4..=32` where it matters.
    pub slice_k: Option<u32>,
    pub vacuum_credit: bool,
    pub mc_bits: usize,
    pub mc_seeds: usize,
    pub qubit_grid: usize,
    /// Every applied `key = value`, in order, for output headers.
    pub applied: Vec<(String, String)>,
    explicit_source: bool,
    explicit_variants: bool,
    fixed: FixedProtocol,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct FixedProtocol {
    p_z: Option<f64>,
    p: Option<f64>,
    mu_z: Option<f64>,
}

pub const KEYS: &[&str] = &[
    "preset",
    "mode",
    "variants",
    "source",
    "distance",
    "range",
    "seed",
    "out",
    "dark_count",
    "detector_efficiency",
    "ec_inefficiency",
    "misalignment",
    "fiber_loss",
    "total_pulses",
    "failure_prob",
    "misalignment_model",
    "mu1",
    "mu2",
    "p_z_max",
    "slice_k",
    "p_z",
    "p",
    "mu_z",
    "vacuum_credit",
    "mc_bits",
    "mc_seeds",
    "qubit_grid",
];

impl Default for RunConfig {
    fn default() -> Self {
        let preset = presets::row_c();
        Self {
            preset: preset.name.to_string(),
            exp: preset.exp,
            mode: Mode::Asymptotic,
            variants: vec![Variant::Bfer],
            source: UntaggedSource::Exact,
            distance: 100.0,
            range: DistanceRange {
                start: 0.0,
                stop: 500.0,
                step: 50.0,
            },
            seed: 1,
            out: None,
            protocol: None,
            mu1: 0.05,
            mu2: 0.15,
            p_z_max: 0.9,
            slice_k: None,
            vacuum_credit: false,
            mc_bits: 1_000_000,
            mc_seeds: 32,
            qubit_grid: 100,
            applied: Vec::new(),
            explicit_source: false,
            explicit_variants: false,
            fixed: FixedProtocol::default(),
        }
    }
}

fn err(origin: &Origin, field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        origin: origin.clone(),
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(origin: &Origin, field: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| err(origin, field, format!("cannot parse {value:?}: {e}")))
}

fn boolean(origin: &Origin, field: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(err(origin, field, format!("expected a boolean, got {value:?}"))),
    }
}

pub fn parse_range(origin: &Origin, value: &str) -> Result<DistanceRange, ConfigError> {
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(err(origin, "range", format!("expected start:stop:step, got {value:?}")));
    }
    let r = DistanceRange {
        start: num(origin, "range", parts[0])?,
        stop: num(origin, "range", parts[1])?,
        step: num(origin, "range", parts[2])?,
    };
    if !(r.step > 0.0) {
        return Err(err(origin, "range", "step must be positive"));
    }
    if !(r.start >= 0.0 && r.stop >= r.start) {
        return Err(err(origin, "range", "range is empty or negative"));
    }
    Ok(r)
}

pub fn parse_variants(origin: &Origin, value: &str) -> Result<Vec<Variant>, ConfigError> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let key = item.to_ascii_lowercase();
        // PLOB columns are always emitted
        if key.starts_with("plob") {
            continue;
        }
        let v = item
            .parse::<Variant>()
            .map_err(|e| err(origin, "variants", e.to_string()))?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() && !value.to_ascii_lowercase().contains("plob") {
        return Err(err(origin, "variants", "variant list is empty"));
    }
    Ok(out)
}

impl RunConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str, origin: &Origin) -> Result<(), ConfigError> {
        let key = key.trim();
        let value = value.trim();
        let o = origin;
        match key {
            "preset" => {
                let p = presets::by_name(value).map_err(|e| err(o, key, e.to_string()))?;
                self.preset = p.name.to_string();
                self.exp = p.exp;
                if p.finite {
                    self.mode = Mode::Finite;
                    if p.name == "longhaul" {
                        self.distance = p.exp.distance_km;
                    }
                }
            }
            "mode" => {
                self.mode = match value.to_ascii_lowercase().as_str() {
                    "asymptotic" => Mode::Asymptotic,
                    "finite" => Mode::Finite,
                    _ => return Err(err(o, key, format!("expected asymptotic or finite, got {value:?}"))),
                }
            }
            "variants" => {
                self.variants = parse_variants(o, value)?;
                self.explicit_variants = true;
            }
            "source" => {
                self.source = match value.to_ascii_lowercase().as_str() {
                    "exact" => UntaggedSource::Exact,
                    "decoy" => UntaggedSource::Decoy,
                    _ => return Err(err(o, key, format!("expected exact or decoy, got {value:?}"))),
                };
                self.explicit_source = true;
            }
            "distance" => self.distance = num(o, key, value)?,
            "range" => self.range = parse_range(o, value)?,
            "seed" => self.seed = num(o, key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "dark_count" => self.exp.dark_count = num(o, key, value)?,
            "detector_efficiency" => self.exp.detector_efficiency = num(o, key, value)?,
            "ec_inefficiency" => self.exp.ec_inefficiency = num(o, key, value)?,
            "misalignment" => self.exp.misalignment = num(o, key, value)?,
            "fiber_loss" => self.exp.fiber_loss = num(o, key, value)?,
            "total_pulses" => self.exp.total_pulses = num(o, key, value)?,
            "failure_prob" => self.exp.failure_prob = num(o, key, value)?,
            "misalignment_model" => {
                self.exp.misalignment_model = match value.to_ascii_lowercase().as_str() {
                    "visibility" => MisalignmentModel::Visibility,
                    "mixing" | "error-mixing" => MisalignmentModel::ErrorMixing,
                    _ => return Err(err(o, key, format!("expected visibility or mixing, got {value:?}"))),
                }
            }
            "mu1" => self.mu1 = num(o, key, value)?,
            "mu2" => self.mu2 = num(o, key, value)?,
            "p_z_max" => self.p_z_max = num(o, key, value)?,
            "slice_k" => self.slice_k = Some(num(o, key, value)?),
            "p_z" => self.fixed.p_z = Some(num(o, key, value)?),
            "p" => self.fixed.p = Some(num(o, key, value)?),
            "mu_z" => self.fixed.mu_z = Some(num(o, key, value)?),
            "vacuum_credit" => self.vacuum_credit = boolean(o, key, value)?,
            "mc_bits" => self.mc_bits = num(o, key, value)?,
            "mc_seeds" => self.mc_seeds = num(o, key, value)?,
            "qubit_grid" => self.qubit_grid = num(o, key, value)?,
            _ => {
                return Err(err(o, key, format!("unknown field; known fields: {}", KEYS.join(", "))));
            }
        }
        self.applied.push((key.to_string(), value.to_string()));
        Ok(())
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::File {
                path: path.to_path_buf(),
                line: i + 1,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(&origin, line, "expected `key = value`"))?;
            if key.trim() == "preset" {
                // presets reset device parameters, so they must come first
                if self.applied.iter().any(|(k, _)| k != "preset") {
                    return Err(err(&origin, "preset", "preset must precede other settings"));
                }
            }
            self.set(key, value, &origin)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            origin: Origin::File {
                path: path.to_path_buf(),
                line: 0,
            },
            field: "-".into(),
            reason: e.to_string(),
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Resolves mode-dependent defaults and checks consistency.
    pub fn finish(&mut self) -> Result<(), ConfigError> {
        let o = Origin::Flag;
        if self.mode == Mode::Finite {
            if !self.explicit_variants {
                self.variants = vec![Variant::BferFinite];
            }
            if !self.explicit_source {
                self.source = UntaggedSource::Decoy;
            }
            if self.variants.iter().any(|v| !v.is_finite()) {
                return Err(err(&o, "variants", "finite mode evaluates bfer-finite only"));
            }
            if self.source != UntaggedSource::Decoy {
                return Err(err(&o, "source", "finite mode needs decoy bounds"));
            }
            if self.exp.total_pulses < 1e3 {
                return Err(err(
                    &o,
                    "total_pulses",
                    "finite mode needs a pulse count (total_pulses)",
                ));
            }
        } else if self.variants.iter().any(|v| v.is_finite()) {
            return Err(err(&o, "variants", "bfer-finite needs mode = finite"));
        }
        if !(self.distance >= 0.0) {
            return Err(err(&o, "distance", "distance must be non-negative"));
        }
        if let Some(k) = self.slice_k {
            if k == 0 {
                return Err(err(&o, "slice_k", "k must be positive"));
            }
        }
        self.exp.validate().map_err(|e| err(&o, "experiment", e.to_string()))?;
        let f = self.fixed;
        self.protocol = match (f.p, f.mu_z) {
            (None, None) if f.p_z.is_none() => None,
            (Some(p), Some(mu_z)) => {
                let p_z = f
                    .p_z
                    .unwrap_or(if self.mode == Mode::Finite { self.p_z_max } else { 1.0 });
                let mut proto = ProtocolParams::new(p_z, p, mu_z);
                proto.decoy_intensities = [0.0, self.mu1, self.mu2];
                if let Some(k) = self.slice_k {
                    proto.slice_width = 2.0 * std::f64::consts::PI / k as f64;
                }
                proto.validate().map_err(|e| err(&o, "protocol", e.to_string()))?;
                Some(proto)
            }
            _ => return Err(err(&o, "protocol", "a fixed protocol needs both p and mu_z")),
        };
        Ok(())
    }

    pub fn exp_at(&self, distance: f64) -> ExperimentParams {
        self.exp.at_distance(distance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_with_diagnostics() {
        let mut cfg = RunConfig::default();
        let text = "# comment\npreset = rowD\nvariants = aopp, plob-1\nrange = 100:400:50\n";
        cfg.apply_text(text, Path::new("run.cfg")).unwrap();
        cfg.finish().unwrap();
        assert_eq!(cfg.variants, vec![Variant::Aopp]);
        assert_eq!(cfg.exp.dark_count, 8e-8);
        assert_eq!(cfg.range.points().len(), 7);

        let mut cfg = RunConfig::default();
        let e = cfg
            .apply_text("mode = finite\nfiber_loss = abc\n", Path::new("x.cfg"))
            .unwrap_err();
        assert_eq!(e.field, "fiber_loss");
        assert!(e.to_string().starts_with("x.cfg:2"));

        let mut cfg = RunConfig::default();
        let e = cfg.apply_text("colour = blue", Path::new("x.cfg")).unwrap_err();
        assert!(e.to_string().contains("unknown field"));
    }

    #[test]
    fn empty_variant_list_is_rejected() {
        let e = parse_variants(&Origin::Flag, " , ").unwrap_err();
        assert_eq!(e.field, "variants");
    }

    #[test]
    fn finite_defaults() {
        let mut cfg = RunConfig::default();
        cfg.set("preset", "longhaul", &Origin::Flag).unwrap();
        cfg.finish().unwrap();
        assert_eq!(cfg.mode, Mode::Finite);
        assert_eq!(cfg.variants, vec![Variant::BferFinite]);
        assert_eq!(cfg.distance, 502.0);

        let mut cfg = RunConfig::default();
        cfg.set("mode", "finite", &Origin::Flag).unwrap();
        assert_eq!(cfg.finish().unwrap_err().field, "total_pulses");
    }

    #[test]
    fn range_validation() {
        assert!(parse_range(&Origin::Flag, "0:100:0").is_err());
        assert!(parse_range(&Origin::Flag, "100:0:10").is_err());
        assert_eq!(
            parse_range(&Origin::Flag, "0:10:5").unwrap().points(),
            vec![0.0, 5.0, 10.0]
        );
    }
}
