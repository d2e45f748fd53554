//! Named device parameter sets.

use crate::channel::{ExperimentParams, MisalignmentModel};
use crate::error::{Error, Result};

/// Pulse count used for asymptotic presets; rates are then per-pulse counts.
pub const ASYMPTOTIC_PULSES: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub exp: ExperimentParams,
    /// Finite-size pulse count; asymptotic presets use per-pulse normalization.
    pub finite: bool,
}

fn base(
    dark_count: f64,
    detector_efficiency: f64,
    ec_inefficiency: f64,
    misalignment: f64,
    total_pulses: f64,
) -> ExperimentParams {
    ExperimentParams {
        dark_count,
        detector_efficiency,
        ec_inefficiency,
        misalignment,
        fiber_loss: 0.2,
        total_pulses,
        failure_prob: 1e-10,
        distance_km: 0.0,
        misalignment_model: MisalignmentModel::Visibility,
    }
}

pub fn row_a() -> Preset {
    Preset {
        name: "rowA",
        exp: base(1e-8, 0.30, 1.10, 0.03, 1e11),
        finite: true,
    }
}

pub fn row_b() -> Preset {
    Preset {
        name: "rowB",
        exp: base(1e-8, 0.30, 1.10, 0.03, 1e12),
        finite: true,
    }
}

pub fn row_c() -> Preset {
    Preset {
        name: "rowC",
        exp: base(1e-8, 0.50, 1.15, 0.05, ASYMPTOTIC_PULSES),
        finite: false,
    }
}

pub fn row_d() -> Preset {
    Preset {
        name: "rowD",
        exp: base(8e-8, 0.30, 1.15, 0.05, ASYMPTOTIC_PULSES),
        finite: false,
    }
}

pub fn row_e() -> Preset {
    Preset {
        name: "rowE",
        exp: base(8e-8, 0.30, 1.15, 0.10, ASYMPTOTIC_PULSES),
        finite: false,
    }
}

pub fn row_f() -> Preset {
    Preset {
        name: "rowF",
        exp: base(8e-8, 0.30, 1.15, 0.15, ASYMPTOTIC_PULSES),
        finite: false,
    }
}

/// The 502 km long-haul parameter set.
pub fn long_haul() -> Preset {
    Preset {
        name: "longhaul",
        exp: ExperimentParams {
            dark_count: 1.26e-8,
            detector_efficiency: 0.29,
            ec_inefficiency: 1.1,
            misalignment: 0.098,
            fiber_loss: 0.162,
            total_pulses: 2e13,
            failure_prob: 1.71e-10,
            distance_km: 502.0,
            misalignment_model: MisalignmentModel::Visibility,
        },
        finite: true,
    }
}

pub fn all() -> Vec<Preset> {
    vec![row_a(), row_b(), row_c(), row_d(), row_e(), row_f(), long_haul()]
}

pub fn names() -> Vec<&'static str> {
    all().iter().map(|p| p.name).collect()
}

/// Case-insensitive lookup; `C` and `rowC` are equivalent.
pub fn by_name(name: &str) -> Result<Preset> {
    let key = name.to_ascii_lowercase();
    let key = key.strip_prefix("row").map(|k| format!("row{k}")).unwrap_or_else(|| {
        if key.len() == 1 {
            format!("row{key}")
        } else {
            key.clone()
        }
    });
    all()
        .into_iter()
        .find(|p| p.name.to_ascii_lowercase() == key)
        .ok_or_else(|| Error::InvalidParam {
            field: "preset",
            reason: format!("unknown preset {name:?}; known: {}", names().join(", ")),
        })
}
