//! Symmetric two-arm channel model.
//!
//! Alice and Bob sit at distance `L/2` from the measurement station. Each arm
//! has transmittance `eta_arm = eta0 * 10^(-alpha * L / 20)` (detector
//! efficiency folded in). Two phase-randomised coherent pulses with
//! intensities `mu_a`, `mu_b` and phase difference `delta` produce Poissonian
//! clicks at the two output detectors with means
//!
//! ```text
//! lambda_± = S/2 ± kappa cos(delta),  S = eta_arm (mu_a + mu_b),
//! kappa = eta_arm sqrt(mu_a mu_b) V
//! ```
//!
//! where `V` is the interference visibility. An effective event is exactly one
//! detector clicking; double clicks are discarded.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::mathcore::{bessel_i0, simpson};

/// Number of Simpson sub-intervals used for phase-slice averages.
pub const SLICE_QUADRATURE_POINTS: usize = 1024;

/// How misalignment enters the interference pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MisalignmentModel {
    /// Misalignment reduces visibility to `V = 1 - 2 e_a`.
    #[default]
    Visibility,
    /// Perfect interference, then each click is swapped to the other
    /// detector with probability `e_a`.
    ErrorMixing,
}

/// Hardware and channel constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentParams {
    /// Dark-count probability per detector per window.
    pub dark_count: f64,
    pub detector_efficiency: f64,
    /// Error-correction inefficiency `f >= 1`.
    pub ec_inefficiency: f64,
    pub misalignment: f64,
    /// Fiber loss in dB/km.
    pub fiber_loss: f64,
    /// Total number of time windows `N`.
    pub total_pulses: f64,
    /// Base failure probability `xi` of every Chernoff estimate.
    pub failure_prob: f64,
    /// Alice-Bob separation in km.
    pub distance_km: f64,
    pub misalignment_model: MisalignmentModel,
}

impl ExperimentParams {
    pub fn validate(&self) -> Result<()> {
        unit("dark_count", self.dark_count)?;
        unit("detector_efficiency", self.detector_efficiency)?;
        unit("misalignment", self.misalignment)?;
        if !(self.ec_inefficiency >= 1.0) {
            return Err(invalid(
                "ec_inefficiency",
                format!("must be >= 1, got {}", self.ec_inefficiency),
            ));
        }
        if !(self.fiber_loss > 0.0) {
            return Err(invalid("fiber_loss", format!("must be > 0, got {}", self.fiber_loss)));
        }
        if !(self.total_pulses >= 1.0) {
            return Err(invalid(
                "total_pulses",
                format!("must be >= 1, got {}", self.total_pulses),
            ));
        }
        if !(self.failure_prob > 0.0 && self.failure_prob < 1.0) {
            return Err(invalid(
                "failure_prob",
                format!("must lie in (0, 1), got {}", self.failure_prob),
            ));
        }
        if !(self.distance_km >= 0.0) {
            return Err(invalid(
                "distance_km",
                format!("must be >= 0, got {}", self.distance_km),
            ));
        }
        Ok(())
    }

    pub fn at_distance(mut self, distance_km: f64) -> Self {
        self.distance_km = distance_km;
        self
    }

    /// Interference visibility used inside the detector means.
    pub fn visibility(&self) -> f64 {
        match self.misalignment_model {
            MisalignmentModel::Visibility => 1.0 - 2.0 * self.misalignment,
            MisalignmentModel::ErrorMixing => 1.0,
        }
    }
}

/// Source and protocol choices that the optimizer tunes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// Probability of committing to a signal window.
    pub p_z: f64,
    /// Sending probability inside a signal window.
    pub p_send: f64,
    /// Signal intensity.
    pub mu_z: f64,
    /// Decoy intensities `[0, mu1, mu2]`.
    pub decoy_intensities: [f64; 3],
    /// Probabilities of the three decoy choices; together with `p_z` they sum to one.
    pub decoy_probs: [f64; 3],
    /// Width of the post-selected phase slice, radians.
    pub slice_width: f64,
}

impl ProtocolParams {
    pub const DEFAULT_DECOYS: [f64; 3] = [0.0, 0.05, 0.15];
    pub const DEFAULT_SLICE: f64 = 2.0 * PI / 16.0;

    /// Protocol with decoy probability mass `1 - p_z` split evenly over the
    /// three decoy intensities.
    pub fn new(p_z: f64, p_send: f64, mu_z: f64) -> Self {
        let rest = (1.0 - p_z) / 3.0;
        Self {
            p_z,
            p_send,
            mu_z,
            decoy_intensities: Self::DEFAULT_DECOYS,
            decoy_probs: [rest; 3],
            slice_width: Self::DEFAULT_SLICE,
        }
    }

    /// Changes `p_z`, rescaling the decoy probabilities to keep the source
    /// distribution normalised.
    pub fn with_p_z(mut self, p_z: f64) -> Self {
        let old_rest: f64 = self.decoy_probs.iter().sum();
        let new_rest = 1.0 - p_z;
        if old_rest > 0.0 {
            for q in &mut self.decoy_probs {
                *q *= new_rest / old_rest;
            }
        } else {
            self.decoy_probs = [new_rest / 3.0; 3];
        }
        self.p_z = p_z;
        self
    }

    pub fn mu1(&self) -> f64 {
        self.decoy_intensities[1]
    }

    pub fn mu2(&self) -> f64 {
        self.decoy_intensities[2]
    }

    pub fn validate(&self) -> Result<()> {
        unit("p_z", self.p_z)?;
        unit("p_send", self.p_send)?;
        for &q in &self.decoy_probs {
            unit("decoy_probs", q)?;
        }
        let total = self.p_z + self.decoy_probs.iter().sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "decoy_probs",
                format!("source distribution sums to {total}, not 1"),
            ));
        }
        if !(self.mu_z > 0.0) {
            return Err(invalid("mu_z", format!("must be > 0, got {}", self.mu_z)));
        }
        let [mu0, mu1, mu2] = self.decoy_intensities;
        if mu0 != 0.0 {
            return Err(invalid("decoy_intensities", "first decoy intensity must be the vacuum"));
        }
        if !(0.0 < mu1 && mu1 < mu2) {
            return Err(invalid(
                "decoy_intensities",
                format!("need 0 < mu1 < mu2, got {mu1}, {mu2}"),
            ));
        }
        if !(self.slice_width > 0.0 && self.slice_width <= 2.0 * PI) {
            return Err(invalid(
                "slice_width",
                format!("need 0 < delta <= 2 pi, got {}", self.slice_width),
            ));
        }
        Ok(())
    }
}

fn unit(field: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, format!("must lie in [0, 1], got {v}")))
    }
}

/// Per-arm transmittance including detector efficiency.
pub fn arm_transmittance(params: &ExperimentParams) -> f64 {
    params.detector_efficiency * 10f64.powf(-params.fiber_loss * (params.distance_km / 2.0) / 10.0)
}

/// Click probabilities at fixed phase difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickPair {
    /// Only the detector expected for this phase clicks.
    pub right: f64,
    /// Only the other detector clicks.
    pub wrong: f64,
}

impl ClickPair {
    pub fn effective(&self) -> f64 {
        self.right + self.wrong
    }
}

/// Single-click probabilities for pulses `mu_a`, `mu_b` with phase difference
/// `delta`. "Right" is the detector favoured by constructive interference at
/// `delta = 0`.
pub fn clicks_at_phase(mu_a: f64, mu_b: f64, delta: f64, params: &ExperimentParams, eta_arm: f64) -> ClickPair {
    let d = params.dark_count;
    let half = 0.5 * eta_arm * (mu_a + mu_b);
    let kappa = eta_arm * (mu_a * mu_b).sqrt() * params.visibility() * delta.cos();
    let lam_right = half + kappa;
    let lam_wrong = half - kappa;
    let silent = |lam: f64| (1.0 - d) * (-lam).exp();
    let ideal = ClickPair {
        right: (1.0 - silent(lam_right)) * silent(lam_wrong),
        wrong: (1.0 - silent(lam_wrong)) * silent(lam_right),
    };
    match params.misalignment_model {
        MisalignmentModel::Visibility => ideal,
        MisalignmentModel::ErrorMixing => {
            let e = params.misalignment;
            ClickPair {
                right: (1.0 - e) * ideal.right + e * ideal.wrong,
                wrong: (1.0 - e) * ideal.wrong + e * ideal.right,
            }
        }
    }
}

/// Effective-event probability averaged over a uniformly random phase
/// difference (closed Bessel form).
pub fn effective_rate_phase_averaged(mu_a: f64, mu_b: f64, params: &ExperimentParams, eta_arm: f64) -> f64 {
    let d = params.dark_count;
    let s = eta_arm * (mu_a + mu_b);
    let kappa = eta_arm * (mu_a * mu_b).sqrt() * params.visibility();
    // kappa <= S/2, so the guard in bessel_i0 can only trip for absurd intensities.
    let i0 = bessel_i0(kappa.abs()).unwrap_or(f64::INFINITY);
    let rate = 2.0 * (1.0 - d) * (-0.5 * s).exp() * i0 - 2.0 * (1.0 - d).powi(2) * (-s).exp();
    rate.clamp(0.0, 1.0)
}

/// Effective and error rates of `X_k` windows whose announced phase
/// difference falls in the slice of width `slice_width` around 0 (or,
/// equivalently, around pi with the detector roles swapped).
///
/// Returns `(q_x, t_x)`: the conditional effective-event probability and the
/// conditional probability that only the wrong detector clicks.
pub fn x_window_rates(mu_k: f64, slice_width: f64, params: &ExperimentParams, eta_arm: f64) -> (f64, f64) {
    let half = 0.5 * slice_width;
    let q = simpson(
        |delta| clicks_at_phase(mu_k, mu_k, delta, params, eta_arm).effective(),
        -half,
        half,
        SLICE_QUADRATURE_POINTS,
    ) / slice_width;
    let t = simpson(
        |delta| clicks_at_phase(mu_k, mu_k, delta, params, eta_arm).wrong,
        -half,
        half,
        SLICE_QUADRATURE_POINTS,
    ) / slice_width;
    (q.clamp(0.0, 1.0), t.clamp(0.0, 1.0))
}

/// Single-photon yield and phase-error rate for a photon emitted from one arm.
pub fn single_photon_quantities(params: &ExperimentParams, eta_arm: f64) -> (f64, f64) {
    let d = params.dark_count;
    let y1 = eta_arm * (1.0 - d) + (1.0 - eta_arm) * 2.0 * d * (1.0 - d);
    if y1 == 0.0 {
        return (0.0, 0.5);
    }
    let e1 = (eta_arm * params.misalignment * (1.0 - d) + (1.0 - eta_arm) * d * (1.0 - d)) / y1;
    (y1, e1)
}

/// Every expected rate the counting formulas consume, at one distance.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRates {
    pub eta_arm: f64,
    /// Neither party sends.
    pub q_nn: f64,
    /// Exactly one party sends the signal intensity.
    pub q_s: f64,
    /// Both send the signal intensity (phase averaged).
    pub q_ss: f64,
    /// One-sided decoy rates `S_nu` for each decoy intensity.
    pub q_s_decoy: [f64; 3],
    /// Post-selected `X_k` effective rates.
    pub q_x: [f64; 3],
    /// Post-selected `X_k` error rates.
    pub t_x: [f64; 3],
    pub y1: f64,
    pub e1_raw: f64,
}

impl WindowRates {
    pub fn compute(exp: &ExperimentParams, proto: &ProtocolParams) -> Self {
        let eta = arm_transmittance(exp);
        let q_s_decoy = proto
            .decoy_intensities
            .map(|mu| effective_rate_phase_averaged(mu, 0.0, exp, eta));
        let x = proto
            .decoy_intensities
            .map(|mu| x_window_rates(mu, proto.slice_width, exp, eta));
        let (y1, e1_raw) = single_photon_quantities(exp, eta);
        Self {
            eta_arm: eta,
            q_nn: effective_rate_phase_averaged(0.0, 0.0, exp, eta),
            q_s: effective_rate_phase_averaged(proto.mu_z, 0.0, exp, eta),
            q_ss: effective_rate_phase_averaged(proto.mu_z, proto.mu_z, exp, eta),
            q_s_decoy,
            q_x: x.map(|r| r.0),
            t_x: x.map(|r| r.1),
            y1,
            e1_raw,
        }
    }

    /// Signal-window rates only; skips the decoy quadratures.
    pub fn signal_only(exp: &ExperimentParams, proto: &ProtocolParams) -> Self {
        let eta = arm_transmittance(exp);
        let (y1, e1_raw) = single_photon_quantities(exp, eta);
        let q_nn = effective_rate_phase_averaged(0.0, 0.0, exp, eta);
        Self {
            eta_arm: eta,
            q_nn,
            q_s: effective_rate_phase_averaged(proto.mu_z, 0.0, exp, eta),
            q_ss: effective_rate_phase_averaged(proto.mu_z, proto.mu_z, exp, eta),
            q_s_decoy: [q_nn; 3],
            q_x: [q_nn; 3],
            t_x: [0.5 * q_nn; 3],
            y1,
            e1_raw,
        }
    }
}
