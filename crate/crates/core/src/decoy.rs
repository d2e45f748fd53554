//! Untagged-bit statistics: exact values for the asymptotic regime and
//! vacuum + two-weak-decoy bounds for the finite-size pipeline.
//!
//! The decoy bounds use one-sided statistics `S_nu` (exactly one party sends
//! intensity `nu`, the other sends vacuum) and the error rate `T` of
//! post-selected `X_1` windows:
//!
//! ```text
//! y1 >= [mu2^2 (e^mu1 S_mu1 - S_0) - mu1^2 (e^mu2 S_mu2 - S_0)] / [mu1 mu2 (mu2 - mu1)]
//! e1 <= (T - e^(-2 mu1) S_0 / 2) / (2 mu1 e^(-2 mu1) y1)
//! ```

use crate::channel::{ExperimentParams, ProtocolParams, WindowRates};
use crate::error::{Error, Result};

/// Untagged-bit count and phase-flip bound before any post-processing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UntaggedStats {
    /// Lower bound on untagged bits.
    pub n1: f64,
    /// Untagged bits among `C_0` events.
    pub n1_0: f64,
    /// Untagged bits among `C_1` events.
    pub n1_1: f64,
    /// Upper bound on the untagged phase-flip error rate.
    pub e1ph: f64,
    /// Effective vacuum-emission windows with exactly one sender.
    pub n0: f64,
    pub expected_n1: f64,
    pub expected_e1ph: f64,
}

impl UntaggedStats {
    /// Splits `n1` evenly between the two one-sender labels.
    pub fn symmetric(n1: f64, e1ph: f64, n0: f64) -> Self {
        Self {
            n1,
            n1_0: 0.5 * n1,
            n1_1: 0.5 * n1,
            e1ph,
            n0,
            expected_n1: n1,
            expected_e1ph: e1ph,
        }
    }
}

/// Expected number of signal windows with exactly one sender.
fn one_sender_windows(exp: &ExperimentParams, proto: &ProtocolParams) -> f64 {
    exp.total_pulses * proto.p_z * proto.p_z * 2.0 * proto.p_send * (1.0 - proto.p_send)
}

/// Exact untagged statistics, as reached with infinitely many decoy intensities.
pub fn untagged_asymptotic(exp: &ExperimentParams, proto: &ProtocolParams, rates: &WindowRates) -> UntaggedStats {
    let windows = one_sender_windows(exp, proto);
    let vacuum = (-proto.mu_z).exp();
    let n1 = windows * vacuum * proto.mu_z * rates.y1;
    let n0 = windows * vacuum * rates.q_nn;
    UntaggedStats::symmetric(n1, rates.e1_raw, n0)
}

/// Decoy-window statistics consumed by the bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyObservations {
    /// One-sided counting rates `[S_0, S_mu1, S_mu2]`.
    pub one_sided: [f64; 3],
    /// Error counting rate of post-selected `X_1` windows.
    pub slice_errors: f64,
}

impl DecoyObservations {
    /// Expected statistics from the channel model.
    pub fn expected(rates: &WindowRates) -> Self {
        Self {
            one_sided: rates.q_s_decoy,
            slice_errors: rates.t_x[1],
        }
    }
}

/// Lower bound on the single-photon yield.
pub fn yield_lower_bound(mu1: f64, mu2: f64, obs: &DecoyObservations) -> Result<f64> {
    let [s0, s1, s2] = obs.one_sided;
    let numerator = mu2 * mu2 * (mu1.exp() * s1 - s0) - mu1 * mu1 * (mu2.exp() * s2 - s0);
    if !(numerator > 0.0) {
        return Err(Error::BoundViolation(format!(
            "single-photon yield numerator is {numerator:e} for mu1 = {mu1}, mu2 = {mu2}"
        )));
    }
    Ok(numerator / (mu1 * mu2 * (mu2 - mu1)))
}

/// Upper bound on the single-photon phase-flip error rate, capped at 1/2.
pub fn phase_error_upper_bound(mu1: f64, y1_lower: f64, obs: &DecoyObservations) -> Result<f64> {
    let vac = (-2.0 * mu1).exp();
    let numerator = obs.slice_errors - vac * obs.one_sided[0] / 2.0;
    if numerator < 0.0 {
        return Err(Error::BoundViolation(format!(
            "phase-error numerator is {numerator:e}: slice errors below the vacuum contribution"
        )));
    }
    Ok((numerator / (2.0 * mu1 * vac * y1_lower)).min(0.5))
}

/// Untagged statistics bounded from decoy observations.
pub fn untagged_decoy(
    exp: &ExperimentParams,
    proto: &ProtocolParams,
    obs: &DecoyObservations,
) -> Result<UntaggedStats> {
    let (mu1, mu2) = (proto.mu1(), proto.mu2());
    if !(0.0 < mu1 && mu1 < mu2) {
        return Err(Error::InvalidParam {
            field: "decoy_intensities",
            reason: format!("need 0 < mu1 < mu2, got {mu1}, {mu2}"),
        });
    }
    let y1 = yield_lower_bound(mu1, mu2, obs)?;
    let e1 = phase_error_upper_bound(mu1, y1, obs)?;
    let windows = one_sender_windows(exp, proto);
    let vacuum = (-proto.mu_z).exp();
    let n1 = windows * vacuum * proto.mu_z * y1;
    let n0 = windows * vacuum * obs.one_sided[0];
    Ok(UntaggedStats::symmetric(n1, e1, n0))
}
