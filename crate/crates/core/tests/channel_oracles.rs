use std::f64::consts::PI;

use approx::assert_relative_eq;
use snsqkd::channel::{
    arm_transmittance, clicks_at_phase, effective_rate_phase_averaged, x_window_rates, ExperimentParams,
    MisalignmentModel, ProtocolParams, WindowRates,
};
use snsqkd::postproc::z_window_counts;
use snsqkd::presets;

fn exp(distance: f64) -> ExperimentParams {
    presets::row_c().exp.at_distance(distance)
}

/// Periodic trapezoid rule, spectrally accurate for smooth periodic integrands.
fn phase_average(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    (0..n).map(|i| f(2.0 * PI * i as f64 / n as f64)).sum::<f64>() / n as f64
}

#[test]
fn bessel_form_matches_direct_phase_average() {
    for l in [0.0, 50.0, 200.0, 450.0] {
        let e = exp(l);
        let eta = arm_transmittance(&e);
        for &(a, b) in &[(0.3, 0.3), (0.5, 0.1), (0.2, 0.0), (2.0, 1.5)] {
            let closed = effective_rate_phase_averaged(a, b, &e, eta);
            let direct = phase_average(|d| clicks_at_phase(a, b, d, &e, eta).effective(), 4096);
            assert_relative_eq!(closed, direct, max_relative = 1e-10);
        }
    }
}

#[test]
fn error_mixing_preserves_the_effective_rate() {
    let mut e = exp(100.0);
    let eta = arm_transmittance(&e);
    let vis = effective_rate_phase_averaged(0.3, 0.3, &e, eta);
    e.misalignment_model = MisalignmentModel::ErrorMixing;
    e.misalignment = 0.0;
    let ideal = phase_average(|d| clicks_at_phase(0.3, 0.3, d, &e, eta).effective(), 4096);
    e.misalignment = 0.05;
    let mixed = phase_average(|d| clicks_at_phase(0.3, 0.3, d, &e, eta).effective(), 4096);
    assert_relative_eq!(ideal, mixed, max_relative = 1e-12);
    assert!(vis > 0.0);
}

#[test]
fn slice_rates_approach_the_zero_phase_value() {
    let e = exp(100.0);
    let eta = arm_transmittance(&e);
    let at_zero = clicks_at_phase(0.1, 0.1, 0.0, &e, eta);
    let (q, t) = x_window_rates(0.1, 1e-4, &e, eta);
    assert_relative_eq!(q, at_zero.effective(), max_relative = 1e-8);
    assert_relative_eq!(t, at_zero.wrong, max_relative = 1e-8);
    let (q_wide, t_wide) = x_window_rates(0.1, 2.0 * PI, &e, eta);
    assert_relative_eq!(
        q_wide,
        effective_rate_phase_averaged(0.1, 0.1, &e, eta),
        max_relative = 1e-9
    );
    assert!(t_wide > t);
}

#[test]
fn z_counts_follow_the_window_probabilities() {
    let mut e = exp(150.0);
    e.total_pulses = 1e12;
    let proto = ProtocolParams::new(0.7, 0.2, 0.4);
    let rates = WindowRates::compute(&e, &proto);
    let c = z_window_counts(&e, &proto, &rates);
    let w = 1e12 * 0.49;
    assert_relative_eq!(c.n_c0, w * 0.2 * 0.8 * rates.q_s, max_relative = 1e-14);
    assert_relative_eq!(c.n_c1, c.n_c0, max_relative = 0.0);
    assert_relative_eq!(c.n_d, w * 0.04 * rates.q_ss, max_relative = 1e-14);
    assert_relative_eq!(c.n_v, w * 0.64 * rates.q_nn, max_relative = 1e-14);
}
