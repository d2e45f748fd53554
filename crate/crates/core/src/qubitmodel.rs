//! Density-matrix check of the phase-error iteration under parity rejection.
//!
//! A pair state shared by Alice and Bob lives on `{|00>, |01>, |10>, |11>}`
//! (Alice's qubit first):
//!
//! ```text
//! sigma = cos^2(t)|00><00| + sin^2(t)|11><11| + a e^{ib}|00><11| + a e^{-ib}|11><00|
//! ```
//!
//! Two independent copies are combined, projected onto the odd (or even)
//! parity subspace on both sides and reduced to a single pair.

use std::f64::consts::PI;

use nalgebra::{Matrix4, SMatrix};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;

pub type Mat4 = Matrix4<Complex64>;
type Mat16 = SMatrix<Complex64, 16, 16>;
type Mat4x16 = SMatrix<Complex64, 4, 16>;

const POSITIVITY_SLACK: f64 = 1e-15;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rho: Mat4,
}

/// Largest admissible coherence, `|cos(t) sin(t)|`.
pub fn coherence_limit(theta: f64) -> f64 {
    (theta.cos() * theta.sin()).abs()
}

pub fn make_sigma(theta: f64, alpha: f64, beta: f64) -> Result<PairState> {
    let limit = coherence_limit(theta);
    if !(alpha >= 0.0) || alpha > limit + POSITIVITY_SLACK {
        return Err(Error::Positivity { alpha, limit });
    }
    let mut rho = Mat4::zeros();
    rho[(0, 0)] = c(theta.cos().powi(2));
    rho[(3, 3)] = c(theta.sin().powi(2));
    rho[(0, 3)] = Complex64::from_polar(alpha, beta);
    rho[(3, 0)] = Complex64::from_polar(alpha, -beta);
    Ok(PairState {
        theta,
        alpha,
        beta,
        rho,
    })
}

fn plus() -> [Complex64; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [c(h), c(h)]
}

fn minus() -> [Complex64; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [c(h), c(-h)]
}

/// `sum_{kl} conj(v_k) rho_{kl} v_l` for a product vector `v = a (x) b`.
fn expectation_product(rho: &Mat4, a: [Complex64; 2], b: [Complex64; 2]) -> f64 {
    let v = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]];
    let mut total = Complex64::new(0.0, 0.0);
    for k in 0..4 {
        for l in 0..4 {
            total += v[k].conj() * rho[(k, l)] * v[l];
        }
    }
    total.re
}

/// `tr(M+ rho M+^dag + M- rho M-^dag)` with `M+ = |+><+| (x) |-><-|` and
/// `M- = |-><-| (x) |+><+|`.
pub fn phase_error_matrix(rho: &Mat4) -> f64 {
    expectation_product(rho, plus(), minus()) + expectation_product(rho, minus(), plus())
}

/// `(1 - 2 a cos b) / 2`.
pub fn phase_error_closed(alpha: f64, beta: f64) -> f64 {
    0.5 * (1.0 - 2.0 * alpha * beta.cos())
}

pub fn phase_error(state: &PairState) -> f64 {
    phase_error_matrix(&state.rho)
}

/// Which parity a pair must show on both sides to survive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

/// `K = M_A (x) M_B` composed with the reordering `(a1, b1, a2, b2) -> (a1, a2, b1, b2)`.
/// `M = |0><01| + |1><10|` for odd parity, `|0><00| + |1><11|` for even.
fn projector(parity: Parity) -> Mat4x16 {
    let keep = |x1: usize, x2: usize| -> Option<usize> {
        match parity {
            Parity::Odd if x1 != x2 => Some(x1),
            Parity::Even if x1 == x2 => Some(x1),
            _ => None,
        }
    };
    let mut k = Mat4x16::zeros();
    for idx in 0..16 {
        // two-pair index in (a1, b1, a2, b2) order
        let (a1, b1, a2, b2) = ((idx >> 3) & 1, (idx >> 2) & 1, (idx >> 1) & 1, idx & 1);
        if let (Some(a), Some(b)) = (keep(a1, a2), keep(b1, b2)) {
            k[(2 * a + b, idx)] = c(1.0);
        }
    }
    k
}

#[derive(Debug, Clone, PartialEq)]
pub struct Survivor {
    /// Normalized surviving pair state.
    pub rho: Mat4,
    pub phase_error: f64,
    pub pass_prob: f64,
}

fn survivor_with(state: &PairState, k: &Mat4x16) -> Result<Survivor> {
    let two: Mat16 = state.rho.kronecker(&state.rho);
    let unnormalized = k * two * k.adjoint();
    let pass_prob = unnormalized.trace().re;
    if !(pass_prob > 0.0) {
        return Err(Error::Degenerate(format!(
            "parity projection has zero weight at theta = {}",
            state.theta
        )));
    }
    let rho = unnormalized / c(pass_prob);
    Ok(Survivor {
        phase_error: phase_error_matrix(&rho),
        rho,
        pass_prob,
    })
}

fn check_interior(theta: f64) -> Result<()> {
    let cs = coherence_limit(theta);
    if cs * cs <= 0.0 {
        return Err(Error::Degenerate(format!(
            "theta = {theta} leaves no odd-parity weight"
        )));
    }
    Ok(())
}

pub fn odd_parity_survivor(state: &PairState) -> Result<Survivor> {
    check_interior(state.theta)?;
    survivor_with(state, &projector(Parity::Odd))
}

pub fn even_parity_survivor(state: &PairState) -> Result<Survivor> {
    survivor_with(state, &projector(Parity::Even))
}

/// `(1 - a^2 / (cos^2 sin^2)) / 2`, independent of the coherence phase.
pub fn odd_error_closed(theta: f64, alpha: f64) -> f64 {
    let cs = coherence_limit(theta);
    0.5 * (1.0 - alpha * alpha / (cs * cs))
}

/// `2 cos^2 sin^2`.
pub fn odd_pass_closed(theta: f64) -> f64 {
    2.0 * coherence_limit(theta).powi(2)
}

/// `(1 - 2 a^2 cos(2b) / (cos^4 + sin^4)) / 2`.
pub fn even_error_closed(theta: f64, alpha: f64, beta: f64) -> f64 {
    let norm = theta.cos().powi(4) + theta.sin().powi(4);
    0.5 * (1.0 - 2.0 * alpha * alpha * (2.0 * beta).cos() / norm)
}

/// Worst-case phase error `(1 - 2a) / 2` and its iterate `2e(1 - e)`.
pub fn worst_case_bound(alpha: f64) -> f64 {
    let e = 0.5 * (1.0 - 2.0 * alpha);
    2.0 * e * (1.0 - e)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitGrid {
    pub n_theta: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    /// Multiplies the right-hand side of the inequality; values below 1 inject a fault.
    pub bound_scale: f64,
}

impl Default for QubitGrid {
    fn default() -> Self {
        Self {
            n_theta: 100,
            n_alpha: 100,
            n_beta: 100,
            bound_scale: 1.0,
        }
    }
}

impl QubitGrid {
    /// Interior midpoints of `(0, pi/2)`.
    pub fn theta(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n_theta as f64 * PI / 2.0
    }

    /// Fractions of the coherence limit, endpoints included.
    pub fn alpha_fraction(&self, j: usize) -> f64 {
        if self.n_alpha == 1 {
            1.0
        } else {
            j as f64 / (self.n_alpha - 1) as f64
        }
    }

    pub fn beta(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.n_beta as f64
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_alpha * self.n_beta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationReport {
    pub points: usize,
    /// Points where `e_odd` exceeds the scaled bound by more than the tolerance.
    pub violations: usize,
    /// `max(e_odd - scale * 2e(1 - e))`; negative when the inequality holds everywhere.
    pub max_violation: f64,
    pub worst_point: (f64, f64, f64),
    /// Largest spread of `e_odd` across the coherence phase at fixed `(theta, alpha)`.
    pub beta_spread: f64,
    /// Largest gap between matrix results and closed forms.
    pub closed_form_gap: f64,
}

impl IterationReport {
    pub const TOLERANCE: f64 = 1e-12;

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.beta_spread <= Self::TOLERANCE && self.closed_form_gap <= Self::TOLERANCE
    }
}

struct CellStats {
    violations: usize,
    max_violation: f64,
    worst: (f64, f64, f64),
    spread: f64,
    gap: f64,
}

fn sweep_cell(grid: &QubitGrid, odd: &Mat4x16, i: usize, j: usize) -> Result<CellStats> {
    let theta = grid.theta(i);
    let alpha = grid.alpha_fraction(j) * coherence_limit(theta);
    let bound = grid.bound_scale * worst_case_bound(alpha);
    let mut stats = CellStats {
        violations: 0,
        max_violation: f64::NEG_INFINITY,
        worst: (theta, alpha, 0.0),
        spread: 0.0,
        gap: 0.0,
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..grid.n_beta {
        let beta = grid.beta(k);
        let state = make_sigma(theta, alpha, beta)?;
        let s = survivor_with(&state, odd)?;
        let gap = [
            (s.phase_error - odd_error_closed(theta, alpha)).abs(),
            (s.pass_prob - odd_pass_closed(theta)).abs(),
            (phase_error(&state) - phase_error_closed(alpha, beta)).abs(),
        ];
        stats.gap = gap.iter().fold(stats.gap, |m, &g| m.max(g));
        lo = lo.min(s.phase_error);
        hi = hi.max(s.phase_error);
        let excess = s.phase_error - bound;
        if excess > IterationReport::TOLERANCE {
            stats.violations += 1;
        }
        if excess > stats.max_violation {
            stats.max_violation = excess;
            stats.worst = (theta, alpha, beta);
        }
    }
    stats.spread = hi - lo;
    Ok(stats)
}

/// Checks `e_odd <= 2e(1 - e)` with `e = (1 - 2a)/2` over the whole grid.
pub fn verify_iteration_inequality(grid: &QubitGrid, exec: Execution) -> Result<IterationReport> {
    if grid.is_empty() {
        return Err(Error::Degenerate("empty qubit grid".into()));
    }
    let odd = projector(Parity::Odd);
    let cells = exec.map_range(grid.n_theta * grid.n_alpha, |idx| {
        sweep_cell(grid, &odd, idx / grid.n_alpha, idx % grid.n_alpha)
    });
    let mut report = IterationReport {
        points: grid.len(),
        violations: 0,
        max_violation: f64::NEG_INFINITY,
        worst_point: (0.0, 0.0, 0.0),
        beta_spread: 0.0,
        closed_form_gap: 0.0,
    };
    for cell in cells {
        let cell = cell?;
        report.violations += cell.violations;
        if cell.max_violation > report.max_violation {
            report.max_violation = cell.max_violation;
            report.worst_point = cell.worst;
        }
        report.beta_spread = report.beta_spread.max(cell.spread);
        report.closed_form_gap = report.closed_form_gap.max(cell.gap);
    }
    Ok(report)
}

/// `|psi> = (|00> + e^{i phi}|11>) / sqrt 2`.
pub fn pure_family_state(phi: f64) -> Mat4 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let psi = nalgebra::Vector4::new(c(h), c(0.0), c(0.0), Complex64::from_polar(h, phi));
    psi * psi.adjoint()
}

/// Odd- and even-parity survivor phase errors for the pure family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParityExample {
    pub phi: f64,
    pub initial_error: f64,
    pub odd_error: f64,
    pub even_error: f64,
}

pub fn parity_example(phi: f64) -> Result<ParityExample> {
    let rho = pure_family_state(phi);
    let state = PairState {
        theta: PI / 4.0,
        alpha: 0.5,
        beta: -phi,
        rho,
    };
    Ok(ParityExample {
        phi,
        initial_error: phase_error(&state),
        odd_error: odd_parity_survivor(&state)?.phase_error,
        even_error: even_parity_survivor(&state)?.phase_error,
    })
}
