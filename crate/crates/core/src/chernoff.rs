//! Multiplicative Chernoff bounds and the epsilon budget of the finite-key
//! analysis.
//!
//! For an expected count `Y` and failure probability `xi`, the deviations
//! `delta1`, `delta2` solve
//!
//! ```text
//! (e^delta1 / (1 + delta1)^(1 + delta1))^Y = xi / 2
//! (e^-delta2 / (1 - delta2)^(1 - delta2))^Y = xi / 2
//! ```
//!
//! and the bounds are `phi_U(Y) = (1 + delta1) Y`, `phi_L(Y) = (1 - delta2) Y`.
//! Both equations are solved in log space by bisection.

use crate::error::{Error, Result};
use crate::mathcore::find_root;

/// Upper end of the `delta1` bracket.
pub const DELTA1_MAX: f64 = 1e6;
/// Upper end of the `delta2` bracket.
pub const DELTA2_MAX: f64 = 1.0 - 1e-15;
const DELTA_TOL: f64 = 1e-16;

/// Failure probabilities of the finite-key analysis, stored as integer
/// multiples of the base Chernoff failure probability `xi` so the budget
/// arithmetic is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonBudget {
    pub xi: f64,
    pub cor: u32,
    pub hat: u32,
    pub pa: u32,
    pub bar: u32,
    pub n1: u32,
}

impl EpsilonBudget {
    /// `eps_cor = eps_hat = eps_PA = xi`, `eps_bar = 3 xi`, `eps_n1 = 6 xi`.
    pub fn standard(xi: f64) -> Self {
        Self {
            xi,
            cor: 1,
            hat: 1,
            pa: 1,
            bar: 3,
            n1: 6,
        }
    }

    pub fn eps_cor(&self) -> f64 {
        f64::from(self.cor) * self.xi
    }

    pub fn eps_hat(&self) -> f64 {
        f64::from(self.hat) * self.xi
    }

    pub fn eps_pa(&self) -> f64 {
        f64::from(self.pa) * self.xi
    }

    pub fn eps_bar(&self) -> f64 {
        f64::from(self.bar) * self.xi
    }

    pub fn eps_n1(&self) -> f64 {
        f64::from(self.n1) * self.xi
    }

    /// Multiple of `xi` in `eps_sec = 2 eps_hat + 4 eps_bar + eps_PA + eps_n1`.
    pub fn sec_multiple(&self) -> u32 {
        2 * self.hat + 4 * self.bar + self.pa + self.n1
    }

    pub fn tot_multiple(&self) -> u32 {
        self.cor + self.sec_multiple()
    }

    pub fn eps_sec(&self) -> f64 {
        f64::from(self.sec_multiple()) * self.xi
    }

    pub fn eps_tot(&self) -> f64 {
        f64::from(self.tot_multiple()) * self.xi
    }

    /// `log2(2 / eps_cor) + 2 log2(1 / (sqrt(2) eps_PA eps_hat))`.
    pub fn key_penalty(&self) -> f64 {
        (2.0 / self.eps_cor()).log2() + 2.0 * (1.0 / (std::f64::consts::SQRT_2 * self.eps_pa() * self.eps_hat())).log2()
    }
}

/// A Chernoff bound together with its deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernoffBound {
    pub value: f64,
    pub delta: f64,
    /// No root existed inside the bracket; the bound was clamped to its
    /// bracket end and carries no information.
    pub vacuous: bool,
}

/// `delta - (1 + delta) ln(1 + delta)`, accurate for small `delta`.
pub fn upper_log_rate(delta: f64) -> f64 {
    if delta.abs() < 1e-2 {
        // -sum_{k>=2} (-1)^k delta^k / (k (k-1))
        let mut sum = 0.0;
        let mut pow = delta * delta;
        for k in 2..20 {
            let kf = k as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * pow / (kf * (kf - 1.0));
            pow *= delta;
        }
        -sum
    } else {
        delta - (1.0 + delta) * delta.ln_1p()
    }
}

/// `-delta - (1 - delta) ln(1 - delta)`, accurate for small `delta`.
pub fn lower_log_rate(delta: f64) -> f64 {
    if delta.abs() < 1e-2 {
        // -sum_{k>=2} delta^k / (k (k-1))
        let mut sum = 0.0;
        let mut pow = delta * delta;
        for k in 2..20 {
            let kf = k as f64;
            sum += pow / (kf * (kf - 1.0));
            pow *= delta;
        }
        -sum
    } else if delta >= 1.0 {
        -1.0
    } else {
        -delta - (1.0 - delta) * (-delta).ln_1p()
    }
}

fn check_inputs(y: f64, xi: f64) -> Result<()> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("Chernoff bound needs Y > 0, got {y}")));
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::Domain(format!(
            "failure probability must lie in (0, 1), got {xi}"
        )));
    }
    Ok(())
}

/// `phi_U(Y) = (1 + delta1) Y`.
pub fn chernoff_upper(y: f64, xi: f64) -> Result<ChernoffBound> {
    check_inputs(y, xi)?;
    let target = (xi / 2.0).ln();
    let g = |d: f64| y * upper_log_rate(d) - target;
    if g(DELTA1_MAX) > 0.0 {
        return Ok(ChernoffBound {
            value: (1.0 + DELTA1_MAX) * y,
            delta: DELTA1_MAX,
            vacuous: true,
        });
    }
    let delta = find_root(g, 0.0, DELTA1_MAX, DELTA_TOL)?;
    Ok(ChernoffBound {
        value: (1.0 + delta) * y,
        delta,
        vacuous: false,
    })
}

/// Smallest `Y` for which the lower equation has a root: the lower log-rate
/// never drops below -1, so `Y` must reach `-ln(xi / 2)`.
pub fn lower_root_threshold(xi: f64) -> f64 {
    -(xi / 2.0).ln()
}

/// `phi_L(Y) = (1 - delta2) Y`; returns a vacuous zero bound when `Y` is too
/// small for any `delta2 < 1` to reach `xi / 2`.
pub fn chernoff_lower(y: f64, xi: f64) -> Result<ChernoffBound> {
    check_inputs(y, xi)?;
    let target = (xi / 2.0).ln();
    let g = |d: f64| y * lower_log_rate(d) - target;
    if g(DELTA2_MAX) > 0.0 {
        return Ok(ChernoffBound {
            value: 0.0,
            delta: 1.0,
            vacuous: true,
        });
    }
    let delta = find_root(g, 0.0, DELTA2_MAX, DELTA_TOL)?;
    Ok(ChernoffBound {
        value: (1.0 - delta) * y,
        delta,
        vacuous: false,
    })
}

/// Finite-size bounds on untagged survivors after error rejection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostRejectionBounds {
    /// `n_1L = phi_L(<n~_1>)`.
    pub n1_lower: f64,
    /// `e_1u = phi_U(<n~_1> 2 e (1 - e)) / <n~_1>`, capped at 1/2.
    pub e1ph_upper: f64,
    pub vacuous: bool,
}

pub fn post_rejection_bounds(expected_n1_tilde: f64, expected_e1ph: f64, xi: f64) -> Result<PostRejectionBounds> {
    if !(expected_n1_tilde > 0.0) {
        return Err(Error::Domain(format!(
            "expected untagged survivors must be positive, got {expected_n1_tilde}"
        )));
    }
    let lower = chernoff_lower(expected_n1_tilde, xi)?;
    let errors = expected_n1_tilde * 2.0 * expected_e1ph * (1.0 - expected_e1ph);
    let (e_upper, upper_vacuous) = if errors > 0.0 {
        let upper = chernoff_upper(errors, xi)?;
        (upper.value / expected_n1_tilde, upper.vacuous)
    } else {
        (0.0, false)
    };
    Ok(PostRejectionBounds {
        n1_lower: lower.value,
        e1ph_upper: e_upper.min(0.5),
        vacuous: lower.vacuous || upper_vacuous,
    })
}
