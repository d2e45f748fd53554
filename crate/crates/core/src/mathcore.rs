//! Numeric primitives shared by the rest of the crate: binary entropy, the
//! modified Bessel function `I0`, composite Simpson quadrature and bisection.

use crate::error::{Error, Result};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!("probability {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Binary Shannon entropy in bits. Exactly zero at both endpoints.
pub fn binary_entropy(x: Probability) -> f64 {
    let x = x.value();
    if x == 0.0 || x == 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Convenience wrapper for callers holding a raw `f64`.
pub fn entropy(x: f64) -> Result<f64> {
    Probability::new(x).map(binary_entropy)
}

const I0_SERIES_LIMIT: f64 = 15.0;
const I0_MAX_ARG: f64 = 700.0;

/// Modified Bessel function of the first kind, order zero.
///
/// Power series below `x = 15`, large-argument asymptotic expansion above.
/// Both branches keep the relative error under `1e-12`.
pub fn bessel_i0(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("bessel_i0 requires x >= 0, got {x}")));
    }
    if x > I0_MAX_ARG {
        return Err(Error::Overflow(format!("bessel_i0({x}) exceeds the x <= 700 guard")));
    }
    if x < I0_SERIES_LIMIT {
        Ok(i0_series(x))
    } else {
        Ok(i0_asymptotic(x))
    }
}

fn i0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

fn i0_asymptotic(x: f64) -> f64 {
    // e^x / sqrt(2 pi x) * sum_k ((2k-1)!!)^2 / (k! (8x)^k), truncated at the
    // smallest term.
    let mut term: f64 = 1.0;
    let mut sum = 1.0;
    let mut k: f64 = 1.0;
    loop {
        let next = term * (2.0 * k - 1.0).powi(2) / (8.0 * x * k);
        if next >= term || next < sum * 1e-17 {
            break;
        }
        sum += next;
        term = next;
        k += 1.0;
    }
    x.exp() / (2.0 * std::f64::consts::PI * x).sqrt() * sum
}

/// Composite Simpson rule over `[a, b]` with `intervals` sub-intervals
/// (rounded up to an even number).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = (intervals.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + h * i as f64);
    }
    sum * h / 3.0
}

/// Bisection on a sign-changing bracket. Stops once the bracket is no wider
/// than `tol` (or can no longer be split in floating point) and returns its
/// midpoint.
pub fn find_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    let lo_negative = f_lo < 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Power series summed term by term until terms vanish, with no branch
    /// switch. Independent reference for both `bessel_i0` branches.
    fn i0_reference(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut k = 0u32;
        let mut log_fact = 0.0;
        loop {
            if k > 0 {
                log_fact += (k as f64).ln();
            }
            let log_term = 2.0 * k as f64 * (x / 2.0).ln() - 2.0 * log_fact;
            let term = if x == 0.0 && k == 0 {
                1.0
            } else if x == 0.0 {
                0.0
            } else {
                log_term.exp()
            };
            sum += term;
            if (k as f64) > x && term < sum * 1e-18 {
                return sum;
            }
            k += 1;
        }
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy(0.5).unwrap(), 1.0);
        assert_eq!(entropy(0.0).unwrap(), 0.0);
        assert_eq!(entropy(1.0).unwrap(), 0.0);
        // 0.11 log2(1/0.11) + 0.89 log2(1/0.89), evaluated with mpmath at 30 digits.
        assert_relative_eq!(entropy(0.11).unwrap(), 0.499915958164528, epsilon = 1e-12);
        assert!(entropy(1.2).is_err());
        assert!(entropy(-0.1).is_err());
    }

    #[test]
    fn bessel_values() {
        assert_eq!(bessel_i0(0.0).unwrap(), 1.0);
        assert_relative_eq!(bessel_i0(1.0).unwrap(), 1.266_065_877_752_008_4, max_relative = 1e-13);
        assert_relative_eq!(bessel_i0(10.0).unwrap(), 2_815.716_628_466_254, max_relative = 1e-12);
        assert!(matches!(bessel_i0(701.0), Err(Error::Overflow(_))));
        assert!(bessel_i0(-1.0).is_err());
    }

    #[test]
    fn bessel_matches_reference_across_branch_switch() {
        for &x in &[0.3, 2.0, 7.5, 14.9, 15.0, 15.1, 20.0, 40.0, 100.0, 300.0] {
            let got = bessel_i0(x).unwrap();
            let want = i0_reference(x);
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn bessel_monotone() {
        let mut prev = 0.0;
        let mut x = 0.0;
        while x <= 700.0 {
            let v = bessel_i0(x).unwrap();
            assert!(v > prev, "I0 not increasing at {x}");
            prev = v;
            x += 0.37;
        }
    }

    #[test]
    fn roots() {
        let r = find_root(|x| x - 2.0, 0.0, 5.0, 1e-12).unwrap();
        assert!((r - 2.0).abs() <= 1e-12);
        let r = find_root(|x| x * x - 2.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() <= 1e-12);
        assert!(matches!(
            find_root(|x| x * x + 1.0, -1.0, 1.0, 1e-9),
            Err(Error::Bracket { .. })
        ));
    }

    #[test]
    fn root_of_upper_chernoff_equation() {
        let (y, xi): (f64, f64) = (1000.0, 1e-10);
        let target = (xi / 2.0).ln();
        let g = |d: f64| y * (d - (1.0 + d) * (1.0 + d).ln()) - target;
        let d1 = find_root(g, 0.0, 1e6, 1e-14).unwrap();
        let residual = (d1.exp() / (1.0 + d1).powf(1.0 + d1)).powf(y);
        assert_relative_eq!(residual, xi / 2.0, max_relative = 1e-6);
    }

    #[test]
    fn simpson_integrates_cubic_exactly() {
        let v = simpson(|x| x * x * x - x, 0.0, 2.0, 4);
        assert_relative_eq!(v, 2.0, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn entropy_symmetric(x in 0.0f64..=1.0) {
            let a = entropy(x).unwrap();
            let b = entropy(1.0 - x).unwrap();
            prop_assert!((a - b).abs() <= 1e-15);
        }

        #[test]
        fn entropy_concave(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let mid = entropy(0.5 * (a + b)).unwrap();
            let avg = 0.5 * (entropy(a).unwrap() + entropy(b).unwrap());
            prop_assert!(mid >= avg - 1e-15);
        }

        #[test]
        fn bisection_width(root in -10.0f64..10.0, tol in 1e-12f64..1e-3) {
            let r = find_root(|x| x - root, -20.0, 20.0, tol).unwrap();
            prop_assert!((r - root).abs() <= tol);
        }
    }
}
