//! Error function, incomplete gamma functions of half-integer order and the
//! two scalar integrals that every closed-form covariance reduces to.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{ensure_positive, Result};

pub const SQRT_PI: f64 = 1.772_453_850_905_516;

#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Lower incomplete gamma `gamma(1/2, y) = sqrt(pi) erf(sqrt(y))`.
pub fn lower_gamma_half(y: f64) -> f64 {
    SQRT_PI * erf(y.sqrt())
}

/// Upper incomplete gamma `Gamma(1/2, y) = sqrt(pi) erfc(sqrt(y))`.
pub fn upper_gamma_half(y: f64) -> f64 {
    SQRT_PI * erfc(y.sqrt())
}

/// Lower incomplete gamma `gamma(3/2, y)`.
pub fn lower_gamma_3half(y: f64) -> f64 {
    if y < 1.0 {
        // y^{3/2} e^{-y} sum_n y^n / ((3/2)(5/2)...(3/2+n)); the closed form
        // below cancels badly here.
        let mut term = 1.0 / 1.5;
        let mut sum = term;
        let mut k = 1.0;
        while term > sum * 1e-17 {
            term *= y / (1.5 + k);
            sum += term;
            k += 1.0;
        }
        y * y.sqrt() * (-y).exp() * sum
    } else {
        0.5 * lower_gamma_half(y) - y.sqrt() * (-y).exp()
    }
}

/// Upper incomplete gamma `Gamma(3/2, y)`.
pub fn upper_gamma_3half(y: f64) -> f64 {
    0.5 * upper_gamma_half(y) + y.sqrt() * (-y).exp()
}

/// `int_{lo}^{hi} v^{s-1} e^{-v} dv` for `s` in {1/2, 3/2}, picking the
/// lower or upper representation so that nothing large cancels.
fn gamma_between(lower: fn(f64) -> f64, upper: fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi);
    if lo == hi {
        return 0.0;
    }
    if lo >= 1.0 {
        upper(lo) - upper(hi)
    } else if hi <= 1.0 {
        lower(hi) - lower(lo)
    } else {
        (lower(1.0) - lower(lo)) + (upper(1.0) - upper(hi))
    }
}

/// `int_0^x s^{-3/2} e^{-1/s} ds`, equal to `sqrt(pi) erfc(x^{-1/2})`
/// (substitute `v = 1/s`).
pub fn gamma_half_integral(x: f64) -> Result<f64> {
    if x == f64::INFINITY {
        return Err(crate::error::Error::domain("gamma_half_integral needs finite x"));
    }
    ensure_positive("x", x)?;
    Ok(upper_gamma_half(1.0 / x))
}

/// `int_lo^hi s^{-3/2} e^{-1/s} ds` for `0 <= lo <= hi` without forming the
/// difference of two nearly equal values.
pub fn gamma_half_integral_between(lo: f64, hi: f64) -> f64 {
    debug_assert!(0.0 <= lo && lo <= hi);
    if lo == hi {
        return 0.0;
    }
    let v_hi = if lo == 0.0 { f64::INFINITY } else { 1.0 / lo };
    gamma_between(lower_gamma_half, upper_gamma_half, 1.0 / hi, v_hi)
}

/// `int_lo^hi s^{-5/2} e^{-1/s} ds`.
fn fifth_half_between(lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return 0.0;
    }
    let v_hi = if lo == 0.0 { f64::INFINITY } else { 1.0 / lo };
    gamma_between(lower_gamma_3half, upper_gamma_3half, 1.0 / hi, v_hi)
}

/// `int_0^{t1} int_0^{t2} (s1+s2)^{-5/2} e^{-c/(s1+s2)} ds1 ds2`.
///
/// Rescaled to `c = 1`, the rectangle integral collapses onto the diagonal
/// `w = s1 + s2` with cross-section length `min(w, t1, t2, t1 + t2 - w)`,
/// leaving incomplete gamma functions of order 1/2 and 3/2.
pub fn rect_integral_5half(t1: f64, t2: f64, c: f64) -> Result<f64> {
    ensure_positive("t1", t1)?;
    ensure_positive("t2", t2)?;
    ensure_positive("c", c)?;
    Ok(unit_rect_5half(t1 / c, t2 / c) / c.sqrt())
}

fn unit_rect_5half(x1: f64, x2: f64) -> f64 {
    let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
    let sum = lo + hi;
    // w on [0, lo]: weight w
    let rising = gamma_half_integral_between(0.0, lo);
    // w on [lo, hi]: weight lo
    let flat = lo * fifth_half_between(lo, hi);
    // w on [hi, lo + hi]: weight lo + hi - w
    let falling = sum * fifth_half_between(hi, sum) - gamma_half_integral_between(hi, sum);
    rising + flat + falling.max(0.0)
}

/// `int_0^{tp} int_0^{t} (s1+s2)^{-1/2} e^{-c/(s1+s2)} ds1 ds2`, `c >= 0`,
/// by integration by parts down to `gamma_half_integral` and
/// `rect_integral_5half`.
pub fn rect_integral_half(c: f64, t: f64, tp: f64) -> f64 {
    let total = t + tp;
    if c == 0.0 {
        return 4.0 / 3.0 * (total.powf(1.5) - t.powf(1.5) - tp.powf(1.5));
    }
    let ex = |s: f64| (-c / s).exp();
    let p32 = total.powf(1.5) * ex(total) - tp.powf(1.5) * ex(tp) - t.powf(1.5) * ex(t);
    let p12 = total.sqrt() * ex(total) - tp.sqrt() * ex(tp) - t.sqrt() * ex(t);
    let bracket =
        gamma_half_integral_between(t / c, total / c) - gamma_half_integral_between(0.0, tp / c);
    let c32 = c * c.sqrt();
    4.0 / 3.0 * p32 + 16.0 * c / 3.0 * p12 - 16.0 * c32 / 3.0 * bracket
        - 4.0 * c32 * unit_rect_5half(tp / c, t / c)
}

/// Gauss-Legendre nodes and weights on [0, 1], `n` points.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Cached 12-point rule used by the covariance kernels.
pub(crate) fn gl12() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_unit(12))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_half_integral_limits() {
        // the tail beyond x is 2 / sqrt(x) to leading order
        let v = gamma_half_integral(1e12).unwrap();
        assert!((v - (SQRT_PI - 2e-6)).abs() < 1e-12, "{v}");
        assert!((gamma_half_integral(1e14).unwrap() - SQRT_PI).abs() < 1e-6);
        assert_eq!(gamma_half_integral(1e-4).unwrap(), 0.0);
        assert!(gamma_half_integral(0.0).is_err());
        assert!(gamma_half_integral(-1.0).is_err());
        assert!(gamma_half_integral(f64::NAN).is_err());
        assert!(gamma_half_integral(f64::INFINITY).is_err());
    }

    #[test]
    fn gamma_half_monotone_and_bounded() {
        let mut prev = 0.0;
        for k in -40..80 {
            let x = 10f64.powf(k as f64 / 8.0);
            let v = gamma_half_integral(x).unwrap();
            assert!(v >= prev, "not monotone at x = {x}");
            assert!(v <= SQRT_PI);
            prev = v;
        }
    }

    #[test]
    fn between_matches_difference_where_safe() {
        for (lo, hi) in [(0.3, 0.9), (0.5, 7.0), (2.0, 40.0), (0.0, 3.0)] {
            let direct = if lo == 0.0 {
                gamma_half_integral(hi).unwrap()
            } else {
                gamma_half_integral(hi).unwrap() - gamma_half_integral(lo).unwrap()
            };
            let b = gamma_half_integral_between(lo, hi);
            assert!((b - direct).abs() < 1e-14, "{lo} {hi}: {b} vs {direct}");
        }
    }

    #[test]
    fn lower_gamma_3half_series_and_closed_form_agree_at_switch() {
        let a = lower_gamma_3half(1.0 - 1e-12);
        let b = lower_gamma_3half(1.0);
        assert!((a - b).abs() < 1e-11);
        // gamma(3/2) = sqrt(pi)/2
        assert!((lower_gamma_3half(60.0) - SQRT_PI / 2.0).abs() < 1e-15);
        for y in [1e-6, 0.01, 0.5, 1.5, 4.0, 20.0] {
            let total = lower_gamma_3half(y) + upper_gamma_3half(y);
            assert!((total - SQRT_PI / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rect_5half_limits_and_symmetry() {
        let v = rect_integral_5half(1e12, 1e12, 1.0).unwrap();
        assert!((v - SQRT_PI).abs() < 2e-6, "{v}");
        let v = rect_integral_5half(1e14, 1e14, 1.0).unwrap();
        assert!((v - SQRT_PI).abs() < 1e-6, "{v}");
        for (t1, t2, c) in [(0.3, 1.7, 0.2), (2.0, 0.01, 1.0), (5.0, 5.0, 0.05)] {
            assert_eq!(
                rect_integral_5half(t1, t2, c).unwrap(),
                rect_integral_5half(t2, t1, c).unwrap()
            );
        }
        assert!(rect_integral_5half(0.0, 1.0, 1.0).is_err());
        assert!(rect_integral_5half(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn rect_half_zero_c_is_elementary() {
        let (t, tp): (f64, f64) = (0.4, 1.1);
        let expected = 4.0 / 3.0 * (t + tp).powf(1.5)
            - 4.0 / 3.0 * t.powf(1.5)
            - 4.0 / 3.0 * tp.powf(1.5);
        assert!((rect_integral_half(0.0, t, tp) - expected).abs() < 1e-15);
        // continuous as c -> 0
        let near = rect_integral_half(1e-14, t, tp);
        assert!((near - expected).abs() < 1e-6);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_unit(12);
        for p in 0..24 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "degree {p}");
        }
        let (x1, w1) = gauss_legendre_unit(1);
        assert_eq!(x1, vec![0.5]);
        assert!((w1[0] - 1.0).abs() < 1e-15);
    }
}
