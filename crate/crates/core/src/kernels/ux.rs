//! Covariances of the spatial derivative `u_x` on the whole line.

use std::f64::consts::PI;

use super::phi::{phi_c, phi_pair_even};
use super::special::{erfc, gamma_half_integral, gamma_half_integral_between};
#[cfg(test)]
use super::split::SplitKernel;
use crate::error::{ensure_positive, Error, Result};
use crate::model::{ModelParams, SamplingScheme};

/// `E[u_x(t, x) u_x(tp, y)]`.
///
/// With `c = (x - y)^2 / (4 theta)` the double time integral splits into a
/// `(s1+s2)^{-3/2}` and a `(s1+s2)^{-5/2}` rectangle integral; after
/// integrating the former by parts the two `-5/2` pieces cancel and only
/// exponentials and complementary error functions remain. At `x = y` this
/// is `tau (sqrt(t) + sqrt(tp) - sqrt(t + tp))`.
pub fn ux_pointwise_cov(t: f64, tp: f64, x: f64, y: f64, params: &ModelParams) -> Result<f64> {
    ensure_positive("t", t)?;
    ensure_positive("tp", tp)?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::domain("positions must be finite"));
    }
    let c = (x - y).powi(2) / (4.0 * params.theta());
    let total = t + tp;
    let edge = |s: f64| s.sqrt() * (-c / s).exp();
    let mut value = edge(t) + edge(tp) - edge(total);
    if c > 0.0 {
        let rc = (PI * c).sqrt();
        value += rc * (erfc((c / total).sqrt()) - erfc((c / t).sqrt()) - erfc((c / tp).sqrt()));
    }
    Ok(params.tau() * value)
}

/// `E|u_x(t, x + h) - u_x(t, x)|^2`, independent of `x`.
pub fn ux_increment_variance(t: f64, h: f64, params: &ModelParams) -> Result<f64> {
    ensure_positive("t", t)?;
    ensure_positive("h", h)?;
    let theta = params.theta();
    let tau = params.tau();
    let q = h * h / (4.0 * theta * t);
    let exponential = -2.0 * (2.0 * t).sqrt() * -(-0.5 * q).exp_m1() + 4.0 * t.sqrt() * -(-q).exp_m1();
    let x = 4.0 * theta * t / (h * h);
    let gamma = gamma_half_integral(x)? - gamma_half_integral_between(x, 2.0 * x);
    Ok(tau * exponential + tau * h / theta.sqrt() * gamma)
}

/// `Phi_N(lag, t_l, t_k)`: covariance of the increments
/// `u_x(t_k, x_i) - u_x(t_k, x_{i-1})` and `u_x(t_l, x_j) - u_x(t_l, x_{j-1})`
/// for `|i - j| = lag`, on the grid of `scheme`.
///
/// Lag 0 uses the even continuation of the erf combination, which is what
/// makes it agree with [`ux_increment_variance`].
pub fn ux_increment_cov(
    lag: usize,
    t_k: f64,
    t_l: f64,
    params: &ModelParams,
    scheme: &SamplingScheme,
) -> Result<f64> {
    ensure_positive("t_k", t_k)?;
    ensure_positive("t_l", t_l)?;
    if lag > scheme.n_space {
        return Err(Error::domain(format!("lag {lag} exceeds N = {}", scheme.n_space)));
    }
    let h = scheme.h();
    let x = lag as f64 * h;
    let theta = params.theta();
    let tau = params.tau();
    let total = t_k + t_l;
    let gauss = |s: f64| s.sqrt() * phi_c(1.0 / (4.0 * theta * s), h, x);
    let heat = gauss(t_l) + gauss(t_k) - gauss(total);
    let pair = phi_pair_even(4.0 * theta * t_l, 4.0 * theta * t_k, h, x);
    Ok(tau * heat + tau * PI.sqrt() / (2.0 * theta.sqrt()) * pair)
}

/// The same covariance through the rough/smooth split; used to cross-check
/// the erf form at large `N`.
#[cfg(test)]
pub(crate) fn ux_increment_cov_split(
    lag: usize,
    t_k: f64,
    t_l: f64,
    params: &ModelParams,
    scheme: &SamplingScheme,
) -> f64 {
    let h = scheme.h();
    SplitKernel::new(params, t_k, t_l).second_difference(lag as f64 * h, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(0.1, 0.1).unwrap()
    }

    fn scheme(n: usize) -> SamplingScheme {
        SamplingScheme::uniform(0.0, 1.0, n, vec![0.2]).unwrap()
    }

    #[test]
    fn pointwise_cov_on_diagonal() {
        let p = params();
        let (t, tp): (f64, f64) = (0.3, 0.8);
        let expected = p.tau() * (t.sqrt() + tp.sqrt() - (t + tp).sqrt());
        assert!((ux_pointwise_cov(t, tp, 0.4, 0.4, &p).unwrap() - expected).abs() < 1e-15);
        let same = ux_pointwise_cov(t, t, 1.0, 1.0, &p).unwrap();
        let expected = p.tau() * (2.0 - 2f64.sqrt()) * t.sqrt();
        assert!((same - expected).abs() < 1e-15);
    }

    #[test]
    fn pointwise_cov_is_continuous_in_distance() {
        let p = params();
        let at = ux_pointwise_cov(0.5, 0.7, 0.0, 0.0, &p).unwrap();
        let near = ux_pointwise_cov(0.5, 0.7, 0.0, 1e-9, &p).unwrap();
        assert!((at - near).abs() < 1e-8);
    }

    #[test]
    fn lag_zero_matches_increment_variance() {
        let p = params();
        for n in [4, 16, 100, 1000] {
            let s = scheme(n);
            let cov = ux_increment_cov(0, 0.2, 0.2, &p, &s).unwrap();
            let var = ux_increment_variance(0.2, s.h(), &p).unwrap();
            assert!(((cov - var) / var).abs() < 1e-10, "N = {n}: {cov} vs {var}");
        }
    }

    #[test]
    fn erf_form_matches_split_route() {
        let p = ModelParams::new(0.3, 0.7).unwrap();
        let s = SamplingScheme::uniform(-1.0, 2.0, 40, vec![0.1, 0.9]).unwrap();
        for lag in [0, 1, 2, 5, 17, 40] {
            for (tk, tl) in [(0.1, 0.1), (0.1, 0.9), (0.9, 0.9)] {
                let a = ux_increment_cov(lag, tk, tl, &p, &s).unwrap();
                let b = ux_increment_cov_split(lag, tk, tl, &p, &s);
                let scale = ux_increment_cov(0, tk, tk, &p, &s).unwrap();
                assert!((a - b).abs() < 1e-12 * scale, "lag {lag} ({tk},{tl}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn lag_beyond_grid_is_rejected() {
        assert!(ux_increment_cov(17, 0.2, 0.2, &params(), &scheme(16)).is_err());
    }

    #[test]
    fn scaled_variance_approaches_qv_rate() {
        let p = params();
        let mut previous = f64::INFINITY;
        for n in [100usize, 1000, 10_000] {
            let h = 1.0 / n as f64;
            let err = (n as f64 * ux_increment_variance(0.2, h, &p).unwrap() - 1.0).abs();
            assert!(err < previous);
            assert!(err * n as f64 <= 5.0, "N = {n}: {err}");
            previous = err;
        }
    }

    #[test]
    fn time_regularity_bound() {
        // E|u_x(t,x) - u_x(s,x)|^2 <= C |t - s|
        let p = params();
        let t = 0.5;
        for k in 1..20 {
            let s = t + 0.05 * k as f64;
            let var = ux_pointwise_cov(t, t, 0.0, 0.0, &p).unwrap()
                + ux_pointwise_cov(s, s, 0.0, 0.0, &p).unwrap()
                - 2.0 * ux_pointwise_cov(t, s, 0.0, 0.0, &p).unwrap();
            assert!(var >= 0.0 && var <= p.tau() * (s - t), "{var}");
        }
    }
}
