//! Raw time integrands of the space-time covariances, integrated directly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::cubature::{integrate_1d, integrate_rectangle, QuadResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrandId {
    /// `E[Delta_h u(t, x) Delta_h u(t', y)]`.
    A1,
    /// `E[Delta_h u(t, x) u_x(t', x)]`.
    A2,
    /// `E[u_x(t, x) u_x(t', y)]`.
    A3,
    /// `(s1+s2)^{-1/2}` times the stencil second difference of the heat
    /// kernel at distance `x - y`, stencil width `(a + b) h`.
    FRaw,
    /// `(s1+s2)^{-5/2} exp(-c / (s1+s2))`.
    FifthPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    pub t: f64,
    pub tp: f64,
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    pub sigma: f64,
    pub c: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self { t: 1.0, tp: 1.0, x: 0.0, y: 0.0, h: 0.1, a: 1.0, b: 0.0, theta: 1.0, sigma: 1.0, c: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub integrand: IntegrandId,
    pub params: QuadParams,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl QuadratureSpec {
    pub fn new(integrand: IntegrandId, params: QuadParams) -> Self {
        Self { integrand, params, rel_tol: 1e-10, max_subdivisions: 20_000 }
    }

    fn validate(&self) -> Result<()> {
        if !(1e-12..=1e-4).contains(&self.rel_tol) {
            return Err(Error::domain(format!("rel_tol {} outside [1e-12, 1e-4]", self.rel_tol)));
        }
        let p = &self.params;
        if !(p.t > 0.0 && p.tp > 0.0 && p.t.is_finite() && p.tp.is_finite()) {
            return Err(Error::domain("quadrature needs positive finite times"));
        }
        if !(p.theta > 0.0) {
            return Err(Error::domain("theta must be positive"));
        }
        if matches!(self.integrand, IntegrandId::A1 | IntegrandId::A2 | IntegrandId::FRaw)
            && !(p.h > 0.0 && p.a + p.b > 0.0)
        {
            return Err(Error::domain("stencil needs h > 0 and a + b > 0"));
        }
        if self.integrand == IntegrandId::FifthPower && !(p.c > 0.0) {
            return Err(Error::domain("fifth-power integrand needs c > 0"));
        }
        Ok(())
    }
}

/// `2 e^{-c x^2} - e^{-c (x+z)^2} - e^{-c (x-z)^2}` without cancelling for
/// small `z`.
pub(crate) fn gauss_second_difference(c: f64, z: f64, x: f64) -> f64 {
    let cxz = c * x * z;
    if cxz.abs() > 20.0 {
        return 2.0 * (-c * x * x).exp() - (-c * (x + z).powi(2)).exp() - (-c * (x - z).powi(2)).exp();
    }
    let s = cxz.sinh();
    let ez = (-c * z * z).exp();
    -2.0 * (-c * x * x).exp() * (2.0 * ez * s * s + (-c * z * z).exp_m1())
}

/// Integrand of `E[u_x(t, x) u_x(t', x + d)]` without its prefactor.
pub(crate) fn derivative_kernel(w: f64, d: f64, theta: f64) -> f64 {
    let q = d * d / (4.0 * theta * w);
    w.powf(-1.5) * (-q).exp() * (1.0 - 2.0 * q)
}

pub(crate) fn derivative_prefactor(theta: f64, sigma: f64) -> f64 {
    sigma * sigma / (4.0 * PI.sqrt() * theta.powf(1.5))
}

pub(crate) fn stencil_prefactor(theta: f64, sigma: f64, width: f64) -> f64 {
    sigma * sigma / (2.0 * (PI * theta).sqrt() * width * width)
}

pub fn quad_cov(spec: &QuadratureSpec) -> Result<QuadResult> {
    spec.validate()?;
    let p = spec.params;
    let theta = p.theta;
    let run = |f: &dyn Fn(f64, f64) -> f64, scale: f64| -> Result<QuadResult> {
        let q = integrate_rectangle(|a, b| f(a, b), p.t, p.tp, spec.rel_tol, 0.0, spec.max_subdivisions)?;
        Ok(QuadResult { value: scale * q.value, est_error: scale.abs() * q.est_error, subdivisions: q.subdivisions })
    };
    match spec.integrand {
        IntegrandId::A1 => {
            let width = (p.a + p.b) * p.h;
            let d = p.x - p.y;
            let f = |s1: f64, s2: f64| {
                let w = s1 + s2;
                gauss_second_difference(1.0 / (4.0 * theta * w), width, d) / w.sqrt()
            };
            run(&f, stencil_prefactor(theta, p.sigma, width))
        }
        IntegrandId::A2 => {
            let f = |s1: f64, s2: f64| {
                let w = s1 + s2;
                let e = |k: f64| k * (-(k * p.h).powi(2) / (4.0 * theta * w)).exp();
                (e(p.a) + e(p.b)) * w.powf(-1.5)
            };
            run(&f, derivative_prefactor(theta, p.sigma) / (p.a + p.b))
        }
        IntegrandId::A3 => {
            let d = p.x - p.y;
            let f = |s1: f64, s2: f64| derivative_kernel(s1 + s2, d, theta);
            run(&f, derivative_prefactor(theta, p.sigma))
        }
        IntegrandId::FRaw => {
            let width = (p.a + p.b) * p.h;
            let d = p.x - p.y;
            let f = |s1: f64, s2: f64| {
                let w = s1 + s2;
                gauss_second_difference(1.0 / (4.0 * theta * w), width, d) / w.sqrt()
            };
            run(&f, 1.0)
        }
        IntegrandId::FifthPower => {
            let f = |s1: f64, s2: f64| {
                let w = s1 + s2;
                w.powf(-2.5) * (-p.c / w).exp()
            };
            run(&f, 1.0)
        }
    }
}

/// `int_0^x s^{-3/2} e^{-1/s} ds` by adaptive quadrature.
pub fn quad_gamma_half(x: f64, rel_tol: f64) -> Result<QuadResult> {
    integrate_1d(|s: f64| if s <= 0.0 { 0.0 } else { s.powf(-1.5) * (-1.0 / s).exp() }, 0.0, x, rel_tol, 0.0, 5000)
}

/// Covariance of `u_x` increments of step `h` at distance `lag * h`, times
/// `(t, tp)`, by direct quadrature of the second difference.
pub fn quad_ux_increment_cov(
    lag: usize,
    t: f64,
    tp: f64,
    h: f64,
    theta: f64,
    sigma: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    let d = lag as f64 * h;
    let f = |s1: f64, s2: f64| {
        let w = s1 + s2;
        2.0 * derivative_kernel(w, d, theta) - derivative_kernel(w, d + h, theta) - derivative_kernel(w, d - h, theta)
    };
    let q = integrate_rectangle(f, t, tp, rel_tol, 0.0, 50_000)?;
    let scale = derivative_prefactor(theta, sigma);
    Ok(QuadResult { value: scale * q.value, est_error: scale * q.est_error, subdivisions: q.subdivisions })
}

/// Covariance of consecutive stencil-quotient increments (grid step `h`,
/// stencil width `width`) at distance `lag * h`: the nine-term expansion of
/// the product, integrated as one kernel.
#[allow(clippy::too_many_arguments)]
pub fn quad_delta_increment_cov(
    lag: usize,
    t: f64,
    tp: f64,
    h: f64,
    width: f64,
    theta: f64,
    sigma: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    let d = lag as f64 * h;
    let f = |s1: f64, s2: f64| {
        let w = s1 + s2;
        let c = 1.0 / (4.0 * theta * w);
        let g = |x: f64| gauss_second_difference(c, width, x.abs());
        (2.0 * g(d) - g(d + h) - g(d - h)) / w.sqrt()
    };
    let q = integrate_rectangle(f, t, tp, rel_tol, 0.0, 50_000)?;
    let scale = stencil_prefactor(theta, sigma, width);
    Ok(QuadResult { value: scale * q.value, est_error: scale * q.est_error, subdivisions: q.subdivisions })
}
