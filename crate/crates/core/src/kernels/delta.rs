//! Covariances of increments of the difference quotient
//! `Delta u(t, x) = (u(t, x + a h_gamma) - u(t, x - b h_gamma)) / ((a + b) h_gamma)`.

use serde::{Deserialize, Serialize};

use super::special::{gamma_half_integral_between, rect_integral_half, rect_integral_5half};
use super::split::SplitKernel;
use crate::error::{ensure_positive, Error, Result};
use crate::model::{ModelParams, SamplingScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    GammaGtOne,
    SumGeOne,
    SumLtOne,
}

/// Asymptotic ratio `mu` between the variance of stencil-quotient increments
/// and that of true derivative increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StencilRegime {
    pub mu: f64,
    pub regime: Regime,
}

pub fn mu_factor(a: f64, b: f64, gamma: f64) -> Result<StencilRegime> {
    let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
    if !unit(a) || !unit(b) {
        return Err(Error::domain(format!("stencil weights must lie in [0, 1], got ({a}, {b})")));
    }
    if !(gamma.is_finite() && gamma >= 1.0) {
        return Err(Error::domain(format!("gamma must be >= 1, got {gamma}")));
    }
    let s = a + b;
    if s <= 0.0 {
        return Err(Error::domain("stencil weights must satisfy a + b > 0"));
    }
    // Single-division forms so that e.g. (1, 0, 1) yields exactly 2.0 / 3.0.
    Ok(if gamma > 1.0 {
        StencilRegime { mu: 1.0, regime: Regime::GammaGtOne }
    } else if s >= 1.0 {
        StencilRegime { mu: (3.0 * s - 1.0) / (3.0 * s * s), regime: Regime::SumGeOne }
    } else {
        StencilRegime { mu: (3.0 - s) / 3.0, regime: Regime::SumLtOne }
    })
}

fn check_times(t_k: f64, t_l: f64) -> Result<()> {
    ensure_positive("t_k", t_k)?;
    ensure_positive("t_l", t_l)
}

/// Covariance of `Delta u(t_k, x_i) - Delta u(t_k, x_{i-1})` and
/// `Delta u(t_l, x_j) - Delta u(t_l, x_{j-1})` for `|i - j| = lag`.
///
/// Evaluated through the rough/smooth split of the derivative covariance,
/// which keeps full relative accuracy for every `N` and `gamma`. Lag 0 is
/// accepted so that cross-time covariances at equal positions are
/// available; at equal times it is [`delta_u_increment_variance`].
pub fn delta_u_increment_cov(
    lag: usize,
    t_k: f64,
    t_l: f64,
    params: &ModelParams,
    scheme: &SamplingScheme,
) -> Result<f64> {
    check_times(t_k, t_l)?;
    if lag > scheme.n_space {
        return Err(Error::domain(format!("lag {lag} exceeds N = {}", scheme.n_space)));
    }
    let h = scheme.h();
    let kernel = SplitKernel::new(params, t_k, t_l);
    Ok(kernel.stencil_second_difference(lag as f64 * h, h, scheme.stencil_width()))
}

/// `E|Delta u(t, x + h) - Delta u(t, x)|^2`, independent of `x`.
pub fn delta_u_increment_variance(t: f64, params: &ModelParams, scheme: &SamplingScheme) -> Result<f64> {
    delta_u_increment_cov(0, t, t, params, scheme)
}

/// `F(d) = 2 R(d) - R(d + delta) - R(|d - delta|)` with `R` the rectangle
/// integral of `(s1+s2)^{-1/2} exp(-d^2 / (4 theta (s1+s2)))`.
fn stencil_f(d: f64, delta: f64, theta: f64, t_k: f64, t_l: f64) -> f64 {
    let r = |dist: f64| rect_integral_half(dist * dist / (4.0 * theta), t_k, t_l);
    2.0 * r(d) - r(d + delta) - r((d - delta).abs())
}

/// Closed form of [`delta_u_increment_cov`] as a second difference of
/// [`stencil_f`], itself built from `gamma_half_integral` and
/// `rect_integral_5half`.
///
/// The prefactor grows like `N^{2 gamma}` while the bracket is a fourth
/// difference of O(1) terms, so in double precision this is only usable
/// for small `N` and `gamma = 1`; it exists as an independent cross-check.
pub fn delta_u_increment_cov_closed_form(
    lag: usize,
    t_k: f64,
    t_l: f64,
    params: &ModelParams,
    scheme: &SamplingScheme,
) -> Result<f64> {
    check_times(t_k, t_l)?;
    if lag > scheme.n_space {
        return Err(Error::domain(format!("lag {lag} exceeds N = {}", scheme.n_space)));
    }
    let h = scheme.h();
    let delta = scheme.stencil_width();
    let theta = params.theta();
    let f = |i: isize| stencil_f((i as f64 * h).abs(), delta, theta, t_k, t_l);
    let i = lag as isize;
    let bracket = 2.0 * f(i) - f(i + 1) - f(i - 1);
    Ok(params.tau() * theta / (2.0 * delta * delta) * bracket)
}

/// The pieces of the rectangle integral `R` at equal times `t`, grouped
/// by their power of `c`.
struct LemmaTerms {
    c: f64,
    e_total: f64,
    e_single: f64,
    gamma_bracket: f64,
    rect: f64,
}

impl LemmaTerms {
    fn new(c: f64, t: f64) -> Self {
        if c == 0.0 {
            return Self { c, e_total: 1.0, e_single: 1.0, gamma_bracket: 0.0, rect: 0.0 };
        }
        let c32 = c * c.sqrt();
        Self {
            c,
            e_total: (-c / (2.0 * t)).exp(),
            e_single: (-c / t).exp(),
            gamma_bracket: c32
                * (gamma_half_integral_between(t / c, 2.0 * t / c)
                    - gamma_half_integral_between(0.0, t / c)),
            rect: c32 * rect_integral_5half(t / c, t / c, 1.0).expect("positive arguments"),
        }
    }
}

/// `R(c_a) - R(c_b)` at equal times, with the exponential differences taken
/// through `expm1`.
fn lemma_difference(a: &LemmaTerms, b: &LemmaTerms, t: f64) -> f64 {
    let two_t = 2.0 * t;
    let ediff = |ca: f64, cb: f64, s: f64| (-cb / s).exp() * ((cb - ca) / s).exp_m1();
    let first = two_t.powf(1.5) * ediff(a.c, b.c, two_t) - 2.0 * t.powf(1.5) * ediff(a.c, b.c, t);
    let second = a.c * (two_t.sqrt() * a.e_total - 2.0 * t.sqrt() * a.e_single)
        - b.c * (two_t.sqrt() * b.e_total - 2.0 * t.sqrt() * b.e_single);
    4.0 / 3.0 * first + 16.0 / 3.0 * second - 16.0 / 3.0 * (a.gamma_bracket - b.gamma_bracket)
        - 4.0 * (a.rect - b.rect)
}

/// [`delta_u_increment_variance`] assembled from its three closed-form
/// blocks: stencil self-covariance, and the two cross terms at distance
/// `h + delta` and `|h - delta|`. Subject to the same cancellation as
/// [`delta_u_increment_cov_closed_form`].
pub fn delta_u_increment_variance_blocks(
    t: f64,
    params: &ModelParams,
    scheme: &SamplingScheme,
) -> Result<[f64; 3]> {
    ensure_positive("t", t)?;
    let theta = params.theta();
    let h = scheme.h();
    let delta = scheme.stencil_width();
    let at = |d: f64| LemmaTerms::new(d * d / (4.0 * theta), t);
    let scale = params.tau() * theta / (delta * delta);
    let step = at(h);
    let self_block = 2.0 * scale * lemma_difference(&at(0.0), &at(delta), t);
    let wide = scale * lemma_difference(&at(h + delta), &step, t);
    let narrow = scale * lemma_difference(&at((h - delta).abs()), &step, t);
    Ok([self_block, wide, narrow])
}
