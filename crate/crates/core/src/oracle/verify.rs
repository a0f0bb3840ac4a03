//! Randomized comparison of every closed-form covariance against quadrature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cubature::QuadResult;
use super::integrands::{
    quad_cov, quad_delta_increment_cov, quad_gamma_half, quad_ux_increment_cov, IntegrandId, QuadParams,
    QuadratureSpec,
};
use crate::error::Result;
use crate::kernels::{
    delta_u_increment_cov, delta_u_increment_cov_closed_form, delta_u_increment_variance,
    delta_u_increment_variance_blocks, gamma_half_integral, rect_integral_5half, ux_increment_cov,
    ux_increment_variance, ux_pointwise_cov,
};
use crate::kernels::special::rect_integral_half;
use crate::model::{ModelParams, SamplingScheme};

/// Tolerance applied to the lag-0 continuation check, which compares two
/// closed forms and so is not limited by quadrature accuracy.
pub const LAG0_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaKind {
    SingleIntegral,
    DoubleIntegral,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaReport {
    pub formula: String,
    pub kind: FormulaKind,
    pub trials: usize,
    pub tolerance: f64,
    pub max_rel_error: f64,
    /// Trial index at which `max_rel_error` was attained.
    pub worst_trial: Option<usize>,
    /// Trials where the closed form or the quadrature returned an error.
    pub errors: Vec<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub tolerance: f64,
    pub trials: usize,
    pub seed: u64,
    pub formulas: Vec<FormulaReport>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &FormulaReport> {
        self.formulas.iter().filter(|f| !f.pass)
    }
}

/// One random admissible parameter tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub theta: f64,
    pub sigma: f64,
    pub t: f64,
    pub tp: f64,
    pub x: f64,
    pub y: f64,
    pub a_end: f64,
    pub n_space: usize,
    pub h: f64,
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub lag: usize,
    pub gamma_x: f64,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

impl Trial {
    /// Draws a tuple; trial 0 is the degenerate `t = t'`, `x = y` case.
    fn draw(rng: &mut ChaCha8Rng, index: usize) -> Self {
        let theta = log_uniform(rng, 0.05, 2.0);
        let sigma = log_uniform(rng, 0.1, 2.0);
        let t = log_uniform(rng, 0.05, 2.0);
        let tp = if index == 0 { t } else { log_uniform(rng, 0.05, 2.0) };
        // Steps are drawn relative to the diffusion length of the earlier
        // time, so the second differences stay resolvable in double
        // precision on both sides of the comparison.
        let scale = (4.0 * theta * t.min(tp)).sqrt();
        let h = scale * log_uniform(rng, 0.05, 1.0);
        let x = rng.random_range(-1.0..1.0);
        let y = if index == 0 { x } else { x + scale * rng.random_range(-1.5..1.5) };
        let mut a: f64 = rng.random_range(0.0..1.0);
        let b: f64 = rng.random_range(0.0..1.0);
        if a + b < 0.05 {
            a = 1.0;
        }
        Self {
            theta,
            sigma,
            t,
            tp,
            x,
            y,
            a_end: rng.random_range(-1.0..1.0),
            n_space: rng.random_range(4..=32),
            h,
            a,
            b,
            gamma: if rng.random_bool(0.5) { 1.0 } else { rng.random_range(1.0..1.5) },
            lag: if index == 0 { 0 } else { rng.random_range(0..=4) },
            gamma_x: log_uniform(rng, 0.1, 100.0),
        }
    }

    fn params(&self) -> ModelParams {
        ModelParams::new(self.theta, self.sigma).expect("drawn parameters are positive")
    }

    fn scheme(&self) -> SamplingScheme {
        let length = self.h * self.n_space as f64;
        let times = if self.t == self.tp {
            vec![self.t]
        } else {
            vec![self.t.min(self.tp), self.t.max(self.tp)]
        };
        SamplingScheme::new(self.a_end, self.a_end + length, self.n_space, times, self.gamma, self.a, self.b)
            .expect("drawn scheme is admissible")
    }
}

type Check = fn(&Trial, f64) -> Result<(f64, f64)>;

fn value(q: QuadResult) -> f64 {
    q.value
}

fn spec(id: IntegrandId, p: QuadParams, rel_tol: f64) -> QuadratureSpec {
    QuadratureSpec { rel_tol, max_subdivisions: 50_000, ..QuadratureSpec::new(id, p) }
}

fn check_gamma_half(tr: &Trial, _rel: f64) -> Result<(f64, f64)> {
    Ok((gamma_half_integral(tr.gamma_x)?, value(quad_gamma_half(tr.gamma_x, 1e-13)?)))
}

fn check_rect_5half(tr: &Trial, rel: f64) -> Result<(f64, f64)> {
    let c = tr.gamma_x.recip();
    let p = QuadParams { t: tr.t, tp: tr.tp, c, ..QuadParams::default() };
    Ok((rect_integral_5half(tr.t, tr.tp, c)?, value(quad_cov(&spec(IntegrandId::FifthPower, p, rel))?)))
}

fn check_pointwise(tr: &Trial, rel: f64) -> Result<(f64, f64)> {
    let p = QuadParams { t: tr.t, tp: tr.tp, x: tr.x, y: tr.y, theta: tr.theta, sigma: tr.sigma, ..QuadParams::default() };
    Ok((
        ux_pointwise_cov(tr.t, tr.tp, tr.x, tr.y, &tr.params())?,
        value(quad_cov(&spec(IntegrandId::A3, p, rel))?),
    ))
}

fn check_stencil_f(tr: &Trial, rel: f64) -> Result<(f64, f64)> {
    let width = (tr.a + tr.b) * tr.h;
    let d = (tr.x - tr.y).abs();
    let c = |dist: f64| dist * dist / (4.0 * tr.theta);
    let r = |dist: f64| rect_integral_half(c(dist), tr.t, tr.tp);
    let closed = 2.0 * r(d) - r(d + width) - r((d - width).abs());
    let p = QuadParams { t: tr.t, tp: tr.tp, x: tr.x, y: tr.y, h: tr.h, a: tr.a, b: tr.b, theta: tr.theta, ..QuadParams::default() };
    Ok((closed, value(quad_cov(&spec(IntegrandId::FRaw, p, rel))?)))
}

fn check_ux_variance(tr: &Trial, rel: f64) -> Result<(f64, f64)> {
    Ok((
        ux_increment_variance(tr.t, tr.h, &tr.params())?,
        value(quad_ux_increment_cov(0, tr.t, tr.t, tr.h, tr.theta, tr.sigma, rel)?),
    ))
}

fn check_ux_cov(tr: &Trial, rel: f64) -> Result<(f64, f64)> {
    let scheme = tr.scheme();
    Ok((
        ux_increment_cov(tr.lag, tr.t, tr.tp, &tr.params(), &scheme)?,
        value(quad_ux_increment_cov(tr.lag, tr.t, tr.tp, scheme.h(), tr.theta, tr.sigma, rel)?),
    ))
}

fn check_lag0(tr: &Trial, _rel: f64) -> Result<(f64, f64)> {
    let scheme = tr.scheme();
    Ok((
        ux_increment_cov(0, tr.t, tr.t, &tr.params(), &scheme)?,
        ux_increment_variance(tr.t, scheme.h(), &tr.params())?,
    ))
}

fn delta_quad(tr: &Trial, lag: usize, t: f64, tp: f64, rel: f64) -> Result<f64> {
    let scheme = tr.scheme();
    quad_delta_increment_cov(lag, t, tp, scheme.h(), scheme.stencil_width(), tr.theta, tr.sigma, rel).map(value)
}

fn check_delta_cov(tr: &Trial, rel: f64) -> Result<(f64, f64)> {
    let closed = delta_u_increment_cov(tr.lag, tr.t, tr.tp, &tr.params(), &tr.scheme())?;
    Ok((closed, delta_quad(tr, tr.lag, tr.t, tr.tp, rel)?))
}

fn check_delta_cov_closed(tr: &Trial, rel: f64) -> Result<(f64, f64)> {
    let closed = delta_u_increment_cov_closed_form(tr.lag, tr.t, tr.tp, &tr.params(), &tr.scheme())?;
    Ok((closed, delta_quad(tr, tr.lag, tr.t, tr.tp, rel)?))
}

fn check_delta_variance(tr: &Trial, rel: f64) -> Result<(f64, f64)> {
    let closed = delta_u_increment_variance(tr.t, &tr.params(), &tr.scheme())?;
    Ok((closed, delta_quad(tr, 0, tr.t, tr.t, rel)?))
}

fn check_delta_blocks(tr: &Trial, rel: f64) -> Result<(f64, f64)> {
    let blocks = delta_u_increment_variance_blocks(tr.t, &tr.params(), &tr.scheme())?;
    Ok((blocks.iter().sum(), delta_quad(tr, 0, tr.t, tr.t, rel)?))
}

fn checks() -> Vec<(&'static str, FormulaKind, Check)> {
    use FormulaKind::*;
    vec![
        ("gamma_half_integral", SingleIntegral, check_gamma_half as Check),
        ("rect_integral_5half", DoubleIntegral, check_rect_5half),
        ("ux_pointwise_cov", DoubleIntegral, check_pointwise),
        ("stencil_second_difference", DoubleIntegral, check_stencil_f),
        ("ux_increment_variance", DoubleIntegral, check_ux_variance),
        ("ux_increment_cov", DoubleIntegral, check_ux_cov),
        ("ux_increment_cov_lag0_vs_variance", Identity, check_lag0),
        ("delta_u_increment_cov", DoubleIntegral, check_delta_cov),
        ("delta_u_increment_cov_closed_form", DoubleIntegral, check_delta_cov_closed),
        ("delta_u_increment_variance", DoubleIntegral, check_delta_variance),
        ("delta_u_increment_variance_blocks", DoubleIntegral, check_delta_blocks),
    ]
}

/// Compares every closed form against its quadrature counterpart on
/// `trials` random admissible inputs drawn from `seed`.
///
/// Double integrals must agree to `tolerance`, single integrals to
/// `tolerance / 100`, and the lag-0 continuation to [`LAG0_TOLERANCE`].
pub fn verify_closed_forms(tolerance: f64, trials: usize, seed: u64) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Trial> = (0..trials).map(|i| Trial::draw(&mut rng, i)).collect();
    let quad_rel = (tolerance * 1e-3).clamp(1e-12, 1e-4);

    let formulas: Vec<FormulaReport> = checks()
        .into_iter()
        .map(|(name, kind, check)| {
            let limit = match kind {
                FormulaKind::SingleIntegral => tolerance / 100.0,
                FormulaKind::DoubleIntegral => tolerance,
                FormulaKind::Identity => LAG0_TOLERANCE,
            };
            let outcomes: Vec<Result<(f64, f64)>> = draws.par_iter().map(|tr| check(tr, quad_rel)).collect();
            let mut max_rel_error: f64 = 0.0;
            let mut worst_trial = None;
            let mut errors = Vec::new();
            for (i, outcome) in outcomes.into_iter().enumerate() {
                match outcome {
                    Ok((closed, reference)) => {
                        let err = relative_error(closed, reference);
                        if err > max_rel_error || worst_trial.is_none() {
                            max_rel_error = max_rel_error.max(err);
                            worst_trial = Some(i);
                        }
                    }
                    Err(e) => errors.push(format!("trial {i}: {e}")),
                }
            }
            FormulaReport {
                formula: name.to_string(),
                kind,
                trials,
                tolerance: limit,
                pass: errors.is_empty() && max_rel_error <= limit,
                max_rel_error,
                worst_trial,
                errors,
            }
        })
        .collect();
    let pass = formulas.iter().all(|f| f.pass);
    VerifyReport { tolerance, trials, seed, formulas, pass }
}

fn relative_error(closed: f64, reference: f64) -> f64 {
    if !closed.is_finite() {
        return f64::INFINITY;
    }
    if reference == 0.0 {
        return closed.abs();
    }
    ((closed - reference) / reference).abs()
}
