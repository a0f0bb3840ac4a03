use std::f64::consts::PI;

use crate::error::{ensure_positive, Error, Result};
use crate::model::ModelParams;

/// `E[u(t, x) u(tp, y)]` for the Dirichlet problem on `(0, pi)`, truncated
/// to the first `n_modes` sine modes. The endpoints are admitted and give 0.
pub fn bounded_domain_cov(
    t: f64,
    tp: f64,
    x: f64,
    y: f64,
    params: &ModelParams,
    n_modes: usize,
) -> Result<f64> {
    ensure_positive("t", t)?;
    ensure_positive("tp", tp)?;
    for v in [x, y] {
        if !(0.0..=PI).contains(&v) {
            return Err(Error::domain(format!("position {v} outside [0, pi]")));
        }
    }
    if n_modes == 0 {
        return Err(Error::domain("n_modes must be >= 1"));
    }
    let theta = params.theta();
    // Sum smallest terms first.
    let total: f64 = (1..=n_modes)
        .rev()
        .map(|k| {
            let kf = k as f64;
            let decay = kf * kf * theta;
            let k2 = kf * kf;
            (-(-decay * t).exp_m1()) * (-(-decay * tp).exp_m1()) / (k2 * k2) * (kf * x).sin() * (kf * y).sin()
        })
        .sum();
    Ok(2.0 * params.sigma().powi(2) / (PI * theta * theta) * total)
}
