//! Rough/smooth split of the derivative covariance.
//!
//! `V(d) = E[u_x(t, x) u_x(t', x + d)]` is `-kappa |d|` plus a function whose
//! second derivative is a signed sum of three Gaussians in `d`. Second
//! differences of `V` (with or without an extra stencil smoothing) are then
//! a tent integral of the kink, which is integrated exactly, minus a smooth
//! Gaussian integral, which Gauss-Legendre handles to full precision. Neither
//! part involves a difference of large quantities, so the route stays exact
//! where the closed forms lose every digit to cancellation.

use super::special::gl12;
use crate::model::ModelParams;

pub(crate) struct SplitKernel {
    kappa: f64,
    coef: f64,
    times: [f64; 3],
    inv_sqrt: [f64; 3],
    inv_four_theta: f64,
    width: f64,
}

impl SplitKernel {
    pub(crate) fn new(params: &ModelParams, t: f64, tp: f64) -> Self {
        let theta = params.theta();
        let sum = t + tp;
        Self {
            kappa: params.sigma().powi(2) / (2.0 * theta * theta),
            coef: params.tau() / (2.0 * theta),
            times: [t, tp, sum],
            inv_sqrt: [1.0 / t.sqrt(), 1.0 / tp.sqrt(), 1.0 / sum.sqrt()],
            inv_four_theta: 1.0 / (4.0 * theta),
            width: (4.0 * theta * t.min(tp)).sqrt(),
        }
    }

    /// Second derivative of the smooth part at distance `d`.
    pub(crate) fn smooth_second(&self, d: f64) -> f64 {
        let q = d * d * self.inv_four_theta;
        let [t, tp, sum] = self.times;
        let [a, b, c] = self.inv_sqrt;
        self.coef * (a * (-q / t).exp() + b * (-q / tp).exp() - c * (-q / sum).exp())
    }

    fn negligible(&self, d: f64, reach: f64) -> bool {
        let gap = d.abs() - reach;
        gap > 0.0 && gap * gap * self.inv_four_theta / self.times[2] > 740.0
    }

    fn pieces(&self, span: f64) -> usize {
        ((2.0 * span / self.width).ceil() as usize).clamp(1, 400)
    }

    /// `int_{-1}^{1} (1 - |s|) G(d + h s) ds`.
    fn triangle(&self, d: f64, h: f64) -> f64 {
        if self.negligible(d, h) {
            return 0.0;
        }
        let (nodes, weights) = gl12();
        let p = self.pieces(h);
        let step = 1.0 / p as f64;
        let mut total = 0.0;
        for piece in 0..p {
            let lo = piece as f64 * step;
            for (x, w) in nodes.iter().zip(weights) {
                let s = lo + x * step;
                let g = self.smooth_second(d + h * s) + self.smooth_second(d - h * s);
                total += w * step * (1.0 - s) * g;
            }
        }
        total
    }

    /// `int int_{[-1,1]^2} (1 - |r|)(1 - |s|) G(d + delta r + h s) dr ds`.
    fn triangle_square(&self, d: f64, delta: f64, h: f64) -> f64 {
        if self.negligible(d, h + delta) {
            return 0.0;
        }
        let (nodes, weights) = gl12();
        let p = self.pieces(delta);
        let step = 1.0 / p as f64;
        let mut total = 0.0;
        for piece in 0..p {
            let lo = piece as f64 * step;
            for (x, w) in nodes.iter().zip(weights) {
                let r = lo + x * step;
                let inner = self.triangle(d + delta * r, h) + self.triangle(d - delta * r, h);
                total += w * step * (1.0 - r) * inner;
            }
        }
        total
    }

    /// `2 V(d) - V(d + h) - V(d - h)` for `d >= 0`.
    #[cfg(test)]
    pub(crate) fn second_difference(&self, d: f64, h: f64) -> f64 {
        2.0 * self.kappa * (h - d.abs()).max(0.0) - h * h * self.triangle(d, h)
    }

    /// The second difference in `h` of `V` after smoothing each argument by
    /// the stencil `[z, y]` of width `delta`, i.e. the covariance of
    /// consecutive stencil-quotient increments at distance `d`.
    pub(crate) fn stencil_second_difference(&self, d: f64, h: f64, delta: f64) -> f64 {
        2.0 * self.kappa * tent_average(d, h, delta) - h * h * self.triangle_square(d, delta, h)
    }
}

/// `delta^{-2} int_{-delta}^{delta} (delta - |r|)(h - |d + r|)_+ dr`.
///
/// The integrand is piecewise quadratic between the kinks, so Simpson's rule
/// on each piece is exact.
pub(crate) fn tent_average(d: f64, h: f64, delta: f64) -> f64 {
    let f = |r: f64| (delta - r.abs()) * (h - (d + r).abs()).max(0.0);
    let mut knots: Vec<f64> = [-delta, 0.0, delta, -d - h, -d, -d + h]
        .into_iter()
        .filter(|k| (-delta..=delta).contains(k))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut total = 0.0;
    for pair in knots.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        total += (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
    }
    total / (delta * delta)
}
