use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{FieldKind, FieldSample, Seed};
use crate::error::{ensure_positive, Error, Result};
use crate::model::{ModelParams, SamplingScheme};

/// `exp(-k^2 theta t)` is dropped once the exponent passes this value.
const DECAY_CUTOFF: f64 = 40.0;
/// Exact sin/cos reseed interval of the angle-addition recurrence.
const RESEED: usize = 128;
/// Largest lattice `pi / L` that is recognised for mode folding.
const MAX_LATTICE: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trig {
    Sin,
    Cos,
}

impl Trig {
    fn eval(self, x: f64) -> f64 {
        match self {
            Trig::Sin => x.sin(),
            Trig::Cos => x.cos(),
        }
    }
}

/// Points of the form `m pi / L`. On such points `trig(k x)` depends on
/// `k` only modulo `2L`, so any number of modes can be folded onto `2L`
/// residues before evaluation.
struct Lattice {
    period: usize,
    index: Vec<usize>,
    table: Vec<f64>,
}

impl Lattice {
    fn detect(points: &[f64], trig: Trig) -> Option<Self> {
        let step = points
            .iter()
            .copied()
            .chain(points.windows(2).map(|w| (w[1] - w[0]).abs()))
            .filter(|d| *d > 1e-12)
            .fold(f64::INFINITY, f64::min);
        if !step.is_finite() {
            return None;
        }
        let l = (PI / step).round();
        if !(1.0..=MAX_LATTICE as f64).contains(&l) {
            return None;
        }
        let index = points
            .iter()
            .map(|x| {
                let m = x * l / PI;
                ((m - m.round()).abs() <= 64.0 * f64::EPSILON * m.max(1.0)).then_some(m.round() as usize)
            })
            .collect::<Option<Vec<_>>>()?;
        let l = l as usize;
        let period = 2 * l;
        let table = (0..period).map(|m| trig.eval(PI * m as f64 / l as f64)).collect();
        Some(Self { period, index, table })
    }

    /// `sum_k coef[k-1] trig(k x_p)` for modes `k = 1..=coef.len()`.
    fn sum(&self, coef: &[f64]) -> Vec<f64> {
        let p = self.period;
        // weights[r] multiplies trig(r x); residues are contiguous from 0
        let weights: Vec<f64> = if coef.len() >= p {
            let mut folded = vec![0.0; p];
            for (k, c) in coef.iter().enumerate() {
                folded[(k + 1) % p] += c;
            }
            folded
        } else {
            std::iter::once(0.0).chain(coef.iter().copied()).collect()
        };
        self.index
            .iter()
            .map(|&m| {
                let step = m % p;
                let mut idx = 0;
                let mut acc = 0.0;
                for &w in &weights {
                    acc += w * self.table[idx];
                    idx += step;
                    if idx >= p {
                        idx -= p;
                    }
                }
                acc
            })
            .collect()
    }
}

/// Evaluates trigonometric series at a fixed set of points.
struct SeriesEvaluator {
    points: Vec<f64>,
    trig: Trig,
    lattice: Option<Lattice>,
}

impl SeriesEvaluator {
    fn new(points: Vec<f64>, trig: Trig) -> Self {
        let lattice = Lattice::detect(&points, trig);
        Self { points, trig, lattice }
    }

    fn sum(&self, coef: &[f64]) -> Vec<f64> {
        if let Some(lattice) = &self.lattice {
            return lattice.sum(coef);
        }
        self.points.iter().map(|&x| self.sum_at(x, coef)).collect()
    }

    fn sum_at(&self, x: f64, coef: &[f64]) -> f64 {
        let (s1, c1) = x.sin_cos();
        let (mut s, mut c) = (0.0, 1.0);
        let mut acc = 0.0;
        for (j, a) in coef.iter().enumerate() {
            let k = j + 1;
            if j % RESEED == 0 {
                (s, c) = (k as f64 * x).sin_cos();
            } else {
                (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
            }
            acc += a * match self.trig {
                Trig::Sin => s,
                Trig::Cos => c,
            };
        }
        acc
    }
}

/// `u` (power 2, sine) or `u_x` (power 1, cosine) at every time and point.
///
/// The series is split as `S_0 - S_t`, where `S_t` carries the factor
/// `exp(-k^2 theta t)` and is truncated where that factor underflows, so
/// that each additional time costs only the low modes.
fn series_rows(
    params: &ModelParams,
    times: &[f64],
    points: Vec<f64>,
    n_modes: usize,
    power: i32,
    trig: Trig,
    seed: Seed,
) -> Vec<Vec<f64>> {
    let mut rng = seed.rng();
    let scale = (2.0 / PI).sqrt() * params.sigma() / params.theta();
    let base: Vec<f64> = (1..=n_modes)
        .map(|k| {
            let xi: f64 = rng.sample(StandardNormal);
            scale * xi / (k as f64).powi(power)
        })
        .collect();
    let eval = SeriesEvaluator::new(points, trig);
    let mut stationary: Option<Vec<f64>> = None;
    let theta = params.theta();
    times
        .iter()
        .map(|&t| {
            let k_max = ((DECAY_CUTOFF / (theta * t)).sqrt().ceil() as usize).min(n_modes);
            let decay = |k: usize| (-(k as f64).powi(2) * theta * t).exp();
            if k_max == n_modes {
                let coef: Vec<f64> = base
                    .iter()
                    .enumerate()
                    .map(|(j, b)| -(-((j + 1) as f64).powi(2) * theta * t).exp_m1() * b)
                    .collect();
                return eval.sum(&coef);
            }
            let s0 = stationary.get_or_insert_with(|| eval.sum(&base));
            let coef: Vec<f64> = base[..k_max].iter().enumerate().map(|(j, b)| decay(j + 1) * b).collect();
            let st = eval.sum(&coef);
            s0.iter().zip(st).map(|(a, b)| a - b).collect()
        })
        .collect()
}

fn check_inputs(times: &[f64], points: &[f64], n_modes: usize) -> Result<()> {
    if n_modes == 0 {
        return Err(Error::domain("n_modes must be >= 1"));
    }
    if times.is_empty() {
        return Err(Error::domain("at least one time is required"));
    }
    for &t in times {
        ensure_positive("time", t)?;
    }
    for &x in points {
        if !(0.0..=PI).contains(&x) {
            return Err(Error::domain(format!("point {x} outside [0, pi]")));
        }
    }
    Ok(())
}

/// One realization of `u(t, x)` on `(0, pi)` with zero boundary values,
/// `u = sqrt(2/pi) (sigma/theta) sum_k (1 - e^{-k^2 theta t}) k^{-2} sin(k x) xi_k`,
/// truncated to `n_modes` terms and evaluated at every `(t, x)` with the
/// same draw of `xi`. The end points `0` and `pi` are admitted.
pub fn simulate_spectral_bounded(
    params: &ModelParams,
    times: &[f64],
    xs: &[f64],
    n_modes: usize,
    seed: impl Into<Seed>,
) -> Result<FieldSample> {
    check_inputs(times, xs, n_modes)?;
    let seed = seed.into();
    let values = series_rows(params, times, xs.to_vec(), n_modes, 2, Trig::Sin, seed);
    Ok(FieldSample {
        kind: FieldKind::UValues,
        params: *params,
        scheme: None,
        times: times.to_vec(),
        xs: xs.to_vec(),
        values,
        seed,
        n_modes: Some(n_modes),
    })
}

fn check_scheme(scheme: &SamplingScheme) -> Result<()> {
    scheme.validate()?;
    if scheme.a_end < 0.0 || scheme.b_end > PI {
        return Err(Error::domain(format!(
            "spectral sampling needs [A, B] inside [0, pi], got [{}, {}]",
            scheme.a_end, scheme.b_end
        )));
    }
    Ok(())
}

/// [`simulate_spectral_bounded`] on the grid points `x_0..x_N` of `scheme`.
pub fn simulate_spectral_grid(
    params: &ModelParams,
    scheme: &SamplingScheme,
    n_modes: usize,
    seed: impl Into<Seed>,
) -> Result<FieldSample> {
    check_scheme(scheme)?;
    let mut sample = simulate_spectral_bounded(params, &scheme.times, &scheme.grid(), n_modes, seed)?;
    sample.scheme = Some(scheme.clone());
    Ok(sample)
}

/// Increments of the term-by-term derivative
/// `u_x = sqrt(2/pi) (sigma/theta) sum_k (1 - e^{-k^2 theta t}) k^{-1} cos(k x) xi_k`
/// over the cells of `scheme`.
///
/// The derivative series converges slowly: modes above `K` carry about
/// `2 sigma^2 / (pi theta^2 K)` of each increment's variance.
pub fn simulate_spectral_ux_increments(
    params: &ModelParams,
    scheme: &SamplingScheme,
    n_modes: usize,
    seed: impl Into<Seed>,
) -> Result<FieldSample> {
    check_scheme(scheme)?;
    check_inputs(&scheme.times, &[], n_modes)?;
    let seed = seed.into();
    let grid = scheme.grid();
    let rows = series_rows(params, &scheme.times, grid.clone(), n_modes, 1, Trig::Cos, seed);
    let values = rows.iter().map(|r| r.windows(2).map(|w| w[1] - w[0]).collect()).collect();
    Ok(FieldSample {
        kind: FieldKind::UxIncrements,
        params: *params,
        scheme: Some(scheme.clone()),
        times: scheme.times.clone(),
        xs: grid[1..].to_vec(),
        values,
        seed,
        n_modes: Some(n_modes),
    })
}

/// Increments `Delta u(t, x_i) - Delta u(t, x_{i-1})`, `i = 2..=N-1`, of the
/// stencil quotient `(u(y_i) - u(z_i)) / ((a + b) h_gamma)`, from one spectral
/// draw evaluated at the offset points.
pub fn simulate_spectral_delta_u(
    params: &ModelParams,
    scheme: &SamplingScheme,
    n_modes: usize,
    seed: impl Into<Seed>,
) -> Result<FieldSample> {
    check_scheme(scheme)?;
    let n = scheme.n_space;
    if n < 3 {
        return Err(Error::domain("stencil increments need N >= 3"));
    }
    let seed = seed.into();
    let mut points = Vec::with_capacity(2 * (n - 1));
    for i in 1..n {
        points.push(scheme.y(i));
        points.push(scheme.z(i));
    }
    for p in points.iter_mut() {
        // offsets that round just past the boundary
        if *p < 0.0 && *p > -1e-12 {
            *p = 0.0;
        }
    }
    check_inputs(&scheme.times, &points, n_modes)?;
    let rows = series_rows(params, &scheme.times, points, n_modes, 2, Trig::Sin, seed);
    let width = scheme.stencil_width();
    let values = rows
        .iter()
        .map(|r| {
            let quotient: Vec<f64> = r.chunks_exact(2).map(|yz| (yz[0] - yz[1]) / width).collect();
            quotient.windows(2).map(|w| w[1] - w[0]).collect()
        })
        .collect();
    Ok(FieldSample {
        kind: FieldKind::DeltaUIncrements,
        params: *params,
        scheme: Some(scheme.clone()),
        times: scheme.times.clone(),
        xs: (2..n).map(|i| scheme.x(i)).collect(),
        values,
        seed,
        n_modes: Some(n_modes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::bounded_domain_cov;

    #[test]
    fn lattice_and_recurrence_agree() {
        let pts: Vec<f64> = (0..=64).map(|i| i as f64 * PI / 64.0).collect();
        let coef: Vec<f64> = (1..=1000).map(|k| 1.0 / (k as f64).powi(2) * if k % 3 == 0 { -1.0 } else { 1.0 }).collect();
        for trig in [Trig::Sin, Trig::Cos] {
            let fast = SeriesEvaluator::new(pts.clone(), trig);
            assert!(fast.lattice.is_some());
            let slow = SeriesEvaluator { points: pts.clone(), trig, lattice: None };
            let direct: Vec<f64> =
                pts.iter().map(|&x| coef.iter().enumerate().map(|(j, c)| c * trig.eval((j + 1) as f64 * x)).sum()).collect();
            for ((a, b), d) in fast.sum(&coef).iter().zip(slow.sum(&coef)).zip(direct) {
                assert!((a - d).abs() < 1e-12, "{trig:?}: {a} vs {d}");
                assert!((b - d).abs() < 1e-12, "{trig:?}: {b} vs {d}");
            }
        }
    }

    #[test]
    fn irregular_points_use_recurrence() {
        let eval = SeriesEvaluator::new(vec![0.3, 1.0, 2.0], Trig::Sin);
        assert!(eval.lattice.is_none());
    }

    #[test]
    fn zero_volatility_gives_zero_field() {
        let p = ModelParams::new(0.1, 0.0).unwrap();
        let s = simulate_spectral_bounded(&p, &[0.2, 1.0], &[0.5, 1.5, 3.0], 100, 4).unwrap();
        assert!(s.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let p = ModelParams::new(0.1, 0.1).unwrap();
        let a = simulate_spectral_bounded(&p, &[0.2], &[0.5, 1.5], 500, 11).unwrap();
        let b = simulate_spectral_bounded(&p, &[0.2], &[0.5, 1.5], 500, 11).unwrap();
        let c = simulate_spectral_bounded(&p, &[0.2], &[0.5, 1.5], 500, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn split_matches_direct_coefficients() {
        // small theta t forces the direct branch, large t the split one
        let p = ModelParams::new(0.1, 0.1).unwrap();
        let xs = [0.4, 1.9];
        let early = simulate_spectral_bounded(&p, &[1e-4], &xs, 300, 3).unwrap();
        let late = simulate_spectral_bounded(&p, &[1e-4, 5.0], &xs, 300, 3).unwrap();
        assert_eq!(early.values[0], late.values[0]);
        let mut rng = Seed::from(3).rng();
        let scale = (2.0 / PI).sqrt();
        let direct: f64 = (1..=300)
            .map(|k| {
                let xi: f64 = rng.sample(StandardNormal);
                let k = k as f64;
                scale * (1.0 - (-k * k * 0.5).exp()) / (k * k) * (k * xs[1]).sin() * xi
            })
            .sum();
        assert!((late.values[1][1] - direct).abs() < 1e-13);
    }

    #[test]
    fn endpoints_vanish() {
        let p = ModelParams::new(0.3, 1.0).unwrap();
        let s = simulate_spectral_bounded(&p, &[0.5], &[0.0, PI], 1000, 1).unwrap();
        assert!(s.values[0].iter().all(|v| v.abs() < 1e-12));
        assert!(simulate_spectral_bounded(&p, &[0.5], &[3.2], 10, 1).is_err());
        assert!(simulate_spectral_bounded(&p, &[0.5], &[1.0], 0, 1).is_err());
    }

    #[test]
    fn variance_matches_series_covariance() {
        let p = ModelParams::new(0.1, 0.1).unwrap();
        let reps = 4000;
        let xs = [PI / 2.0];
        let draws: Vec<f64> = (0..reps)
            .map(|r| simulate_spectral_bounded(&p, &[0.2], &xs, 2000, Seed::new(99, r)).unwrap().values[0][0])
            .collect();
        let mean = draws.iter().sum::<f64>() / reps as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let exact = bounded_domain_cov(0.2, 0.2, PI / 2.0, PI / 2.0, &p, 2000).unwrap();
        let se = exact * (2.0 / (reps - 1) as f64).sqrt();
        assert!((var - exact).abs() < 4.0 * se, "{var} vs {exact} (se {se})");
    }

    #[test]
    fn delta_and_grid_shapes() {
        let p = ModelParams::new(0.1, 0.1).unwrap();
        let s = SamplingScheme::uniform(0.0, PI, 16, vec![0.2, 0.4]).unwrap();
        let g = simulate_spectral_grid(&p, &s, 200, 1).unwrap();
        assert_eq!(g.xs.len(), 17);
        g.validate().unwrap();
        let d = simulate_spectral_delta_u(&p, &s, 200, 1).unwrap();
        assert_eq!(d.xs.len(), 14);
        d.validate().unwrap();
        // forward stencil with gamma = 1 samples the grid itself: the
        // increments are second differences over h
        let h = s.h();
        for j in 0..2 {
            for i in 0..14 {
                let sd = g.values[j][i + 3] - 2.0 * g.values[j][i + 2] + g.values[j][i + 1];
                assert!((d.values[j][i] - sd / h).abs() < 1e-12);
            }
        }
        let u = simulate_spectral_ux_increments(&p, &s, 200, 1).unwrap();
        assert_eq!(u.xs.len(), 16);
        let outside = SamplingScheme::uniform(0.0, 4.0, 8, vec![0.2]).unwrap();
        assert!(simulate_spectral_grid(&p, &outside, 10, 1).is_err());
    }
}
