//! Adaptive Gauss-Kronrod (7, 15) quadrature in one and two dimensions.
//!
//! The 2-D driver targets rectangles `[0, t] x [0, tp]` whose integrand is
//! singular like `(s1 + s2)^{-3/2}` at the origin. The corner square
//! `[0, m]^2`, `m = min(t, tp)`, is split along the diagonal and each
//! triangle is mapped to the unit square by `s1 = m p^2`, `s2 = m p^2 v`
//! (and the mirror image). The Jacobian `2 m^2 p^3` absorbs the singularity
//! so that tensor Gauss-Kronrod converges geometrically on every cell.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// The 15 Kronrod abscissae on [-1, 1] with Kronrod and Gauss weights
/// (Gauss weight 0 where the node is Kronrod-only).
fn rule() -> [(f64, f64, f64); 15] {
    let mut out = [(0.0, 0.0, 0.0); 15];
    for j in 0..7 {
        let wg = if j % 2 == 1 { WG[j / 2] } else { 0.0 };
        out[j] = (-XGK[j], WGK[j], wg);
        out[14 - j] = (XGK[j], WGK[j], wg);
    }
    out[7] = (0.0, WGK[7], WG[3]);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub est_error: f64,
    pub subdivisions: usize,
}

struct Cell<T> {
    lo: T,
    hi: T,
    value: f64,
    error: f64,
    magnitude: f64,
    tag: usize,
}

impl<T> PartialEq for Cell<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Cell<T> {}
impl<T> PartialOrd for Cell<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Cell<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

struct Totals {
    value: f64,
    error: f64,
    magnitude: f64,
}

fn converged(t: &Totals, rel_tol: f64, abs_tol: f64) -> bool {
    // The rounding floor covers integrands whose parts cancel to nearly zero.
    t.error <= (rel_tol * t.value.abs()).max(abs_tol).max(64.0 * f64::EPSILON * t.magnitude)
}

fn gk_1d<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let (mut k, mut g, mut mag) = (0.0, 0.0, 0.0);
    for (x, wk, wg) in rule() {
        let v = f(c + r * x);
        k += wk * v;
        g += wg * v;
        mag += wk * v.abs();
    }
    (k * r, (k - g).abs() * r, mag * r.abs())
}

/// Adaptive 1-D integral of `f` over `[a, b]`.
pub fn integrate_1d<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_subdivisions: usize,
) -> Result<QuadResult> {
    let mut heap = BinaryHeap::new();
    let (value, error, magnitude) = gk_1d(&f, a, b);
    heap.push(Cell { lo: a, hi: b, value, error, magnitude, tag: 0 });
    let mut totals = Totals { value, error, magnitude };
    let mut subdivisions = 0;
    while !converged(&totals, rel_tol, abs_tol) {
        if subdivisions >= max_subdivisions {
            return Err(Error::Accuracy { value: totals.value, est_error: totals.error });
        }
        let worst = heap.pop().expect("nonempty");
        totals.value -= worst.value;
        totals.error -= worst.error;
        totals.magnitude -= worst.magnitude;
        let mid = 0.5 * (worst.lo + worst.hi);
        for (lo, hi) in [(worst.lo, mid), (mid, worst.hi)] {
            let (value, error, magnitude) = gk_1d(&f, lo, hi);
            totals.value += value;
            totals.error += error;
            totals.magnitude += magnitude;
            heap.push(Cell { lo, hi, value, error, magnitude, tag: 0 });
        }
        subdivisions += 1;
        // re-sum to keep the running totals free of drift
        if subdivisions % 64 == 0 {
            totals = resum(&heap);
        }
    }
    let totals = resum(&heap);
    Ok(QuadResult { value: totals.value, est_error: totals.error, subdivisions })
}

fn resum<T>(heap: &BinaryHeap<Cell<T>>) -> Totals {
    let mut cells: Vec<&Cell<T>> = heap.iter().collect();
    // deterministic order independent of heap layout
    cells.sort_by(|a, b| a.magnitude.total_cmp(&b.magnitude));
    let mut t = Totals { value: 0.0, error: 0.0, magnitude: 0.0 };
    for c in cells {
        t.value += c.value;
        t.error += c.error;
        t.magnitude += c.magnitude;
    }
    t
}

#[derive(Clone, Copy)]
enum Chart {
    Plain,
    /// Triangle `s2 <= s1 <= m`.
    Lower(f64),
    /// Triangle `s1 <= s2 <= m`.
    Upper(f64),
}

impl Chart {
    fn eval<F: Fn(f64, f64) -> f64>(self, f: &F, u: f64, v: f64) -> f64 {
        match self {
            Chart::Plain => f(u, v),
            Chart::Lower(m) => {
                let s1 = m * u * u;
                let jac = 2.0 * m * m * u * u * u;
                if jac == 0.0 {
                    0.0
                } else {
                    f(s1, s1 * v) * jac
                }
            }
            Chart::Upper(m) => {
                let s2 = m * u * u;
                let jac = 2.0 * m * m * u * u * u;
                if jac == 0.0 {
                    0.0
                } else {
                    f(s2 * v, s2) * jac
                }
            }
        }
    }
}

fn gk_2d<F: Fn(f64, f64) -> f64>(f: &F, chart: Chart, lo: [f64; 2], hi: [f64; 2]) -> (f64, f64, f64) {
    let cu = 0.5 * (lo[0] + hi[0]);
    let ru = 0.5 * (hi[0] - lo[0]);
    let cv = 0.5 * (lo[1] + hi[1]);
    let rv = 0.5 * (hi[1] - lo[1]);
    let nodes = rule();
    let (mut k, mut g, mut mag) = (0.0, 0.0, 0.0);
    for &(xu, wku, wgu) in &nodes {
        let u = cu + ru * xu;
        for &(xv, wkv, wgv) in &nodes {
            let val = chart.eval(f, u, cv + rv * xv);
            k += wku * wkv * val;
            g += wgu * wgv * val;
            mag += wku * wkv * val.abs();
        }
    }
    let area = ru * rv;
    (k * area, (k - g).abs() * area, mag * area)
}

/// Adaptive integral of `f(s1, s2)` over `[0, t] x [0, tp]`, tolerating an
/// integrable singularity of order `(s1 + s2)^{-3/2}` at the origin.
pub fn integrate_rectangle<F: Fn(f64, f64) -> f64>(
    f: F,
    t: f64,
    tp: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_subdivisions: usize,
) -> Result<QuadResult> {
    let m = t.min(tp);
    let mut charts = vec![(Chart::Lower(m), [0.0, 0.0], [1.0, 1.0]), (Chart::Upper(m), [0.0, 0.0], [1.0, 1.0])];
    if t > m {
        charts.push((Chart::Plain, [m, 0.0], [t, m]));
    }
    if tp > m {
        charts.push((Chart::Plain, [0.0, m], [m, tp]));
    }
    let mut heap = BinaryHeap::new();
    for (tag, (chart, lo, hi)) in charts.iter().enumerate() {
        let (value, error, magnitude) = gk_2d(&f, *chart, *lo, *hi);
        heap.push(Cell { lo: *lo, hi: *hi, value, error, magnitude, tag });
    }
    let mut totals = resum(&heap);
    let mut subdivisions = 0;
    while !converged(&totals, rel_tol, abs_tol) {
        if subdivisions >= max_subdivisions {
            return Err(Error::Accuracy { value: totals.value, est_error: totals.error });
        }
        let worst = heap.pop().expect("nonempty");
        totals.value -= worst.value;
        totals.error -= worst.error;
        totals.magnitude -= worst.magnitude;
        let chart = charts[worst.tag].0;
        let mid = [0.5 * (worst.lo[0] + worst.hi[0]), 0.5 * (worst.lo[1] + worst.hi[1])];
        for (lu, hu) in [(worst.lo[0], mid[0]), (mid[0], worst.hi[0])] {
            for (lv, hv) in [(worst.lo[1], mid[1]), (mid[1], worst.hi[1])] {
                let (value, error, magnitude) = gk_2d(&f, chart, [lu, lv], [hu, hv]);
                totals.value += value;
                totals.error += error;
                totals.magnitude += magnitude;
                heap.push(Cell { lo: [lu, lv], hi: [hu, hv], value, error, magnitude, tag: worst.tag });
            }
        }
        subdivisions += 1;
        if subdivisions % 64 == 0 {
            totals = resum(&heap);
        }
    }
    let totals = resum(&heap);
    Ok(QuadResult { value: totals.value, est_error: totals.error, subdivisions })
}
