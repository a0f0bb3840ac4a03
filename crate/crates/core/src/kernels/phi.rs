use super::special::erf;

/// `2 e^{-c x^2} - e^{-c (x+z)^2} - e^{-c (x-z)^2}`.
///
/// Written as `-2 e^{-c x^2} [2 e^{-c z^2} sinh^2(c x z) + expm1(-c z^2)]`
/// so that small `z` does not cancel; for large `c x z` the plain form is
/// used since the three terms are then of very different size.
pub fn phi_c(c: f64, z: f64, x: f64) -> f64 {
    let cxz = c * x * z;
    if cxz.abs() > 20.0 {
        return 2.0 * (-c * x * x).exp() - (-c * (x + z).powi(2)).exp() - (-c * (x - z).powi(2)).exp();
    }
    let s = cxz.sinh();
    -2.0 * (-c * x * x).exp() * (2.0 * (-c * z * z).exp() * s * s + (-c * z * z).exp_m1())
}

fn erf_group(c1: f64, c2: f64, y: f64) -> f64 {
    erf(y / c1.sqrt()) + erf(y / c2.sqrt()) - erf(y / (c1 + c2).sqrt()) - 1.0
}

/// `2x E(x) - (x+z) E(x+z) - (x-z) E(x-z)` with
/// `E(y) = erf(y/sqrt(c1)) + erf(y/sqrt(c2)) - erf(y/sqrt(c1+c2)) - 1`.
pub fn phi_pair(c1: f64, c2: f64, z: f64, x: f64) -> f64 {
    let g = |y: f64| y * erf_group(c1, c2, y);
    2.0 * g(x) - g(x + z) - g(x - z)
}

/// Same combination with `y E(y)` replaced by its even continuation
/// `|y| E(|y|)`. The increment covariance depends on the distance `|x - y|`
/// only, and for `x < z` the literal form picks up the odd branch.
pub(crate) fn phi_pair_even(c1: f64, c2: f64, z: f64, x: f64) -> f64 {
    let g = |y: f64| y.abs() * erf_group(c1, c2, y.abs());
    2.0 * g(x) - g(x + z) - g(x - z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi_c_naive(c: f64, z: f64, x: f64) -> f64 {
        2.0 * (-c * x * x).exp() - (-c * (x + z).powi(2)).exp() - (-c * (x - z).powi(2)).exp()
    }

    #[test]
    fn phi_c_special_values() {
        for (c, x) in [(0.5, 0.3), (3.0, 2.0), (100.0, 0.01)] {
            assert_eq!(phi_c(c, 0.0, x), 0.0);
        }
        for (c, z) in [(0.5f64, 0.3f64), (2.0, 1e-4), (40.0, 1.0)] {
            let expected = -2.0 * (-c * z * z).exp_m1();
            assert!((phi_c(c, z, 0.0) - expected).abs() <= 1e-15 * expected.abs());
        }
    }

    #[test]
    fn phi_c_agrees_with_naive_form_where_safe() {
        for (c, z, x) in [(1.0, 0.5, 0.7), (0.2, 1.3, 2.0), (5.0, 0.1, 3.0), (50.0, 2.0, 1.0)] {
            let a = phi_c(c, z, x);
            let b = phi_c_naive(c, z, x);
            assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()), "{c} {z} {x}: {a} vs {b}");
        }
    }

    #[test]
    fn phi_c_taylor_bound() {
        // |phi_c(z, x)| <= C z^2 (c^2 (x+z)^2 + c) e^{-c (x-z)^2} for x >= z
        let mut worst: f64 = 0.0;
        for c in [0.1, 1.0, 10.0] {
            for k in 1..20 {
                let z = 1e-3 * k as f64;
                for m in 1..40 {
                    let x = z * m as f64;
                    let bound = z * z * (c * c * (x + z).powi(2) + c) * (-c * (x - z).powi(2)).exp();
                    worst = worst.max(phi_c(c, z, x).abs() / bound);
                }
            }
        }
        assert!(worst < 10.0, "ratio {worst}");
    }

    #[test]
    fn phi_pair_vanishes_at_zero_step() {
        assert_eq!(phi_pair(0.3, 0.7, 0.0, 0.4), 0.0);
        assert_eq!(phi_pair_even(0.3, 0.7, 0.0, 0.4), 0.0);
    }

    #[test]
    fn phi_pair_at_origin() {
        let (c1, c2, z): (f64, f64, f64) = (0.08, 0.2, 0.05);
        let expected = -2.0 * z * (erf(z / c1.sqrt()) + erf(z / c2.sqrt()) - erf(z / (c1 + c2).sqrt()));
        let at_zero = phi_pair(c1, c2, z, 0.0);
        assert!((at_zero - expected).abs() < 1e-15);
        let near = phi_pair(c1, c2, z, 1e-12);
        assert!((near - expected).abs() < 1e-11);
    }

    #[test]
    fn even_branch_matches_literal_when_x_ge_z() {
        for (z, x) in [(0.1, 0.1), (0.1, 0.35), (0.01, 2.0)] {
            assert_eq!(phi_pair(0.4, 0.9, z, x), phi_pair_even(0.4, 0.9, z, x));
        }
    }
}
