//! Model parameters and space-time sampling grids.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// Drift `theta` and volatility `sigma` of
/// `du = theta * u_xx dt + sigma * dW(x)`, with zero initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    theta: f64,
    sigma: f64,
}

impl ModelParams {
    pub fn new(theta: f64, sigma: f64) -> Result<Self> {
        ensure_positive("theta", theta)?;
        if !sigma.is_finite() {
            return Err(Error::domain(format!("sigma must be finite, got {sigma}")));
        }
        Ok(Self { theta, sigma })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `sigma^2 / (theta^{3/2} sqrt(pi))`, the common prefactor of all
    /// derivative covariances. Always recomputed, never stored.
    pub fn tau(&self) -> f64 {
        self.sigma * self.sigma / (self.theta.powf(1.5) * std::f64::consts::PI.sqrt())
    }

    /// Asymptotic variance rate `sigma^2 / theta^2` of the derivative
    /// increments per unit length.
    pub fn qv_rate(&self) -> f64 {
        (self.sigma / self.theta).powi(2)
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.theta, sigma)
    }
}

/// Uniform spatial grid `x_i = A + i h` on `[A, B]`, a list of sampling
/// times, and the finite-difference stencil `(a, b, gamma)` that places
/// the offset points `y_i = x_i + a h_gamma`, `z_i = x_i - b h_gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingScheme {
    pub a_end: f64,
    pub b_end: f64,
    pub n_space: usize,
    pub times: Vec<f64>,
    pub gamma: f64,
    pub stencil_a: f64,
    pub stencil_b: f64,
}

impl SamplingScheme {
    pub fn new(
        a_end: f64,
        b_end: f64,
        n_space: usize,
        times: Vec<f64>,
        gamma: f64,
        stencil_a: f64,
        stencil_b: f64,
    ) -> Result<Self> {
        let scheme = Self {
            a_end,
            b_end,
            n_space,
            times,
            gamma,
            stencil_a,
            stencil_b,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    /// Grid without an explicit stencil: forward differences, `gamma = 1`.
    pub fn uniform(a_end: f64, b_end: f64, n_space: usize, times: Vec<f64>) -> Result<Self> {
        Self::new(a_end, b_end, n_space, times, 1.0, 1.0, 0.0)
    }

    pub fn with_stencil(mut self, a: f64, b: f64, gamma: f64) -> Result<Self> {
        self.stencil_a = a;
        self.stencil_b = b;
        self.gamma = gamma;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_end.is_finite() && self.b_end.is_finite() && self.a_end < self.b_end) {
            return Err(Error::domain(format!(
                "interval must satisfy A < B, got [{}, {}]",
                self.a_end, self.b_end
            )));
        }
        if self.n_space < 2 {
            return Err(Error::domain(format!("N must be >= 2, got {}", self.n_space)));
        }
        if self.times.is_empty() {
            return Err(Error::domain("at least one sampling time is required"));
        }
        for t in &self.times {
            ensure_positive("sampling time", *t)?;
        }
        if self.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("sampling times must be strictly increasing"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 1.0) {
            return Err(Error::domain(format!("gamma must be >= 1, got {}", self.gamma)));
        }
        let in_unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !in_unit(self.stencil_a) || !in_unit(self.stencil_b) {
            return Err(Error::domain(format!(
                "stencil weights must lie in [0, 1], got a = {}, b = {}",
                self.stencil_a, self.stencil_b
            )));
        }
        if self.stencil_a + self.stencil_b <= 0.0 {
            return Err(Error::domain("stencil weights must satisfy a + b > 0"));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.b_end - self.a_end
    }

    /// Number of sampling times `M`.
    pub fn n_time(&self) -> usize {
        self.times.len()
    }

    /// Spatial step `h = (B - A) / N`.
    pub fn h(&self) -> f64 {
        self.length() / self.n_space as f64
    }

    /// Offset step `h_gamma = (B - A) / N^gamma`.
    pub fn h_gamma(&self) -> f64 {
        self.length() / (self.n_space as f64).powf(self.gamma)
    }

    /// Full stencil width `(a + b) h_gamma`.
    pub fn stencil_width(&self) -> f64 {
        (self.stencil_a + self.stencil_b) * self.h_gamma()
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n_space {
            self.b_end
        } else {
            self.a_end + i as f64 * self.h()
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..=self.n_space).map(|i| self.x(i)).collect()
    }

    /// Right offset point `y_i = x_i + a h_gamma`.
    pub fn y(&self, i: usize) -> f64 {
        self.x(i) + self.stencil_a * self.h_gamma()
    }

    /// Left offset point `z_i = x_i - b h_gamma`.
    pub fn z(&self, i: usize) -> f64 {
        self.x(i) - self.stencil_b * self.h_gamma()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("validated scheme has times")
    }
}

/// `t_j = j T / M`, `j = 1..=M`.
pub fn uniform_times(final_time: f64, m: usize) -> Result<Vec<f64>> {
    ensure_positive("final time", final_time)?;
    if m == 0 {
        return Err(Error::domain("M must be >= 1"));
    }
    Ok((1..=m).map(|j| final_time * j as f64 / m as f64).collect())
}
