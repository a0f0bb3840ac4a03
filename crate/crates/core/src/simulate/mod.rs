//! Exact Gaussian sampling of the solution and its spatial increments.
//!
//! Two routes are provided. On the bounded domain `(0, pi)` the solution
//! is a sine series with one standard normal per mode, evaluated at any
//! set of points ([`simulate_spectral_bounded`] and friends). On the line
//! the increment fields are drawn from their exact joint covariance by a
//! dense Cholesky factorization ([`simulate_ux_increments`],
//! [`simulate_delta_u_increments`]), which is limited to moderate `M N`.

mod dense;
mod spectral;

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, SamplingScheme};

pub use dense::{
    factorize, simulate_delta_u_increments, simulate_ux_increments, CovarianceMatrix, IncrementSampler,
    DEFAULT_DENSE_CAP,
};
pub use spectral::{
    simulate_spectral_bounded, simulate_spectral_delta_u, simulate_spectral_grid, simulate_spectral_ux_increments,
};

/// Seed of one random stream: a master seed plus a stream index, so that
/// replication `r` of an experiment can use `(master, r)` independently of
/// scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub master: u64,
    pub stream: u64,
}

impl Seed {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

impl From<u64> for Seed {
    fn from(master: u64) -> Self {
        Self { master, stream: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// `u(t_j, x)` at the listed points.
    UValues,
    /// `u_x(t_j, x_i) - u_x(t_j, x_{i-1})`, `i = 1..=N`.
    UxIncrements,
    /// `Delta u(t_j, x_i) - Delta u(t_j, x_{i-1})`, `i = 2..=N-1`.
    DeltaUIncrements,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::UValues => "u_values",
            FieldKind::UxIncrements => "ux_increments",
            FieldKind::DeltaUIncrements => "delta_u_increments",
        }
    }

    /// Number of columns for a grid with `n_space` cells.
    pub fn columns(self, n_space: usize) -> usize {
        match self {
            FieldKind::UValues => n_space + 1,
            FieldKind::UxIncrements => n_space,
            FieldKind::DeltaUIncrements => n_space.saturating_sub(2),
        }
    }
}

/// One realization of a field on a space-time grid.
///
/// `values[j]` is the row at `times[j]`; `xs[i]` is the position attached
/// to column `i` (the sample point for values, the right end point `x_i`
/// of the cell for increments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub kind: FieldKind,
    pub params: ModelParams,
    pub scheme: Option<SamplingScheme>,
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub seed: Seed,
    pub n_modes: Option<usize>,
}

impl FieldSample {
    pub fn n_time(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.times.len() {
            return Err(Error::Size(format!("{} rows for {} times", self.values.len(), self.times.len())));
        }
        for row in &self.values {
            if row.len() != self.xs.len() {
                return Err(Error::Size(format!("row of length {} for {} columns", row.len(), self.xs.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite entry in field sample".into()));
            }
        }
        if let Some(scheme) = &self.scheme {
            let expected = self.kind.columns(scheme.n_space);
            if self.xs.len() != expected {
                return Err(Error::Size(format!(
                    "{} columns, expected {expected} for {} on N = {}",
                    self.xs.len(),
                    self.kind.as_str(),
                    scheme.n_space
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sample: Self = serde_json::from_str(text)?;
        sample.validate()?;
        Ok(sample)
    }

    /// Header line with the sample description, a line of column
    /// positions, then one line per time: `t, v_0, v_1, ...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let grid = match &self.scheme {
            Some(s) => format!(
                "{:.16e};{:.16e};{};{:.16e};{:.16e};{:.16e}",
                s.a_end, s.b_end, s.n_space, s.gamma, s.stencil_a, s.stencil_b
            ),
            None => String::new(),
        };
        let modes = self.n_modes.map(|k| k.to_string()).unwrap_or_default();
        out.push_str("kind,theta,sigma,seed,stream,n_modes,grid\n");
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{},{},{},{}",
            self.kind.as_str(),
            self.params.theta(),
            self.params.sigma(),
            self.seed.master,
            self.seed.stream,
            modes,
            grid
        );
        out.push('x');
        for x in &self.xs {
            let _ = write!(out, ",{x:.16e}");
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.values) {
            let _ = write!(out, "{t:.16e}");
            for v in row {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::Usage(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, contents)?;
    if let Err(e) = std::fs::rename(&tmp, path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}
