use rand::Rng;
use rand_distr::StandardNormal;

use super::{FieldKind, FieldSample, Seed};
use crate::error::{Error, Result};
use crate::kernels::{covariance_table, IncrementVariant};
use crate::model::{ModelParams, SamplingScheme};

/// Default bound on `M * N` for the dense route.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Relative jitter levels tried in turn, as multiples of `trace / dim`.
const JITTER_LEVELS: [f64; 4] = [0.0, 1e-14, 1e-12, 1e-10];

#[inline]
fn packed(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

/// Symmetric matrix stored as its packed lower triangle, with an optional
/// Cholesky factor in the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    dim: usize,
    entries: Vec<f64>,
    factor: Option<Vec<f64>>,
    jitter_used: f64,
}

impl CovarianceMatrix {
    /// Builds the matrix from `f(i, j)` evaluated for `j <= i`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..=i {
                entries.push(f(i, j));
            }
        }
        Self { dim, entries, factor: None, jitter_used: 0.0 }
    }

    /// From a dense row-major square matrix; fails unless it is symmetric
    /// to `1e-12` relative.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Size(format!("row {i} has length {}, expected {dim}", row.len())));
            }
            for j in 0..i {
                let (a, b) = (row[j], rows[j][i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
                    return Err(Error::domain(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self::from_fn(dim, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.entries[packed(i, j)]
        } else {
            self.entries[packed(j, i)]
        }
    }

    /// Entry `(i, j)` of the lower factor, zero above the diagonal.
    pub fn factor_entry(&self, i: usize, j: usize) -> Option<f64> {
        let f = self.factor.as_ref()?;
        Some(if j <= i { f[packed(i, j)] } else { 0.0 })
    }

    pub fn is_factorized(&self) -> bool {
        self.factor.is_some()
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.entries[packed(i, i)]).sum()
    }

    /// `L z` for the stored factor.
    pub fn factor_mul(&self, z: &[f64]) -> Result<Vec<f64>> {
        let f = self.factor.as_ref().ok_or_else(|| Error::Numerical("matrix has not been factorized".into()))?;
        if z.len() != self.dim {
            return Err(Error::Size(format!("vector of length {} for dimension {}", z.len(), self.dim)));
        }
        Ok((0..self.dim).map(|i| dot(&f[packed(i, 0)..=packed(i, i)], &z[..=i])).collect())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Row-oriented Cholesky of `entries + jitter I`; returns the failing
/// leading minor on breakdown.
fn cholesky_packed(dim: usize, entries: &[f64], jitter: f64) -> std::result::Result<Vec<f64>, usize> {
    let mut l = vec![0.0; entries.len()];
    for i in 0..dim {
        let row_i = packed(i, 0);
        for j in 0..i {
            let row_j = packed(j, 0);
            let s = entries[row_i + j] - dot(&l[row_i..row_i + j], &l[row_j..row_j + j]);
            l[row_i + j] = s / l[row_j + j];
        }
        let d = entries[row_i + i] + jitter - dot(&l[row_i..row_i + i], &l[row_i..row_i + i]);
        if !(d > 0.0 && d.is_finite()) {
            return Err(i + 1);
        }
        l[row_i + i] = d.sqrt();
    }
    Ok(l)
}

/// Cholesky factorization with escalating diagonal jitter
/// `eps * trace / dim`, `eps` in `{0, 1e-14, 1e-12, 1e-10}`.
pub fn factorize(mut cov: CovarianceMatrix) -> Result<CovarianceMatrix> {
    if cov.dim == 0 {
        return Err(Error::Size("empty covariance matrix".into()));
    }
    let scale = cov.trace() / cov.dim as f64;
    let mut last = (0, 0.0);
    for eps in JITTER_LEVELS {
        let jitter = eps * scale;
        match cholesky_packed(cov.dim, &cov.entries, jitter) {
            Ok(l) => {
                cov.factor = Some(l);
                cov.jitter_used = jitter;
                return Ok(cov);
            }
            Err(minor) => last = (minor, jitter),
        }
    }
    Err(Error::Factorization { minor: last.0, jitter: last.1 })
}

/// Factorized joint law of one increment field; draws as many samples as
/// needed from a single factorization.
///
/// The covariance is assembled for `sigma = 1` and samples are scaled by
/// `sigma`, so `sigma = 0` yields zero fields instead of a singular
/// matrix.
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    params: ModelParams,
    scheme: SamplingScheme,
    variant: IncrementVariant,
    cov: CovarianceMatrix,
}

impl IncrementSampler {
    pub fn new(params: &ModelParams, scheme: &SamplingScheme, variant: IncrementVariant, cap: usize) -> Result<Self> {
        scheme.validate()?;
        let m = scheme.n_time();
        let size = m * scheme.n_space;
        if size > cap {
            return Err(Error::Size(format!(
                "M * N = {m} * {} = {size} exceeds the dense factorization cap {cap}; \
                 use the spectral sampler on (0, pi) for large grids",
                scheme.n_space
            )));
        }
        let n = variant.count(scheme.n_space);
        if n == 0 {
            return Err(Error::domain("no increments on this grid"));
        }
        let unit = params.with_sigma(1.0)?;
        let table = covariance_table(&unit, scheme, variant)?;
        let cov = CovarianceMatrix::from_fn(m * n, |p, q| {
            let (k, i) = (p / n, p % n);
            let (l, j) = (q / n, q % n);
            table[k][l][i.abs_diff(j)]
        });
        let cov = factorize(cov)?;
        Ok(Self { params: *params, scheme: scheme.clone(), variant, cov })
    }

    pub fn covariance(&self) -> &CovarianceMatrix {
        &self.cov
    }

    pub fn variant(&self) -> IncrementVariant {
        self.variant
    }

    pub fn sample(&self, seed: impl Into<Seed>) -> Result<FieldSample> {
        self.sample_with_sigma(self.params.sigma(), seed)
    }

    /// Same draw as [`Self::sample`] with the volatility replaced.
    pub fn sample_with_sigma(&self, sigma: f64, seed: impl Into<Seed>) -> Result<FieldSample> {
        let seed = seed.into();
        let mut rng = seed.rng();
        let z: Vec<f64> = (0..self.cov.dim).map(|_| rng.sample(StandardNormal)).collect();
        let x = self.cov.factor_mul(&z)?;
        let n = self.variant.count(self.scheme.n_space);
        let values = x.chunks_exact(n).map(|row| row.iter().map(|v| sigma * v).collect()).collect();
        let (kind, first) = match self.variant {
            IncrementVariant::Ux => (FieldKind::UxIncrements, 1),
            IncrementVariant::DeltaU => (FieldKind::DeltaUIncrements, 2),
        };
        Ok(FieldSample {
            kind,
            params: self.params.with_sigma(sigma)?,
            scheme: Some(self.scheme.clone()),
            times: self.scheme.times.clone(),
            xs: (first..first + n).map(|i| self.scheme.x(i)).collect(),
            values,
            seed,
            n_modes: None,
        })
    }
}

/// Increments `u_x(t_k, x_i) - u_x(t_k, x_{i-1})`, `i = 1..=N`, on the line,
/// drawn from their exact joint covariance.
pub fn simulate_ux_increments(
    params: &ModelParams,
    scheme: &SamplingScheme,
    seed: impl Into<Seed>,
) -> Result<FieldSample> {
    IncrementSampler::new(params, scheme, IncrementVariant::Ux, DEFAULT_DENSE_CAP)?.sample(seed)
}

/// Stencil-quotient increments `i = 2..=N-1` on the line, drawn from their
/// exact joint covariance.
pub fn simulate_delta_u_increments(
    params: &ModelParams,
    scheme: &SamplingScheme,
    seed: impl Into<Seed>,
) -> Result<FieldSample> {
    IncrementSampler::new(params, scheme, IncrementVariant::DeltaU, DEFAULT_DENSE_CAP)?.sample(seed)
}
