//! Replicated experiments: consistency sweeps over `N` and normality
//! diagnostics of the normalized estimators.
//!
//! Replication `r` always draws from the stream `(master_seed, r)`, so the
//! results do not depend on the number of worker threads, and the same
//! realization is reused across the `N` values of a sweep.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_from_delta_u, estimate_from_u_seconddiff, estimate_from_ux, normalized_stat,
    normalized_stat_sigma_level, q_statistic, EstimateReport, EstimatorId, Known,
};
use crate::kernels::IncrementVariant;
use crate::model::{uniform_times, ModelParams, SamplingScheme};
use crate::simulate::{
    simulate_spectral_delta_u, simulate_spectral_grid, simulate_spectral_ux_increments, write_atomic, FieldSample,
    IncrementSampler, Seed, DEFAULT_DENSE_CAP,
};

pub const HISTOGRAM_BINS: usize = 30;
pub const HISTOGRAM_RANGE: (f64, f64) = (-4.0, 4.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulatorKind {
    /// Sine series on `(0, pi)`.
    SpectralBounded,
    /// Dense covariance factorization of the increment field on the line.
    CovLine,
}

/// What [`run_normality`] records per replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    /// `sqrt(N M) (est^2 - true^2) / (sqrt(2) true^2)`.
    Squared,
    /// `sqrt(2 N M) (est - true) / true`.
    ParameterLevel,
    /// The renormalized centred quadratic variation.
    Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub theta: f64,
    pub sigma: f64,
    pub a_end: f64,
    pub b_end: f64,
    /// Grid sizes; a sweep for [`run_consistency`], the first entry for
    /// [`run_normality`].
    pub n_values: Vec<usize>,
    pub times: Vec<f64>,
    pub stencil_a: f64,
    pub stencil_b: f64,
    pub gamma: f64,
    pub estimator: EstimatorId,
    pub correct_bias: bool,
    pub statistic: StatisticKind,
    pub replications: usize,
    pub master_seed: u64,
    pub n_modes: usize,
    pub simulator: SimulatorKind,
    pub dense_cap: usize,
    /// Worker threads, 0 for the rayon default.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            theta: 0.1,
            sigma: 0.1,
            a_end: 0.0,
            b_end: std::f64::consts::PI,
            n_values: vec![256],
            times: vec![0.2],
            stencil_a: 1.0,
            stencil_b: 0.0,
            gamma: 1.0,
            estimator: EstimatorId::Sigma2Check,
            correct_bias: true,
            statistic: StatisticKind::ParameterLevel,
            replications: 100,
            master_seed: 0,
            n_modes: 10_000,
            simulator: SimulatorKind::SpectralBounded,
            dense_cap: DEFAULT_DENSE_CAP,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    /// Consistency sweep on `(0, pi)`: `theta = sigma = 0.1`, 50 uniform
    /// times up to `T = 1`, `10^4` modes, forward second differences,
    /// 20 replications.
    pub fn paper_fig1() -> Self {
        Self {
            n_values: vec![64, 128, 256, 512, 1024],
            times: uniform_times(1.0, 50).expect("valid grid"),
            replications: 20,
            ..Self::default()
        }
    }

    /// Normality run: 1000 paths at `t = 0.2`, `N = 1000`, parameter-level
    /// statistic of the corrected second-difference estimator.
    pub fn paper_fig2() -> Self {
        Self { n_values: vec![1000], times: vec![0.2], replications: 1000, ..Self::default() }
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.theta, self.sigma)
    }

    pub fn scheme(&self, n: usize) -> Result<SamplingScheme> {
        SamplingScheme::new(self.a_end, self.b_end, n, self.times.clone(), self.gamma, self.stencil_a, self.stencil_b)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if self.replications == 0 {
            return Err(Error::domain("replications must be >= 1"));
        }
        if self.n_values.is_empty() {
            return Err(Error::domain("at least one N is required"));
        }
        for &n in &self.n_values {
            if n < 3 {
                return Err(Error::domain(format!("N must be >= 3, got {n}")));
            }
            self.scheme(n)?;
        }
        if self.n_modes == 0 {
            return Err(Error::domain("n_modes must be >= 1"));
        }
        if self.simulator == SimulatorKind::CovLine
            && matches!(self.estimator, EstimatorId::Theta2Check | EstimatorId::Sigma2Check)
        {
            return Err(Error::domain("second-difference estimators need values of u; use the spectral simulator"));
        }
        if self.statistic == StatisticKind::Q
            && matches!(self.estimator, EstimatorId::Theta2Check | EstimatorId::Sigma2Check)
        {
            return Err(Error::domain("the Q statistic is defined for u_x or stencil increments"));
        }
        Ok(())
    }

    /// The true value of the estimated parameter.
    pub fn target(&self) -> f64 {
        if self.estimator.is_theta() {
            self.theta
        } else {
            self.sigma
        }
    }

    fn known(&self) -> Known {
        if self.estimator.is_theta() {
            Known::Sigma(self.sigma)
        } else {
            Known::Theta(self.theta)
        }
    }

    fn variant(&self) -> Option<IncrementVariant> {
        match self.estimator {
            EstimatorId::Theta2Ux | EstimatorId::Sigma2Ux => Some(IncrementVariant::Ux),
            EstimatorId::Theta2Tilde | EstimatorId::Sigma2Tilde => Some(IncrementVariant::DeltaU),
            _ => None,
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))
    }
}

/// Simulator plus estimator for one grid size, prepared once and shared by
/// all replications.
struct Pipeline<'a> {
    config: &'a ExperimentConfig,
    params: ModelParams,
    scheme: SamplingScheme,
    sampler: Option<IncrementSampler>,
}

impl<'a> Pipeline<'a> {
    fn new(config: &'a ExperimentConfig, n: usize) -> Result<Self> {
        let params = config.params()?;
        let scheme = config.scheme(n)?;
        let sampler = match (config.simulator, config.variant()) {
            (SimulatorKind::CovLine, Some(v)) => Some(IncrementSampler::new(&params, &scheme, v, config.dense_cap)?),
            _ => None,
        };
        Ok(Self { config, params, scheme, sampler })
    }

    fn field(&self, seed: Seed) -> Result<FieldSample> {
        if let Some(s) = &self.sampler {
            return s.sample(seed);
        }
        let k = self.config.n_modes;
        match self.config.estimator {
            EstimatorId::Theta2Ux | EstimatorId::Sigma2Ux => {
                simulate_spectral_ux_increments(&self.params, &self.scheme, k, seed)
            }
            EstimatorId::Theta2Check | EstimatorId::Sigma2Check => {
                simulate_spectral_grid(&self.params, &self.scheme, k, seed)
            }
            EstimatorId::Theta2Tilde | EstimatorId::Sigma2Tilde => {
                simulate_spectral_delta_u(&self.params, &self.scheme, k, seed)
            }
        }
    }

    fn estimate(&self, field: &FieldSample) -> Result<EstimateReport> {
        let known = self.config.known();
        let bias = self.config.correct_bias;
        match self.config.estimator {
            EstimatorId::Theta2Ux | EstimatorId::Sigma2Ux => estimate_from_ux(field, known),
            EstimatorId::Theta2Check | EstimatorId::Sigma2Check => estimate_from_u_seconddiff(field, known, bias),
            EstimatorId::Theta2Tilde | EstimatorId::Sigma2Tilde => estimate_from_delta_u(field, known, bias),
        }
    }

    fn report(&self, r: usize) -> Result<(FieldSample, EstimateReport)> {
        let field = self.field(Seed::new(self.config.master_seed, r as u64))?;
        let report = self.estimate(&field)?;
        Ok((field, report))
    }

    /// Parameter-level estimate and the configured statistic.
    fn replicate(&self, r: usize) -> Result<(f64, f64)> {
        let (field, report) = self.report(r)?;
        let truth = self.config.target();
        let stat = match self.config.statistic {
            StatisticKind::Squared => normalized_stat(&report, truth)?,
            StatisticKind::ParameterLevel => normalized_stat_sigma_level(&report, truth)?,
            StatisticKind::Q => q_statistic(&field, &self.params)?,
        };
        Ok((report.parameter(), stat))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    /// Mean of the bias-corrected parameter estimates (not squared).
    pub mean: f64,
    pub stderr: f64,
    pub successes: usize,
    pub failures: usize,
    pub estimates: Vec<f64>,
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTable {
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,mean,stderr,failures\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.16e},{:.16e},{}", r.n, r.mean, r.stderr, r.failures);
        }
        out
    }
}

/// Sample mean and `sd / sqrt(n)`.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn split_outcomes(outcomes: Vec<Result<(f64, f64)>>) -> (Vec<f64>, Vec<f64>, usize, Option<String>) {
    let mut estimates = Vec::with_capacity(outcomes.len());
    let mut stats = Vec::with_capacity(outcomes.len());
    let mut failures = 0;
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok((e, s)) => {
                estimates.push(e);
                stats.push(s);
            }
            Err(err) => {
                failures += 1;
                first_error.get_or_insert_with(|| err.to_string());
            }
        }
    }
    (estimates, stats, failures, first_error)
}

/// Mean and standard error of the bias-corrected estimate for every `N` of
/// the sweep. Failed replications are counted and left out.
pub fn run_consistency(config: &ExperimentConfig) -> Result<ConsistencyTable> {
    config.validate()?;
    let pool = config.pool()?;
    let mut rows = Vec::with_capacity(config.n_values.len());
    for &n in &config.n_values {
        let outcomes = match Pipeline::new(config, n) {
            Ok(pipe) => pool.install(|| {
                (0..config.replications)
                    .into_par_iter()
                    .map(|r| pipe.report(r).map(|(_, rep)| (rep.parameter(), 0.0)))
                    .collect()
            }),
            Err(e) => {
                let msg = e.to_string();
                (0..config.replications).map(|_| Err(Error::Numerical(msg.clone()))).collect()
            }
        };
        let (estimates, _, failures, first_error) = split_outcomes(outcomes);
        let (mean, stderr) = mean_stderr(&estimates);
        rows.push(ConsistencyRow {
            n,
            mean,
            stderr,
            successes: estimates.len(),
            failures,
            estimates,
            first_error,
        });
    }
    if rows.iter().all(|r| r.successes == 0) {
        let msg = rows[0].first_error.clone().unwrap_or_default();
        return Err(Error::Numerical(format!("every replication failed: {msg}")));
    }
    Ok(ConsistencyTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins on `[lo, hi]`; values outside are counted in the
    /// first or last bin so that the counts add up to the sample size.
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0; bins];
        for v in values {
            let k = ((v - lo) / width).floor();
            let k = if k.is_nan() { 0 } else { k.clamp(0.0, (bins - 1) as f64) as usize };
            counts[k] += 1;
        }
        Self { edges, counts }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lower,upper,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e},{}", self.edges[i], self.edges[i + 1], c);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub estimates: Vec<f64>,
    pub normalized_stats: Vec<f64>,
    pub ks_stat: f64,
    pub histogram: Histogram,
    /// `(standard normal quantile, sample quantile)` at `1%, ..., 99%`.
    pub qq_pairs: Vec<(f64, f64)>,
    /// Mean and standard error of `estimates`.
    pub mean: f64,
    pub stderr: f64,
    pub stat_mean: f64,
    pub stat_sd: f64,
    pub failures: usize,
    pub first_error: Option<String>,
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: rational approximation (relative error about
/// `1e-9`) refined by one Halley step to full double precision.
pub fn normal_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let p_low = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < p_low {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `sample` and the standard normal.
pub fn ks_statistic(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::domain("KS statistic of an empty sample"));
    }
    if sample.iter().any(|v| v.is_nan()) {
        return Err(Error::domain("KS statistic of a sample containing NaN"));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted.iter().enumerate().fold(0.0, |d: f64, (i, x)| {
        let f = normal_cdf(*x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    }))
}

/// Linear-interpolation sample quantile (the usual "type 7" definition)
/// of an already sorted sample.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn qq_pairs(sample: &[f64]) -> Vec<(f64, f64)> {
    if sample.is_empty() {
        return Vec::new();
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    (1..=99)
        .map(|k| {
            let p = k as f64 / 100.0;
            (normal_quantile(p), sorted_quantile(&sorted, p))
        })
        .collect()
}

/// Builds the diagnostics from per-replication estimates and statistics.
pub fn summarize(estimates: Vec<f64>, stats: Vec<f64>, failures: usize, first_error: Option<String>) -> Result<McSummary> {
    let ks_stat = ks_statistic(&stats)?;
    let (lo, hi) = HISTOGRAM_RANGE;
    let histogram = Histogram::new(&stats, HISTOGRAM_BINS, lo, hi);
    let qq = qq_pairs(&stats);
    let (mean, stderr) = mean_stderr(&estimates);
    let (stat_mean, stat_se) = mean_stderr(&stats);
    Ok(McSummary {
        ks_stat,
        histogram,
        qq_pairs: qq,
        mean,
        stderr,
        stat_mean,
        stat_sd: stat_se * (stats.len() as f64).sqrt(),
        failures,
        first_error,
        estimates,
        normalized_stats: stats,
    })
}

/// Normality diagnostics of the configured statistic at `N = n_values[0]`.
pub fn run_normality(config: &ExperimentConfig) -> Result<McSummary> {
    config.validate()?;
    let pipe = Pipeline::new(config, config.n_values[0])?;
    run_normality_with(config, |r| pipe.replicate(r))
}

/// [`run_normality`] with the simulation replaced by `draw(r)`, which
/// returns the estimate and the statistic of replication `r`.
pub fn run_normality_with<F>(config: &ExperimentConfig, draw: F) -> Result<McSummary>
where
    F: Fn(usize) -> Result<(f64, f64)> + Sync,
{
    if config.replications == 0 {
        return Err(Error::domain("replications must be >= 1"));
    }
    let pool = config.pool()?;
    let outcomes: Vec<_> = pool.install(|| (0..config.replications).into_par_iter().map(&draw).collect());
    let (estimates, stats, failures, first_error) = split_outcomes(outcomes);
    if stats.is_empty() {
        return Err(Error::Numerical(format!(
            "every replication failed: {}",
            first_error.unwrap_or_default()
        )));
    }
    summarize(estimates, stats, failures, first_error)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    result: &'a T,
}

/// Writes `consistency.csv` and `summary.json`.
pub fn write_consistency(dir: &Path, config: &ExperimentConfig, table: &ConsistencyTable) -> Result<()> {
    write_atomic(&dir.join("consistency.csv"), table.to_csv().as_bytes())?;
    let json = serde_json::to_string_pretty(&Envelope { config, result: table })?;
    write_atomic(&dir.join("summary.json"), json.as_bytes())
}

/// Writes `normality.csv`, `histogram.csv`, `qq.csv` and `summary.json`.
pub fn write_normality(dir: &Path, config: &ExperimentConfig, summary: &McSummary) -> Result<()> {
    let mut stats = String::from("replication,estimate,statistic\n");
    for (i, (e, s)) in summary.estimates.iter().zip(&summary.normalized_stats).enumerate() {
        let _ = writeln!(stats, "{i},{e:.16e},{s:.16e}");
    }
    write_atomic(&dir.join("normality.csv"), stats.as_bytes())?;
    write_atomic(&dir.join("histogram.csv"), summary.histogram.to_csv().as_bytes())?;
    let mut qq = String::from("theoretical,sample\n");
    for (t, s) in &summary.qq_pairs {
        let _ = writeln!(qq, "{t:.16e},{s:.16e}");
    }
    write_atomic(&dir.join("qq.csv"), qq.as_bytes())?;
    let json = serde_json::to_string_pretty(&Envelope { config, result: summary })?;
    write_atomic(&dir.join("summary.json"), json.as_bytes())
}
