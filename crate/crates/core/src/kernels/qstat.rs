use serde::{Deserialize, Serialize};

use super::delta::delta_u_increment_cov;
use super::ux::ux_increment_cov;
use crate::error::Result;
use crate::model::{ModelParams, SamplingScheme};

/// Which increment field the centred quadratic variation is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementVariant {
    /// `u_x(t, x_i) - u_x(t, x_{i-1})`, `i = 1..=N`.
    Ux,
    /// Stencil-quotient increments, interior indices `i = 2..=N-1`.
    DeltaU,
}

impl IncrementVariant {
    /// Number of increments per time row entering the statistic.
    pub fn count(self, n_space: usize) -> usize {
        match self {
            IncrementVariant::Ux => n_space,
            IncrementVariant::DeltaU => n_space.saturating_sub(2),
        }
    }
}

/// Decomposition of `E Q^2` for `Q = M^{-1} sum_j sum_i (U_ji / E U_j - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QExpectations {
    /// Contribution of the `(j, i) = (l, k)` terms: `2 n / M` with `n` the
    /// number of increments per row.
    pub q_diag: f64,
    /// Every other pair. Includes the equal-position terms across different
    /// times, which do not vanish: the rough part of `u_x` is the same
    /// Brownian path at every time.
    pub q_nd: f64,
    /// The part of `q_nd` from distinct times and nonzero lags only.
    pub q_nd_cross_lag: f64,
}

/// Covariance table `cov(lag, t_k, t_l)` for `lag = 0..n`, all time pairs.
pub(crate) fn covariance_table(
    params: &ModelParams,
    scheme: &SamplingScheme,
    variant: IncrementVariant,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let times = &scheme.times;
    let n = variant.count(scheme.n_space);
    let m = times.len();
    let mut table = vec![vec![Vec::new(); m]; m];
    for k in 0..m {
        for l in k..m {
            let row = (0..n.max(1))
                .map(|lag| match variant {
                    IncrementVariant::Ux => ux_increment_cov(lag, times[k], times[l], params, scheme),
                    IncrementVariant::DeltaU => delta_u_increment_cov(lag, times[k], times[l], params, scheme),
                })
                .collect::<Result<Vec<_>>>()?;
            table[l][k] = row.clone();
            table[k][l] = row;
        }
    }
    Ok(table)
}

pub fn q_expectations(
    params: &ModelParams,
    scheme: &SamplingScheme,
    variant: IncrementVariant,
) -> Result<QExpectations> {
    scheme.validate()?;
    let n = variant.count(scheme.n_space);
    let m = scheme.n_time();
    let mf = m as f64;
    let table = covariance_table(params, scheme, variant)?;
    let mut q_nd = 0.0;
    let mut cross_lag = 0.0;
    for k in 0..m {
        for l in 0..m {
            let norm = table[k][k][0] * table[l][l][0];
            let lagged: f64 = (1..n)
                .map(|lag| (n - lag) as f64 * table[k][l][lag].powi(2))
                .sum::<f64>()
                / norm;
            q_nd += 2.0 * lagged;
            if k != l {
                q_nd += n as f64 * table[k][l][0].powi(2) / norm;
                cross_lag += 2.0 * lagged;
            }
        }
    }
    Ok(QExpectations {
        q_diag: 2.0 * n as f64 / mf,
        q_nd: 2.0 * q_nd / (mf * mf),
        q_nd_cross_lag: 2.0 * cross_lag / (mf * mf),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::uniform_times;

    #[test]
    fn diagonal_term_is_exact() {
        let p = ModelParams::new(0.1, 0.1).unwrap();
        let s = SamplingScheme::uniform(0.0, 1.0, 1000, uniform_times(1.0, 50).unwrap()).unwrap();
        let n = IncrementVariant::Ux.count(s.n_space) as f64;
        assert_eq!(2.0 * n / 50.0, 40.0);
        let s_small = SamplingScheme::uniform(0.0, 1.0, 10, uniform_times(1.0, 4).unwrap()).unwrap();
        let q = q_expectations(&p, &s_small, IncrementVariant::Ux).unwrap();
        assert_eq!(q.q_diag, 5.0);
    }

    #[test]
    fn single_time_off_diagonal_vanishes_relative_to_n() {
        let p = ModelParams::new(0.1, 0.1).unwrap();
        for (variant, gamma) in [(IncrementVariant::Ux, 1.0), (IncrementVariant::DeltaU, 1.5)] {
            let mut previous = f64::INFINITY;
            for n in [100usize, 1000, 10_000] {
                let s = SamplingScheme::uniform(0.0, 1.0, n, vec![0.2])
                    .unwrap()
                    .with_stencil(1.0, 0.0, gamma)
                    .unwrap();
                let q = q_expectations(&p, &s, variant).unwrap();
                let ratio = q.q_nd / n as f64;
                assert!(ratio < previous, "{variant:?} N = {n}: {ratio}");
                assert!(ratio * n as f64 <= 20.0, "{variant:?} N = {n}: {ratio}");
                assert!(((q.q_diag + q.q_nd) / n as f64 - 2.0).abs() < 0.05);
                previous = ratio;
            }
        }
    }

    #[test]
    fn forward_stencil_increments_overlap() {
        // With gamma = 1 and a forward quotient, consecutive increments are
        // second differences of u sharing a point: correlation 1/4 at lag 1,
        // so q_nd / N tends to 2 * 2 * (1/4)^2 = 1/4 instead of 0.
        let p = ModelParams::new(0.1, 0.1).unwrap();
        let s = SamplingScheme::uniform(0.0, 1.0, 4000, vec![0.2]).unwrap();
        let q = q_expectations(&p, &s, IncrementVariant::DeltaU).unwrap();
        assert!((q.q_nd / 4000.0 - 0.25).abs() < 5e-3, "{}", q.q_nd / 4000.0);
    }

    #[test]
    fn distinct_times_are_strongly_correlated() {
        let p = ModelParams::new(0.1, 0.1).unwrap();
        let s = SamplingScheme::uniform(0.0, 1.0, 256, vec![0.5, 1.0]).unwrap();
        let q = q_expectations(&p, &s, IncrementVariant::Ux).unwrap();
        // E Q^2 ~ 2N: every time row repeats the same rough increments
        let total = (q.q_diag + q.q_nd) / 256.0;
        assert!((total - 2.0).abs() < 0.05, "{total}");
        assert!(q.q_nd_cross_lag < 1e-2 * q.q_nd);
    }
}
