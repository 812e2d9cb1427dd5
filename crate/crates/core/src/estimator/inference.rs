//! Block bootstrap, joint placebo Wald test and assembly of the reported
//! event-study result.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::{EstimatorOptions, LagWeights, PointEstimates};
use crate::error::{Error, Result};

/// Normal critical value used for every reported confidence interval.
pub const Z_95: f64 = 1.96;
pub const MIN_REPLICATIONS: usize = 50;
/// Share of replications that must succeed for standard errors to be reported.
pub const MIN_SUCCESS_SHARE: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleLevel {
    #[default]
    Cluster,
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapOptions {
    pub replications: usize,
    #[serde(default)]
    pub level: ResampleLevel,
    pub seed: u64,
}

/// Statistic vectors from the successful replications, in replication order.
#[derive(Debug, Clone)]
pub struct BootstrapDraws {
    pub replications: usize,
    pub draws: Vec<Vec<Option<f64>>>,
    pub failures: usize,
    pub warnings: Vec<String>,
}

/// Resamples blocks of units with replacement and reruns `estimate` on each
/// draw. `blocks[u]` is the resampling block of unit `u`; `estimate`
/// receives the drawn unit indices (with repeats) in block order.
///
/// Replication `r` draws from a generator seeded with `seed` on stream `r`,
/// so results do not depend on how replications are scheduled.
pub fn bootstrap_inference<F>(blocks: &[usize], opts: &BootstrapOptions, estimate: F) -> Result<BootstrapDraws>
where
    F: Fn(&[usize]) -> Result<Vec<Option<f64>>> + Sync,
{
    if opts.replications < MIN_REPLICATIONS {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least {MIN_REPLICATIONS} replications, got {}",
            opts.replications
        )));
    }
    let mut ids: Vec<usize> = blocks.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let members: Vec<Vec<usize>> = ids
        .iter()
        .map(|&b| (0..blocks.len()).filter(|&u| blocks[u] == b).collect())
        .collect();
    let results: Vec<Result<Vec<Option<f64>>>> = (0..opts.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            let mut idx = Vec::with_capacity(blocks.len());
            for _ in 0..members.len() {
                idx.extend_from_slice(&members[rng.random_range(0..members.len())]);
            }
            estimate(&idx)
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_err()).count();
    let draws: Vec<Vec<Option<f64>>> = results.into_iter().filter_map(|r| r.ok()).collect();
    if (draws.len() as f64) < MIN_SUCCESS_SHARE * opts.replications as f64 {
        return Err(Error::Estimation(format!(
            "only {} of {} bootstrap replications succeeded",
            draws.len(),
            opts.replications
        )));
    }
    let mut warnings = Vec::new();
    if failures > 0 {
        warnings.push(format!("{failures} of {} bootstrap replications failed", opts.replications));
    }
    Ok(BootstrapDraws { replications: opts.replications, draws, failures, warnings })
}

impl BootstrapDraws {
    pub fn successes(&self) -> usize {
        self.draws.len()
    }

    fn values(&self, j: usize) -> Option<Vec<f64>> {
        let v: Vec<f64> = self.draws.iter().filter_map(|d| d.get(j).copied().flatten()).collect();
        (v.len() >= 2 && v.len() as f64 >= MIN_SUCCESS_SHARE * self.draws.len() as f64).then_some(v)
    }

    /// Standard deviation of statistic `j` across replications where it is
    /// defined; `None` if it is missing in too many of them.
    pub fn se(&self, j: usize) -> Option<f64> {
        let v = self.values(j)?;
        Some(sample_sd(&v))
    }

    /// Equal-tailed percentile interval with linear interpolation.
    pub fn percentile_interval(&self, j: usize) -> Option<(f64, f64)> {
        let mut v = self.values(j)?;
        v.sort_by(f64::total_cmp);
        Some((quantile_sorted(&v, 0.025), quantile_sorted(&v, 0.975)))
    }

    /// Sample covariance of the listed statistics over replications where
    /// all of them are defined.
    pub fn covariance(&self, stats: &[usize]) -> Option<Vec<Vec<f64>>> {
        let rows: Vec<Vec<f64>> = self
            .draws
            .iter()
            .filter_map(|d| stats.iter().map(|&j| d.get(j).copied().flatten()).collect::<Option<Vec<f64>>>())
            .collect();
        if rows.len() < 2 {
            return None;
        }
        let k = stats.len();
        let n = rows.len() as f64;
        let means: Vec<f64> = (0..k).map(|a| rows.iter().map(|r| r[a]).sum::<f64>() / n).collect();
        Some(
            (0..k)
                .map(|a| {
                    (0..k)
                        .map(|b| rows.iter().map(|r| (r[a] - means[a]) * (r[b] - means[b])).sum::<f64>() / (n - 1.0))
                        .collect()
                })
                .collect(),
        )
    }
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Wald test that all placebos are zero, `p'V⁺p ~ χ²(rank V)`, with a
/// pseudo-inverse when `V` is singular.
pub fn joint_placebo_test(placebos: &[f64], covariance: &[Vec<f64>]) -> Result<WaldTest> {
    let k = placebos.len();
    if k == 0 {
        return Err(Error::InvalidArgument("joint placebo test needs at least one lead".into()));
    }
    if covariance.len() != k || covariance.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument("covariance shape does not match the placebo vector".into()));
    }
    let v = DMatrix::from_fn(k, k, |i, j| 0.5 * (covariance[i][j] + covariance[j][i]));
    let eig = SymmetricEigen::new(v);
    let max_ev = eig.eigenvalues.iter().fold(0.0f64, |m, &e| m.max(e));
    let tol = max_ev * k as f64 * 1e-10;
    let p = DVector::from_column_slice(placebos);
    let mut statistic = 0.0;
    let mut df = 0;
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > tol && ev > 0.0 {
            let proj = eig.eigenvectors.column(i).dot(&p);
            statistic += proj * proj / ev;
            df += 1;
        }
    }
    if df == 0 {
        // degenerate covariance: only an all-zero placebo vector is consistent with it
        let p_value = if placebos.iter().all(|&x| x == 0.0) { 1.0 } else { 0.0 };
        return Ok(WaldTest { statistic: if p_value == 1.0 { 0.0 } else { f64::INFINITY }, df, p_value });
    }
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::Estimation(e.to_string()))?;
    let p_value = if statistic == 0.0 { 1.0 } else { chi.sf(statistic) };
    Ok(WaldTest { statistic, df, p_value })
}

/// Two-sided normal p-value for `estimate / se`.
pub fn normal_p_value(estimate: f64, se: f64) -> f64 {
    if se == 0.0 || !se.is_finite() {
        return if estimate == 0.0 { 1.0 } else { 0.0 };
    }
    let n = Normal::standard();
    2.0 * n.sf((estimate / se).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub horizon: usize,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub pct_lo: Option<f64>,
    pub pct_hi: Option<f64>,
    pub n: usize,
}

impl EstimateRow {
    fn new(horizon: usize, estimate: f64, n: usize, draws: &BootstrapDraws, stat: usize) -> Self {
        let se = draws.se(stat);
        let pct = draws.percentile_interval(stat);
        EstimateRow {
            horizon,
            estimate,
            se,
            ci_lo: se.map(|s| estimate - Z_95 * s),
            ci_hi: se.map(|s| estimate + Z_95 * s),
            pct_lo: pct.map(|p| p.0),
            pct_hi: pct.map(|p| p.1),
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AteSummary {
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub pct_lo: Option<f64>,
    pub pct_hi: Option<f64>,
    pub p_value: Option<f64>,
    pub n_cells: usize,
    pub n_switchers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapReport {
    pub replications: usize,
    pub successes: usize,
    pub failures: usize,
    pub level: ResampleLevel,
}

/// Reported estimates with bootstrap inference attached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventStudyResult {
    pub event_study: Vec<EstimateRow>,
    pub normalized: Vec<EstimateRow>,
    /// `Δ̄_ℓ` for each row of `normalized`.
    pub mean_delta: Vec<f64>,
    pub placebos: Vec<EstimateRow>,
    pub joint_placebo: Option<WaldTest>,
    pub lag_weights: LagWeights,
    pub ate: AteSummary,
    pub bootstrap: BootstrapReport,
    pub dropped_cells: usize,
    pub warnings: Vec<String>,
}

impl EventStudyResult {
    pub fn assemble(
        point: &PointEstimates,
        draws: &BootstrapDraws,
        opts: &EstimatorOptions,
        level: ResampleLevel,
    ) -> Result<Self> {
        let l = opts.max_horizon;
        let event_study = point
            .horizons
            .iter()
            .map(|h| EstimateRow::new(h.horizon, h.did, h.n, draws, h.horizon - 1))
            .collect();
        let normalized = point
            .horizons
            .iter()
            .map(|h| EstimateRow::new(h.horizon, h.normalized, h.n, draws, l + h.horizon - 1))
            .collect();
        let placebo_stats: Vec<usize> = point.placebos.iter().map(|p| 2 * l + p.lead - 1).collect();
        let placebos = point
            .placebos
            .iter()
            .zip(&placebo_stats)
            .map(|(p, &j)| EstimateRow::new(p.lead, p.estimate, p.n, draws, j))
            .collect();
        let mut warnings = point.warnings.clone();
        warnings.extend(draws.warnings.iter().cloned());
        let joint_placebo = if placebo_stats.is_empty() {
            None
        } else {
            match draws.covariance(&placebo_stats) {
                Some(cov) => {
                    let p: Vec<f64> = point.placebos.iter().map(|p| p.estimate).collect();
                    Some(joint_placebo_test(&p, &cov)?)
                }
                None => {
                    warnings.push("placebo covariance unavailable; joint test skipped".into());
                    None
                }
            }
        };
        let ate_stat = 2 * l + opts.placebos;
        let se = draws.se(ate_stat);
        let pct = draws.percentile_interval(ate_stat);
        let ate = AteSummary {
            estimate: point.ate,
            se,
            ci_lo: se.map(|s| point.ate - Z_95 * s),
            ci_hi: se.map(|s| point.ate + Z_95 * s),
            pct_lo: pct.map(|p| p.0),
            pct_hi: pct.map(|p| p.1),
            p_value: se.map(|s| normal_p_value(point.ate, s)),
            n_cells: point.cells.len(),
            n_switchers: point.n_switchers,
        };
        Ok(EventStudyResult {
            event_study,
            normalized,
            mean_delta: point.horizons.iter().map(|h| h.mean_delta).collect(),
            placebos,
            joint_placebo,
            lag_weights: point.lag_weights.clone(),
            ate,
            bootstrap: BootstrapReport {
                replications: draws.replications,
                successes: draws.successes(),
                failures: draws.failures,
                level,
            },
            dropped_cells: point.dropped.len(),
            warnings,
        })
    }
}
