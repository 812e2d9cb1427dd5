//! Covariate residualization of outcome first differences.
//!
//! For each baseline bin (within each cluster unless pooled), an auxiliary
//! regression of `ΔY` on period indicators and `ΔX` (optionally `ΔX²`) is fit
//! on the not-yet-switched cells only. The fitted coefficients are then used
//! to residualize every cell of those units, switched or not, so post-switch
//! cells get out-of-sample residuals.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAssignment;
use crate::cohorts::SwitchProfile;
use crate::error::{Error, Result};
use crate::ols::{least_squares, LeastSquares};
use crate::panel::Series;

/// Extra rows required beyond the number of regressors before a bin gets
/// its own regression.
pub const MIN_EXTRA_ROWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ControlVariant {
    #[default]
    None,
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ResidualizeOptions {
    pub variant: ControlVariant,
    /// Fit one regression per baseline bin across all clusters instead of
    /// one per (cluster, bin).
    pub pool_clusters: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FitScope {
    Bin { cluster: Option<usize>, bin: i64 },
    Cluster(usize),
    Global,
}

#[derive(Debug, Clone)]
pub struct AuxRegression {
    pub scope: FitScope,
    /// Fitting cells as (unit, period position).
    pub cells: Vec<(usize, usize)>,
    pub column_names: Vec<String>,
    pub design: Vec<Vec<f64>>,
    pub fit: LeastSquares,
    response_norm: f64,
    /// Period position of each period-indicator column, in column order.
    periods: Vec<usize>,
    n_controls: usize,
}

impl AuxRegression {
    /// Largest `|⟨residuals, column⟩| / (‖column‖·‖response‖)` over all
    /// design columns.
    pub fn orthogonality(&self) -> f64 {
        let en = self.response_norm;
        if en == 0.0 {
            return 0.0;
        }
        self.design
            .iter()
            .map(|c| {
                let cn = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                let dot: f64 = c.iter().zip(&self.fit.residuals).map(|(a, b)| a * b).sum();
                if cn == 0.0 {
                    0.0
                } else {
                    dot.abs() / (cn * en)
                }
            })
            .fold(0.0, f64::max)
    }

    fn predict(&self, t: usize, x: &[f64], quadratic: bool) -> f64 {
        let mut yhat = 0.0;
        if let Some(pos) = self.periods.iter().position(|&p| p == t) {
            yhat += self.fit.coefficients[pos];
        }
        let base = self.periods.len();
        for (j, &v) in x.iter().enumerate() {
            yhat += self.fit.coefficients[base + j] * v;
            if quadratic {
                yhat += self.fit.coefficients[base + self.n_controls + j] * v * v;
            }
        }
        yhat
    }
}

#[derive(Debug, Clone)]
pub struct Residualized {
    /// Residualized first differences, same layout as the input diffs.
    pub residuals: Vec<Series>,
    pub regressions: Vec<AuxRegression>,
    pub warnings: Vec<String>,
}

fn fit_scope(
    scope: FitScope,
    cells: Vec<(usize, usize)>,
    diffs: &[Series],
    controls: &[Vec<Series>],
    quadratic: bool,
) -> Result<AuxRegression> {
    let mut periods: Vec<usize> = cells.iter().map(|&(_, t)| t).collect();
    periods.sort_unstable();
    periods.dedup();
    let n = cells.len();
    let mut design = Vec::new();
    let mut names = Vec::new();
    for &p in &periods {
        design.push(cells.iter().map(|&(_, t)| if t == p { 1.0 } else { 0.0 }).collect());
        names.push(format!("period[{p}]"));
    }
    for (j, x) in controls.iter().enumerate() {
        design.push(cells.iter().map(|&(u, t)| x[u][t].expect("filtered")).collect());
        names.push(format!("dx{j}"));
    }
    if quadratic {
        for (j, x) in controls.iter().enumerate() {
            design.push(cells.iter().map(|&(u, t)| x[u][t].expect("filtered").powi(2)).collect());
            names.push(format!("dx{j}^2"));
        }
    }
    let y: Vec<f64> = cells.iter().map(|&(u, t)| diffs[u][t].expect("filtered")).collect();
    if n == 0 {
        return Err(Error::Estimation(format!("no not-yet-switched cells to fit {scope:?}")));
    }
    let fit = least_squares(&design, &y)?;
    let dropped = fit.dropped();
    if !dropped.is_empty() {
        let d: Vec<&str> = dropped.iter().map(|&j| names[j].as_str()).collect();
        warn!("auxiliary regression {scope:?}: dropped collinear column(s) {d:?}");
    }
    Ok(AuxRegression {
        scope,
        cells,
        column_names: names,
        design,
        fit,
        response_norm: y.iter().map(|v| v * v).sum::<f64>().sqrt(),
        periods,
        n_controls: controls.len(),
    })
}

/// Residualizes first differences `diffs` on control first differences
/// `controls` (each `controls[j][unit][t]`).
pub fn residualize_diffs(
    diffs: &[Series],
    controls: &[Vec<Series>],
    profiles: &[SwitchProfile],
    clusters: &ClusterAssignment,
    options: ResidualizeOptions,
) -> Result<Residualized> {
    if controls.is_empty() {
        return Err(Error::Config("residualization needs at least one control".into()));
    }
    if options.variant == ControlVariant::None {
        return Err(Error::Config("control variant `none` requests no residualization".into()));
    }
    let quadratic = options.variant == ControlVariant::Quadratic;
    let n_units = diffs.len();
    let n_periods = diffs.first().map_or(0, Vec::len);
    let observed = |u: usize, t: usize| diffs[u][t].is_some() && controls.iter().all(|x| x[u][t].is_some());
    let n_regressors_max = |cells: &[(usize, usize)]| {
        let mut ps: Vec<usize> = cells.iter().map(|c| c.1).collect();
        ps.sort_unstable();
        ps.dedup();
        ps.len() + controls.len() * if quadratic { 2 } else { 1 }
    };

    let bin_scope = |u: usize| FitScope::Bin {
        cluster: (!options.pool_clusters).then(|| clusters.labels[u]),
        bin: profiles[u].baseline_bin,
    };
    let mut by_scope: BTreeMap<FitScope, Vec<(usize, usize)>> = BTreeMap::new();
    for u in 0..n_units {
        let entry = by_scope.entry(bin_scope(u)).or_default();
        for t in 1..n_periods {
            if profiles[u].unchanged_through(t) && observed(u, t) {
                entry.push((u, t));
            }
        }
    }

    let mut warnings = Vec::new();
    let mut regressions: Vec<AuxRegression> = Vec::new();
    let mut chosen: BTreeMap<FitScope, usize> = BTreeMap::new();
    let mut fallback_cache: BTreeMap<FitScope, usize> = BTreeMap::new();

    let pooled_cells = |scope: FitScope| -> Vec<(usize, usize)> {
        by_scope
            .iter()
            .filter(|(s, _)| match (scope, s) {
                (FitScope::Cluster(c), FitScope::Bin { cluster: Some(k), .. }) => c == *k,
                (FitScope::Global, _) => true,
                _ => false,
            })
            .flat_map(|(_, c)| c.iter().copied())
            .collect()
    };

    for (&scope, cells) in &by_scope {
        if cells.len() >= n_regressors_max(cells) + MIN_EXTRA_ROWS {
            regressions.push(fit_scope(scope, cells.clone(), diffs, controls, quadratic)?);
            chosen.insert(scope, regressions.len() - 1);
            continue;
        }
        let mut candidates = Vec::new();
        if let FitScope::Bin { cluster: Some(c), .. } = scope {
            candidates.push(FitScope::Cluster(c));
        }
        candidates.push(FitScope::Global);
        let mut picked = None;
        for (i, cand) in candidates.iter().enumerate() {
            if let Some(&idx) = fallback_cache.get(cand) {
                picked = Some(idx);
                break;
            }
            let pc = pooled_cells(*cand);
            let last = i + 1 == candidates.len();
            if pc.len() >= n_regressors_max(&pc) + MIN_EXTRA_ROWS || (last && !pc.is_empty()) {
                regressions.push(fit_scope(*cand, pc, diffs, controls, quadratic)?);
                fallback_cache.insert(*cand, regressions.len() - 1);
                picked = Some(regressions.len() - 1);
                break;
            }
        }
        let idx = picked.ok_or_else(|| {
            Error::Estimation("no not-yet-switched cells available for residualization".into())
        })?;
        let msg = format!(
            "{scope:?} has {} fitting cell(s); residualized with the pooled {:?} regression",
            cells.len(),
            regressions[idx].scope
        );
        warn!("{msg}");
        warnings.push(msg);
        chosen.insert(scope, idx);
    }

    let residuals = (0..n_units)
        .map(|u| {
            let reg = &regressions[chosen[&bin_scope(u)]];
            (0..n_periods)
                .map(|t| {
                    if t == 0 || !observed(u, t) {
                        return None;
                    }
                    let x: Vec<f64> = controls.iter().map(|c| c[u][t].expect("observed")).collect();
                    Some(diffs[u][t].expect("observed") - reg.predict(t, &x, quadratic))
                })
                .collect()
        })
        .collect();
    Ok(Residualized { residuals, regressions, warnings })
}
