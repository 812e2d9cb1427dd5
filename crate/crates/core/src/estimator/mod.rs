//! Intertemporal DiD estimands for switchers-in.
//!
//! For a switcher-in `g` with first switch at position `f` and horizon `ℓ`,
//! the cell effect compares `g`'s outcome change from `f − 1` to `f − 1 + ℓ`
//! with the mean change of its not-yet-switched controls over the same
//! window. Cells are then aggregated into the event study `DID_ℓ`, its
//! exposure-normalized version, lag weights and the average total effect.

pub mod inference;
pub mod soo;
pub mod twfe;

use std::collections::HashMap;

use serde::Serialize;

use crate::clustering::ClusterAssignment;
use crate::cohorts::{profile_all, SwitchProfile};
use crate::error::{Error, Result};
use crate::exposure::TreatmentPath;
use crate::panel::{difference, Series};
use crate::residualize::{residualize_diffs, ControlVariant, ResidualizeOptions};

/// Source of outcome changes between two period positions.
#[derive(Debug, Clone)]
pub enum OutcomeChanges {
    /// Change is `Y[to] − Y[from]`; only the endpoints must be observed.
    Levels(Vec<Series>),
    /// Change is the sum of (residualized) first differences over
    /// `(from, to]`; every term must be observed.
    Diffs(Vec<Series>),
}

impl OutcomeChanges {
    pub fn change(&self, unit: usize, from: usize, to: usize) -> Option<f64> {
        match self {
            OutcomeChanges::Levels(y) => Some(y[unit][to]? - y[unit][from]?),
            OutcomeChanges::Diffs(d) => {
                let mut s = 0.0;
                for t in from + 1..=to {
                    s += d[unit][t]?;
                }
                Some(s)
            }
        }
    }
}

/// Estimated effect for one (unit, horizon) cell, or one placebo lead.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellEffect {
    pub unit: usize,
    pub horizon: usize,
    pub did: f64,
    pub n_controls: usize,
    /// Cumulative deviation `Σ_{k<ℓ} (D_{f+k} − D_1)`.
    pub delta_d: f64,
    /// Current deviation `D_{f−1+ℓ} − D_1`.
    pub increment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedCell {
    pub unit: usize,
    pub horizon: usize,
    pub placebo: bool,
    pub reason: String,
}

/// Cumulative deviation of a switcher-in's path from its baseline over the
/// first `ℓ` post-switch periods.
pub fn delta_increment(path: &[i64], profile: &SwitchProfile, horizon: usize) -> Result<i64> {
    let end = profile.horizon_end(horizon).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "horizon {horizon} outside the valid window of unit {}",
            profile.unit
        ))
    })?;
    let f = end + 1 - horizon;
    Ok(path[f..=end].iter().map(|&d| d - profile.baseline_bin).sum())
}

/// `DID_{g,ℓ}`: treated change minus the mean change of `controls`, all over
/// `(from, to)`. Controls with a missing change are left out; `None` if the
/// treated change is missing or no control remains.
pub fn did_gl(
    changes: &OutcomeChanges,
    treated: usize,
    controls: &[usize],
    from: usize,
    to: usize,
) -> std::result::Result<(f64, usize), &'static str> {
    let own = changes.change(treated, from, to).ok_or("missing treated outcome")?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for &c in controls {
        if let Some(v) = changes.change(c, from, to) {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err("no control with observed outcomes");
    }
    Ok((own - sum / n as f64, n))
}

/// Everything the point estimator needs for one outcome and one treatment.
#[derive(Debug, Clone)]
pub struct Sample {
    pub bins: Vec<Vec<i64>>,
    pub profiles: Vec<SwitchProfile>,
    pub clusters: ClusterAssignment,
    /// Outcome levels.
    pub outcome: Vec<Series>,
    /// First differences of each control, `controls[j][unit][t]`.
    pub control_diffs: Vec<Vec<Series>>,
}

impl Sample {
    pub fn new(
        paths: &TreatmentPath,
        clusters: ClusterAssignment,
        outcome: Vec<Series>,
        control_diffs: Vec<Vec<Series>>,
    ) -> Result<Self> {
        let n = paths.n_units();
        if clusters.labels.len() != n || outcome.len() != n || control_diffs.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument("sample inputs disagree on the number of units".into()));
        }
        Ok(Sample {
            profiles: profile_all(&paths.bins)?,
            bins: paths.bins.clone(),
            clusters,
            outcome,
            control_diffs,
        })
    }

    /// Convenience for control levels: differences them first.
    pub fn with_control_levels(
        paths: &TreatmentPath,
        clusters: ClusterAssignment,
        outcome: Vec<Series>,
        control_levels: &[Vec<Series>],
    ) -> Result<Self> {
        let diffs = control_levels
            .iter()
            .map(|c| c.iter().map(|s| difference(s)).collect())
            .collect();
        Sample::new(paths, clusters, outcome, diffs)
    }

    pub fn n_units(&self) -> usize {
        self.bins.len()
    }

    /// Sample made of the listed units (repeats allowed); copies become
    /// distinct units.
    pub fn resample(&self, idx: &[usize]) -> Sample {
        Sample {
            bins: idx.iter().map(|&i| self.bins[i].clone()).collect(),
            profiles: idx
                .iter()
                .enumerate()
                .map(|(new, &i)| SwitchProfile { unit: new, ..self.profiles[i].clone() })
                .collect(),
            clusters: self.clusters.select_units(idx),
            outcome: idx.iter().map(|&i| self.outcome[i].clone()).collect(),
            control_diffs: self
                .control_diffs
                .iter()
                .map(|c| idx.iter().map(|&i| c[i].clone()).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    /// Largest event-study horizon reported.
    pub max_horizon: usize,
    pub placebos: usize,
    /// Switchers-in with fewer valid post periods are not used as treated.
    pub min_post_periods: usize,
    pub controls: ResidualizeOptions,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            max_horizon: 7,
            placebos: 3,
            min_post_periods: 1,
            controls: ResidualizeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonEstimate {
    pub horizon: usize,
    pub did: f64,
    /// `Δ̄_ℓ`, mean absolute cumulative deviation over the cells at `ℓ`.
    pub mean_delta: f64,
    pub normalized: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceboEstimate {
    pub lead: usize,
    pub estimate: f64,
    pub n: usize,
}

/// `weights[ℓ−1][k]`: share of `Δ̄_ℓ` coming from the `k`-th lag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagWeights {
    pub horizons: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointEstimates {
    pub cells: Vec<CellEffect>,
    pub placebo_cells: Vec<CellEffect>,
    pub dropped: Vec<DroppedCell>,
    pub horizons: Vec<HorizonEstimate>,
    pub placebos: Vec<PlaceboEstimate>,
    pub lag_weights: LagWeights,
    pub ate: f64,
    /// Switchers-in with at least one estimated cell.
    pub n_switchers: usize,
    pub warnings: Vec<String>,
}

impl PointEstimates {
    /// Fixed-layout statistic vector: `DID_1..L`, `DID^n_1..L`,
    /// placebos `1..P`, then the average total effect.
    pub fn statistics(&self, opts: &EstimatorOptions) -> Vec<Option<f64>> {
        let mut out = Vec::with_capacity(2 * opts.max_horizon + opts.placebos + 1);
        let h = |l: usize| self.horizons.iter().find(|e| e.horizon == l);
        out.extend((1..=opts.max_horizon).map(|l| h(l).map(|e| e.did)));
        out.extend((1..=opts.max_horizon).map(|l| h(l).map(|e| e.normalized)));
        out.extend((1..=opts.placebos).map(|l| self.placebos.iter().find(|p| p.lead == l).map(|p| p.estimate)));
        out.push(Some(self.ate));
        out
    }
}

/// Computes every estimable `(g, ℓ)` cell and placebo lead.
pub fn compute_cells(
    sample: &Sample,
    changes: &OutcomeChanges,
    opts: &EstimatorOptions,
) -> (Vec<CellEffect>, Vec<CellEffect>, Vec<DroppedCell>) {
    let mut groups: HashMap<(i64, usize), Vec<usize>> = HashMap::new();
    for p in &sample.profiles {
        groups.entry((p.baseline_bin, sample.clusters.labels[p.unit])).or_default().push(p.unit);
    }
    // control-side (pool size, change sum, observed count) per (group, end, from, to)
    type PoolKey = (i64, usize, usize, usize, usize);
    let mut pool_sums: HashMap<PoolKey, (usize, f64, usize)> = HashMap::new();
    let mut pool_stats = |key: (i64, usize), end: usize, from: usize, to: usize| {
        *pool_sums.entry((key.0, key.1, end, from, to)).or_insert_with(|| {
            let (mut size, mut sum, mut n) = (0, 0.0, 0);
            for &c in &groups[&key] {
                if !sample.profiles[c].unchanged_through(end) {
                    continue;
                }
                size += 1;
                if let Some(v) = changes.change(c, from, to) {
                    sum += v;
                    n += 1;
                }
            }
            (size, sum, n)
        })
    };
    let mut cells = Vec::new();
    let mut placebo_cells = Vec::new();
    let mut dropped = Vec::new();
    for g in sample.profiles.iter().filter(|p| p.is_switcher_in()) {
        if g.max_horizon < opts.min_post_periods.max(1) {
            continue;
        }
        let f = g.first_switch.expect("switcher-in");
        let path = &sample.bins[g.unit];
        let key = (g.baseline_bin, sample.clusters.labels[g.unit]);
        let contrast = |stats: (usize, f64, usize), from: usize, to: usize| {
            let own = changes.change(g.unit, from, to).ok_or("missing treated outcome")?;
            match stats.2 {
                0 => Err("no control with observed outcomes"),
                n => Ok((own - stats.1 / n as f64, n)),
            }
        };
        let mut delta = 0i64;
        for l in 1..=g.max_horizon {
            let end = f - 1 + l;
            debug_assert!(!g.unchanged_through(end), "a switcher is never its own control");
            let inc = path[end] - g.baseline_bin;
            delta += inc;
            let stats = pool_stats(key, end, f - 1, end);
            if stats.0 == 0 {
                dropped.push(DroppedCell { unit: g.unit, horizon: l, placebo: false, reason: "no not-yet-switched control".into() });
                continue;
            }
            match contrast(stats, f - 1, end) {
                Ok((did, n)) => cells.push(CellEffect {
                    unit: g.unit,
                    horizon: l,
                    did,
                    n_controls: n,
                    delta_d: delta as f64,
                    increment: inc as f64,
                }),
                Err(reason) => dropped.push(DroppedCell { unit: g.unit, horizon: l, placebo: false, reason: reason.into() }),
            }
            if l <= opts.placebos {
                if l > f - 1 {
                    dropped.push(DroppedCell { unit: g.unit, horizon: l, placebo: true, reason: "insufficient pre-periods".into() });
                    continue;
                }
                // mirror window [f−1−ℓ, f−1]; positive pre-trend gives a positive placebo
                match contrast(pool_stats(key, end, f - 1 - l, f - 1), f - 1 - l, f - 1) {
                    Ok((did, n)) => placebo_cells.push(CellEffect {
                        unit: g.unit,
                        horizon: l,
                        did,
                        n_controls: n,
                        delta_d: delta as f64,
                        increment: inc as f64,
                    }),
                    Err(reason) => dropped.push(DroppedCell { unit: g.unit, horizon: l, placebo: true, reason: reason.into() }),
                }
            }
        }
    }
    (cells, placebo_cells, dropped)
}

/// `DID_ℓ` and its normalized version for `ℓ = 1..=max_horizon`. Horizons
/// without cells are omitted.
pub fn event_study(cells: &[CellEffect], max_horizon: usize) -> Vec<HorizonEstimate> {
    (1..=max_horizon)
        .filter_map(|l| {
            let at: Vec<&CellEffect> = cells.iter().filter(|c| c.horizon == l).collect();
            if at.is_empty() {
                return None;
            }
            let n = at.len() as f64;
            let did = at.iter().map(|c| c.did).sum::<f64>() / n;
            let mean_delta = at.iter().map(|c| c.delta_d.abs()).sum::<f64>() / n;
            assert!(mean_delta > 0.0, "switchers-in always have a positive cumulative deviation");
            Some(HorizonEstimate { horizon: l, did, mean_delta, normalized: did / mean_delta, n: at.len() })
        })
        .collect()
}

/// Lag weights `w_{ℓ,k} = mean_g |D_{g,f−1+ℓ−k} − D_{g,1}| / Δ̄_ℓ`.
pub fn lag_weights(sample: &Sample, cells: &[CellEffect], horizons: &[HorizonEstimate]) -> LagWeights {
    let mut out = LagWeights { horizons: Vec::new(), weights: Vec::new() };
    for h in horizons {
        let at: Vec<&CellEffect> = cells.iter().filter(|c| c.horizon == h.horizon).collect();
        let row = (0..h.horizon)
            .map(|k| {
                let s: f64 = at
                    .iter()
                    .map(|c| {
                        let p = &sample.profiles[c.unit];
                        let t = p.first_switch.expect("switcher-in") - 1 + h.horizon - k;
                        (sample.bins[c.unit][t] - p.baseline_bin).abs() as f64
                    })
                    .sum();
                s / at.len() as f64 / h.mean_delta
            })
            .collect();
        out.horizons.push(h.horizon);
        out.weights.push(row);
    }
    out
}

/// `δ̂ = Σ DID_{g,ℓ} / Σ (D_{g,f−1+ℓ} − D_{g,1})` over all estimated cells.
pub fn average_total_effect(cells: &[CellEffect]) -> Result<f64> {
    if cells.is_empty() {
        return Err(Error::Estimation("no switcher-in has an estimable horizon".into()));
    }
    let num: f64 = cells.iter().map(|c| c.did).sum();
    let den: f64 = cells.iter().map(|c| c.increment).sum();
    assert!(den > 0.0, "switchers-in within their window have positive increments");
    Ok(num / den)
}

pub fn placebo_leads(placebo_cells: &[CellEffect], leads: usize) -> Vec<PlaceboEstimate> {
    (1..=leads)
        .filter_map(|l| {
            let at: Vec<f64> = placebo_cells.iter().filter(|c| c.horizon == l).map(|c| c.did).collect();
            (!at.is_empty()).then(|| PlaceboEstimate {
                lead: l,
                estimate: at.iter().sum::<f64>() / at.len() as f64,
                n: at.len(),
            })
        })
        .collect()
}

/// Outcome changes for a sample: raw levels, or residualized differences
/// when controls are requested.
pub fn outcome_changes(sample: &Sample, opts: &EstimatorOptions) -> Result<(OutcomeChanges, Vec<String>)> {
    if opts.controls.variant == ControlVariant::None || sample.control_diffs.is_empty() {
        return Ok((OutcomeChanges::Levels(sample.outcome.clone()), Vec::new()));
    }
    let diffs: Vec<Series> = sample.outcome.iter().map(|s| difference(s)).collect();
    let r = residualize_diffs(&diffs, &sample.control_diffs, &sample.profiles, &sample.clusters, opts.controls)?;
    Ok((OutcomeChanges::Diffs(r.residuals), r.warnings))
}

/// Full point estimation for one sample.
pub fn estimate(sample: &Sample, opts: &EstimatorOptions) -> Result<PointEstimates> {
    let (changes, warnings) = outcome_changes(sample, opts)?;
    let (cells, placebo_cells, dropped) = compute_cells(sample, &changes, opts);
    let ate = average_total_effect(&cells)?;
    let horizons = event_study(&cells, opts.max_horizon);
    let lag_weights = lag_weights(sample, &cells, &horizons);
    let placebos = placebo_leads(&placebo_cells, opts.placebos);
    let mut units: Vec<usize> = cells.iter().map(|c| c.unit).collect();
    units.dedup();
    Ok(PointEstimates {
        n_switchers: units.len(),
        cells,
        placebo_cells,
        dropped,
        horizons,
        placebos,
        lag_weights,
        ate,
        warnings,
    })
}
