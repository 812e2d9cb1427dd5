//! Selection-on-observables check at the moment of first upward switch.
//!
//! For every switch cohort `F`, units newly switching in at `F` are stacked
//! with units whose treatment is still at baseline through `F`. The outcome
//! at `F` is regressed on a newly-treated indicator, the lagged outcome,
//! unit covariates, cohort indicators and cluster indicators.

use std::collections::BTreeSet;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::clustering::ClusterAssignment;
use crate::cohorts::SwitchProfile;
use crate::error::{Error, Result};
use crate::ols::{cluster_robust_covariance, least_squares};
use crate::panel::Series;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SooResult {
    pub coefficient: f64,
    /// Clustered by unit.
    pub se: f64,
    /// Two-sided, Student t with `units − 1` degrees of freedom.
    pub p_value: f64,
    pub n_rows: usize,
    pub n_units: usize,
    pub n_cohorts: usize,
    pub warnings: Vec<String>,
}

/// `covariates[u]` holds unit `u`'s pre-period covariates.
pub fn soo_check(
    outcome: &[Series],
    profiles: &[SwitchProfile],
    covariates: &[Vec<f64>],
    clusters: &ClusterAssignment,
) -> Result<SooResult> {
    let cohorts: BTreeSet<usize> = profiles
        .iter()
        .filter(|p| p.is_switcher_in())
        .filter_map(|p| p.first_switch)
        .collect();
    if cohorts.len() < 2 {
        return Err(Error::Estimation(format!(
            "selection-on-observables check needs at least 2 switch cohorts, found {}",
            cohorts.len()
        )));
    }
    let n_cov = covariates.first().map_or(0, Vec::len);
    if covariates.len() != profiles.len() || covariates.iter().any(|c| c.len() != n_cov) {
        return Err(Error::InvalidArgument("one covariate row of equal length per unit required".into()));
    }
    let cohort_list: Vec<usize> = cohorts.iter().copied().collect();
    let cluster_list: Vec<usize> = {
        let s: BTreeSet<usize> = clusters.labels.iter().copied().collect();
        s.into_iter().collect()
    };

    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut row_units = Vec::new();
    for (ci, &f) in cohort_list.iter().enumerate() {
        for p in profiles {
            let treated = p.is_switcher_in() && p.first_switch == Some(f);
            if !treated && !p.unchanged_through(f) {
                continue;
            }
            let (Some(yf), Some(ylag)) = (outcome[p.unit][f], outcome[p.unit][f - 1]) else {
                continue;
            };
            let mut row = vec![1.0, if treated { 1.0 } else { 0.0 }, ylag];
            row.extend_from_slice(&covariates[p.unit]);
            row.extend((1..cohort_list.len()).map(|c| if c == ci { 1.0 } else { 0.0 }));
            let cl = clusters.labels[p.unit];
            row.extend(cluster_list[1..].iter().map(|&c| if c == cl { 1.0 } else { 0.0 }));
            y.push(yf);
            rows.push(row);
            row_units.push(p.unit);
        }
    }
    if rows.is_empty() {
        return Err(Error::Estimation("no usable rows for the selection-on-observables check".into()));
    }
    let k = rows[0].len();
    let columns: Vec<Vec<f64>> = (0..k).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let fit = least_squares(&columns, &y)?;
    if !fit.kept[1] {
        return Err(Error::Estimation("treated indicator is collinear with the other regressors".into()));
    }
    let mut warnings = Vec::new();
    let dropped = fit.dropped();
    if !dropped.is_empty() {
        warnings.push(format!("{} collinear regressor(s) dropped in the selection-on-observables check", dropped.len()));
    }
    let cov = cluster_robust_covariance(&columns, &fit, &row_units)?;
    let slot = fit.kept_indices().iter().position(|&j| j == 1).expect("kept");
    let se = cov[slot][slot].max(0.0).sqrt();
    let n_units = row_units.iter().collect::<BTreeSet<_>>().len();
    let coefficient = fit.coefficients[1];
    let p_value = if se > 0.0 {
        let t = StudentsT::new(0.0, 1.0, (n_units - 1) as f64).map_err(|e| Error::Estimation(e.to_string()))?;
        2.0 * t.sf((coefficient / se).abs())
    } else {
        warnings.push("selection-on-observables standard error is zero".into());
        if coefficient == 0.0 { 1.0 } else { 0.0 }
    };
    Ok(SooResult {
        coefficient,
        se,
        p_value,
        n_rows: y.len(),
        n_units,
        n_cohorts: cohort_list.len(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohorts::profile_all;

    #[test]
    fn needs_two_cohorts() {
        let bins = vec![vec![0, 1, 1], vec![0, 0, 0]];
        let profiles = profile_all(&bins).unwrap();
        let y = vec![vec![Some(0.0); 3]; 2];
        let err = soo_check(&y, &profiles, &[vec![], vec![]], &ClusterAssignment::single(2)).unwrap_err();
        assert!(err.to_string().contains("2 switch cohorts"));
    }

    #[test]
    fn additive_switch_effect_recovered() {
        // τ = 1.5 added at the first switch; outcomes otherwise follow a
        // unit-specific level plus a common period effect
        let tau = 1.5;
        let mut bins = Vec::new();
        let mut y = Vec::new();
        let mut cov = Vec::new();
        for u in 0..24usize {
            let f = match u % 3 {
                0 => None,
                1 => Some(2),
                _ => Some(3),
            };
            let path: Vec<i64> = (0..5).map(|t| i64::from(f.is_some_and(|f| t >= f))).collect();
            let level = (u as f64 * 0.37).sin();
            let series: Vec<Option<f64>> = (0..5)
                .map(|t| Some(level + 0.2 * t as f64 + if f.is_some_and(|f| t >= f) { tau } else { 0.0 }))
                .collect();
            bins.push(path);
            y.push(series);
            cov.push(vec![level.cos()]);
        }
        let profiles = profile_all(&bins).unwrap();
        let r = soo_check(&y, &profiles, &cov, &ClusterAssignment::single(24)).unwrap();
        assert!((r.coefficient - tau).abs() < 1e-9);
        assert_eq!(r.n_cohorts, 2);
    }
}
