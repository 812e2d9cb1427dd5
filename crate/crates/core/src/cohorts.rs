//! First-switch detection, one-sided windows and not-yet-switched control
//! pools.
//!
//! Each unit is its own group `g`. Periods are referred to by position in
//! the period grid (0-based), so the baseline bin is `path[0]` and a
//! switcher's horizon `ℓ` ends at position `first_switch − 1 + ℓ`.

use std::io::Write;

use serde::Serialize;

use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchProfile {
    pub unit: usize,
    pub baseline_bin: i64,
    /// Position of the first period whose bin differs from the baseline.
    pub first_switch: Option<usize>,
    pub direction: Direction,
    /// Number of usable horizons `ℓ = 1..=max_horizon`; zero unless the unit
    /// is a switcher-in.
    pub max_horizon: usize,
    /// Position of the first post-switch period strictly below baseline;
    /// it and every later period are trimmed.
    pub trimmed_from: Option<usize>,
    pub n_periods: usize,
}

impl SwitchProfile {
    pub fn is_switcher_in(&self) -> bool {
        self.direction == Direction::In
    }

    /// Whether the unit's treatment is still at baseline in period position
    /// `t`, i.e. it has not switched yet (or never does).
    pub fn unchanged_through(&self, t: usize) -> bool {
        self.first_switch.is_none_or(|f| f > t)
    }

    pub fn trimmed_periods(&self) -> std::ops::Range<usize> {
        match self.trimmed_from {
            Some(t) => t..self.n_periods,
            None => self.n_periods..self.n_periods,
        }
    }

    /// Period position at which horizon `ℓ` ends.
    pub fn horizon_end(&self, horizon: usize) -> Option<usize> {
        let f = self.first_switch?;
        (horizon >= 1 && horizon <= self.max_horizon).then(|| f - 1 + horizon)
    }
}

/// Finds the first deviation from the baseline bin. The result has no
/// window restriction applied yet (`max_horizon` is 0).
pub fn detect_first_switch(unit: usize, path: &[i64]) -> Result<SwitchProfile> {
    let baseline_bin = *path
        .first()
        .ok_or_else(|| Error::InvalidArgument("treatment path is empty".into()))?;
    let first_switch = path.iter().position(|&d| d != baseline_bin);
    let direction = match first_switch {
        None => Direction::None,
        Some(f) if path[f] > baseline_bin => Direction::In,
        Some(_) => Direction::Out,
    };
    Ok(SwitchProfile {
        unit,
        baseline_bin,
        first_switch,
        direction,
        max_horizon: 0,
        trimmed_from: None,
        n_periods: path.len(),
    })
}

/// Restricts a switcher-in to horizons over which the path stays weakly above
/// its baseline; everything from the first strict dip below is trimmed.
pub fn apply_one_sided_window(profile: &SwitchProfile, path: &[i64]) -> Result<SwitchProfile> {
    let f = match (profile.direction, profile.first_switch) {
        (Direction::In, Some(f)) => f,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "one-sided window applies to switchers-in only (unit {})",
                profile.unit
            )))
        }
    };
    let dip = (f..path.len()).find(|&t| path[t] < profile.baseline_bin);
    let end = dip.unwrap_or(path.len());
    Ok(SwitchProfile { max_horizon: end - f, trimmed_from: dip, ..profile.clone() })
}

/// Profiles for every unit, with the window applied to switchers-in.
pub fn profile_all(paths: &[Vec<i64>]) -> Result<Vec<SwitchProfile>> {
    paths
        .iter()
        .enumerate()
        .map(|(u, path)| {
            let p = detect_first_switch(u, path)?;
            if p.is_switcher_in() {
                apply_one_sided_window(&p, path)
            } else {
                Ok(p)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlPool {
    pub treated: usize,
    pub horizon: usize,
    pub members: Vec<usize>,
}

/// Units sharing `g`'s baseline bin and cluster whose treatment has not
/// changed through the last period of horizon `ℓ`. An empty pool is an
/// error: the `(g, ℓ)` cell cannot be estimated.
pub fn build_control_pool(
    g: &SwitchProfile,
    horizon: usize,
    profiles: &[SwitchProfile],
    clusters: &ClusterAssignment,
) -> Result<ControlPool> {
    let end = g.horizon_end(horizon).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "horizon {horizon} outside the valid window of unit {}",
            g.unit
        ))
    })?;
    let members: Vec<usize> = profiles
        .iter()
        .filter(|c| {
            c.unit != g.unit
                && c.baseline_bin == g.baseline_bin
                && clusters.labels[c.unit] == clusters.labels[g.unit]
                && c.unchanged_through(end)
        })
        .map(|c| c.unit)
        .collect();
    if members.is_empty() {
        return Err(Error::Estimation(format!(
            "no not-yet-switched control for unit {} at horizon {horizon}",
            g.unit
        )));
    }
    Ok(ControlPool { treated: g.unit, horizon, members })
}

/// Why a unit does or does not enter estimation as a treated group.
pub fn audit_reason(p: &SwitchProfile, min_post_periods: usize) -> &'static str {
    match p.direction {
        Direction::None => "never-switcher",
        Direction::Out => "switcher-out",
        Direction::In if p.max_horizon < min_post_periods => "too-few-post-periods",
        Direction::In if p.trimmed_from.is_some() => "full-reversal-trimmed",
        Direction::In => "switcher-in",
    }
}

/// Writes the switch-audit table: one row per unit.
pub fn write_switch_audit<W: Write>(
    writer: W,
    units: &[String],
    periods: &[i64],
    profiles: &[SwitchProfile],
    min_post_periods: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "unit",
        "baseline_bin",
        "first_switch",
        "direction",
        "horizons",
        "trimmed_from",
        "reason",
    ])?;
    for p in profiles {
        let dir = match p.direction {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::None => "none",
        };
        w.write_record([
            units[p.unit].clone(),
            p.baseline_bin.to_string(),
            p.first_switch.map_or(String::new(), |f| periods[f].to_string()),
            dir.to_string(),
            p.max_horizon.to_string(),
            p.trimmed_from.map_or(String::new(), |t| periods[t].to_string()),
            audit_reason(p, min_post_periods).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_switch_examples() {
        let p = detect_first_switch(0, &[0, 0, 0, 0]).unwrap();
        assert_eq!((p.first_switch, p.direction), (None, Direction::None));
        let p = detect_first_switch(0, &[0, 0, 1, 1]).unwrap();
        assert_eq!((p.first_switch, p.direction), (Some(2), Direction::In));
        let p = detect_first_switch(0, &[2, 1, 3, 3]).unwrap();
        assert_eq!((p.first_switch, p.direction), (Some(1), Direction::Out));
        assert!(detect_first_switch(0, &[]).is_err());
    }

    fn windowed(path: &[i64]) -> SwitchProfile {
        apply_one_sided_window(&detect_first_switch(0, path).unwrap(), path).unwrap()
    }

    #[test]
    fn one_sided_window_examples() {
        let p = windowed(&[0, 1, 2, 1, 0]);
        assert_eq!((p.max_horizon, p.trimmed_from), (4, None));
        let p = windowed(&[0, 1, 0, -1, 2]);
        assert_eq!((p.max_horizon, p.trimmed_from), (2, Some(3)));
        assert_eq!(p.trimmed_periods(), 3..5);
        let p = windowed(&[0, 1, 1, 1]);
        assert_eq!((p.max_horizon, p.trimmed_from), (3, None));
        let out = detect_first_switch(0, &[2, 1, 3]).unwrap();
        assert!(apply_one_sided_window(&out, &[2, 1, 3]).is_err());
    }

    #[test]
    fn control_pool_examples() {
        // unit 0 switches at position 1, unit 1 at position 3, unit 2 never,
        // unit 3 never but other cluster, unit 4 never but other baseline
        let paths = vec![
            vec![0, 1, 1, 1, 1],
            vec![0, 0, 0, 1, 1],
            vec![0, 0, 0, 0, 0],
            vec![0, 0, 0, 0, 0],
            vec![1, 1, 1, 1, 1],
        ];
        let profiles = profile_all(&paths).unwrap();
        let clusters = ClusterAssignment { labels: vec![1, 1, 1, 2, 1], k: 2 };
        let g = &profiles[0];
        let pool = |l| build_control_pool(g, l, &profiles, &clusters).unwrap().members;
        assert_eq!(pool(1), vec![1, 2]);
        assert_eq!(pool(2), vec![1, 2]);
        assert_eq!(pool(3), vec![2]);
        assert_eq!(pool(4), vec![2]);
        assert!(build_control_pool(g, 5, &profiles, &clusters).is_err());
        // no same-cluster control left
        let lonely = ClusterAssignment { labels: vec![1, 2, 2, 2, 2], k: 2 };
        assert!(matches!(build_control_pool(g, 1, &profiles, &lonely), Err(Error::Estimation(_))));
    }

    #[test]
    fn switcher_out_serves_as_control_before_its_switch() {
        let paths = vec![vec![0, 0, 1, 1], vec![0, 0, 0, -1]];
        let profiles = profile_all(&paths).unwrap();
        assert_eq!(profiles[1].max_horizon, 0);
        let c = ClusterAssignment::single(2);
        assert_eq!(build_control_pool(&profiles[0], 1, &profiles, &c).unwrap().members, vec![1]);
        assert!(build_control_pool(&profiles[0], 2, &profiles, &c).is_err());
    }

    proptest! {
        #[test]
        fn pools_shrink_with_horizon(paths in proptest::collection::vec(proptest::collection::vec(-1i64..3, 6), 2..8)) {
            let profiles = profile_all(&paths).unwrap();
            let clusters = ClusterAssignment::single(paths.len());
            for g in profiles.iter().filter(|p| p.is_switcher_in()) {
                let mut prev: Option<Vec<usize>> = None;
                for l in 1..=g.max_horizon {
                    let members = build_control_pool(g, l, &profiles, &clusters).map(|p| p.members).unwrap_or_default();
                    let end = g.horizon_end(l).unwrap();
                    for &m in &members {
                        prop_assert!(profiles[m].unchanged_through(end));
                        prop_assert!(m != g.unit);
                    }
                    if let Some(p) = &prev {
                        prop_assert!(members.iter().all(|m| p.contains(m)));
                    }
                    prev = Some(members);
                }
                let f = g.first_switch.unwrap();
                for t in f..f + g.max_horizon {
                    prop_assert!(paths[g.unit][t] >= g.baseline_bin);
                }
                if let Some(t) = g.trimmed_from {
                    prop_assert!(paths[g.unit][t] < g.baseline_bin);
                }
            }
        }
    }
}
