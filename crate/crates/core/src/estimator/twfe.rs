//! Two-way fixed-effects comparator.

use crate::error::{Error, Result};
use crate::panel::Series;

const MAX_SWEEPS: usize = 10_000;
const SWEEP_TOL: f64 = 1e-13;

/// Removes unit and period means from `x` over the observed cells by
/// alternating projections. One sweep is exact on a balanced panel.
fn two_way_demean(x: &mut [Vec<f64>], observed: &[Vec<bool>]) {
    let n = x.len();
    let t_len = x.first().map_or(0, Vec::len);
    let scale = x
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for _ in 0..MAX_SWEEPS {
        let mut moved = 0.0f64;
        for u in 0..n {
            let (s, c) = (0..t_len)
                .filter(|&t| observed[u][t])
                .fold((0.0, 0usize), |(s, c), t| (s + x[u][t], c + 1));
            if c > 0 {
                let m = s / c as f64;
                moved = moved.max(m.abs());
                for t in 0..t_len {
                    x[u][t] -= m;
                }
            }
        }
        for t in 0..t_len {
            let (s, c) = (0..n)
                .filter(|&u| observed[u][t])
                .fold((0.0, 0usize), |(s, c), u| (s + x[u][t], c + 1));
            if c > 0 {
                let m = s / c as f64;
                moved = moved.max(m.abs());
                for row in x.iter_mut() {
                    row[t] -= m;
                }
            }
        }
        if moved <= SWEEP_TOL * scale {
            return;
        }
    }
}

/// Within estimator of the outcome on the treatment bin with unit and
/// period fixed effects, over cells with an observed outcome.
pub fn twfe_estimate(outcome: &[Series], bins: &[Vec<i64>]) -> Result<f64> {
    if outcome.len() != bins.len() || outcome.iter().zip(bins).any(|(y, d)| y.len() != d.len()) {
        return Err(Error::InvalidArgument("outcome and treatment shapes differ".into()));
    }
    let observed: Vec<Vec<bool>> = outcome.iter().map(|y| y.iter().map(Option::is_some).collect()).collect();
    let mut d: Vec<Vec<f64>> = bins
        .iter()
        .zip(&observed)
        .map(|(b, o)| b.iter().zip(o).map(|(&v, &ok)| if ok { v as f64 } else { 0.0 }).collect())
        .collect();
    two_way_demean(&mut d, &observed);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (u, y) in outcome.iter().enumerate() {
        for (t, v) in y.iter().enumerate() {
            if let Some(v) = v {
                sxy += d[u][t] * v;
                sxx += d[u][t] * d[u][t];
            }
        }
    }
    let total: f64 = bins.iter().flatten().map(|&b| (b as f64).powi(2)).sum();
    if sxx <= 1e-12 * total.max(1.0) {
        return Err(Error::Estimation("no treatment variation left after removing unit and period effects".into()));
    }
    Ok(sxy / sxx)
}
