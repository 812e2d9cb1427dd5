//! Least squares via Householder QR with deterministic column dropping.
//!
//! Columns are processed in the order given. A column whose component
//! orthogonal to the already accepted columns is negligible is dropped, so
//! under collinearity the first-listed columns are the ones kept.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Relative size below which a column counts as linearly dependent.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// One entry per input column; dropped columns get 0.
    pub coefficients: Vec<f64>,
    pub kept: Vec<bool>,
    pub residuals: Vec<f64>,
    /// Upper-triangular factor over kept columns, row-major.
    r: Vec<Vec<f64>>,
}

impl LeastSquares {
    pub fn rank(&self) -> usize {
        self.r.len()
    }

    pub fn dropped(&self) -> Vec<usize> {
        self.kept.iter().enumerate().filter(|(_, &k)| !k).map(|(j, _)| j).collect()
    }

    pub fn rss(&self) -> f64 {
        self.residuals.iter().map(|e| e * e).sum()
    }

    /// `(X'X)⁻¹` restricted to the kept columns, in kept-column order.
    pub fn inverse_gram(&self) -> Vec<Vec<f64>> {
        let k = self.r.len();
        // R⁻¹ by back substitution, column by column
        let mut rinv = vec![vec![0.0; k]; k];
        for c in 0..k {
            for i in (0..=c).rev() {
                let mut s = if i == c { 1.0 } else { 0.0 };
                for j in i + 1..=c {
                    s -= self.r[i][j] * rinv[j][c];
                }
                rinv[i][c] = s / self.r[i][i];
            }
        }
        let mut out = vec![vec![0.0; k]; k];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (i.max(j)..k).map(|l| rinv[i][l] * rinv[j][l]).sum();
            }
        }
        out
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        self.kept.iter().enumerate().filter(|(_, &k)| k).map(|(j, _)| j).collect()
    }
}

/// Minimizes `‖y − Xb‖²` where `columns` holds the columns of `X`.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<LeastSquares> {
    let m = y.len();
    if m == 0 {
        return Err(Error::Estimation("least squares with zero usable rows".into()));
    }
    if columns.iter().any(|c| c.len() != m) {
        return Err(Error::InvalidArgument("design column length differs from response".into()));
    }
    let mut reflectors: Vec<(usize, Vec<f64>, f64)> = Vec::new();
    let apply = |reflectors: &[(usize, Vec<f64>, f64)], v: &mut [f64]| {
        for (k, h, beta) in reflectors {
            let dot: f64 = h.iter().zip(&v[*k..]).map(|(a, b)| a * b).sum();
            let s = beta * dot;
            for (x, a) in v[*k..].iter_mut().zip(h) {
                *x -= s * a;
            }
        }
    };
    let mut kept = vec![false; columns.len()];
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let k = r_cols.len();
        let norm0 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if k >= m || norm0 == 0.0 || !norm0.is_finite() {
            continue;
        }
        let mut c = col.clone();
        apply(&reflectors, &mut c);
        let tail = c[k..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if tail <= RANK_TOL * norm0 {
            continue;
        }
        let alpha = if c[k] >= 0.0 { -tail } else { tail };
        let mut h = c[k..].to_vec();
        h[0] -= alpha;
        let hh: f64 = h.iter().map(|x| x * x).sum();
        let mut rc = c[..k].to_vec();
        rc.push(alpha);
        r_cols.push(rc);
        reflectors.push((k, h, 2.0 / hh));
        kept[j] = true;
    }
    let rank = r_cols.len();
    let mut qty = y.to_vec();
    apply(&reflectors, &mut qty);
    // back substitution on R b = Qᵀy
    let mut b = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for j in i + 1..rank {
            s -= r_cols[j][i] * b[j];
        }
        b[i] = s / r_cols[i][i];
    }
    let mut coefficients = vec![0.0; columns.len()];
    for (slot, j) in kept.iter().enumerate().filter(|(_, &k)| k).map(|(j, _)| j).enumerate() {
        coefficients[j] = b[slot];
    }
    let mut residuals = y.to_vec();
    for (j, col) in columns.iter().enumerate() {
        if kept[j] && coefficients[j] != 0.0 {
            for (e, x) in residuals.iter_mut().zip(col) {
                *e -= coefficients[j] * x;
            }
        }
    }
    let r = (0..rank)
        .map(|i| (0..rank).map(|j| if j >= i { r_cols[j][i] } else { 0.0 }).collect())
        .collect();
    Ok(LeastSquares { coefficients, kept, residuals, r })
}

/// Cluster-robust sandwich covariance of the kept coefficients with the
/// `G/(G−1) · (N−1)/(N−K)` small-sample factor.
pub fn cluster_robust_covariance(
    columns: &[Vec<f64>],
    fit: &LeastSquares,
    cluster_ids: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let kept = fit.kept_indices();
    let k = kept.len();
    let n = fit.residuals.len();
    if cluster_ids.len() != n {
        return Err(Error::InvalidArgument("one cluster id per row required".into()));
    }
    let mut scores: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for i in 0..n {
        let s = scores.entry(cluster_ids[i]).or_insert_with(|| vec![0.0; k]);
        for (a, &j) in kept.iter().enumerate() {
            s[a] += columns[j][i] * fit.residuals[i];
        }
    }
    let g = scores.len();
    if g < 2 || n <= k {
        return Err(Error::Estimation("too few clusters or rows for a clustered covariance".into()));
    }
    let mut meat = vec![vec![0.0; k]; k];
    for s in scores.values() {
        for a in 0..k {
            for b in 0..k {
                meat[a][b] += s[a] * s[b];
            }
        }
    }
    let bread = fit.inverse_gram();
    let scale = (g as f64 / (g - 1) as f64) * ((n - 1) as f64 / (n - k) as f64);
    let tmp: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| (0..k).map(|c| bread[a][c] * meat[c][b]).sum()).collect())
        .collect();
    Ok((0..k)
        .map(|a| (0..k).map(|b| scale * (0..k).map(|c| tmp[a][c] * bread[c][b]).sum::<f64>()).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_fit() {
        let x = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let fit = least_squares(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn intercept_only() {
        let fit = least_squares(&[vec![1.0; 3]], &[1.0, 2.0, 3.0]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        for (e, want) in fit.residuals.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((e - want).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_column_dropped() {
        let x1 = vec![1.0, 2.0, 3.0, 5.0, 8.0];
        let ones = vec![1.0; 5];
        let y = [1.0, 3.0, 2.0, 7.0, 9.0];
        let base = least_squares(&[ones.clone(), x1.clone()], &y).unwrap();
        let dup = least_squares(&[ones, x1.clone(), x1], &y).unwrap();
        assert_eq!(dup.kept, vec![true, true, false]);
        assert_eq!(dup.dropped(), vec![2]);
        for (a, b) in base.residuals.iter().zip(&dup.residuals) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((base.coefficients[1] - dup.coefficients[1]).abs() < 1e-12);
    }

    #[test]
    fn zero_rows_is_error() {
        assert!(least_squares(&[vec![]], &[]).is_err());
    }

    #[test]
    fn inverse_gram_matches_normal_equations() {
        let x = vec![vec![1.0; 4], vec![0.0, 1.0, 2.0, 4.0]];
        let fit = least_squares(&x, &[1.0, 2.0, 2.0, 5.0]).unwrap();
        let inv = fit.inverse_gram();
        // X'X = [[4, 7], [7, 21]], det = 35
        let want = [[21.0 / 35.0, -7.0 / 35.0], [-7.0 / 35.0, 4.0 / 35.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[i][j] - want[i][j]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn residuals_orthogonal_to_columns(
            rows in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 4..30)
        ) {
            let x1: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let x2: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let cols = vec![vec![1.0; rows.len()], x1, x2.clone(), x2];
            let fit = least_squares(&cols, &y).unwrap();
            let enorm = fit.residuals.iter().map(|e| e * e).sum::<f64>().sqrt();
            for c in &cols {
                let cn = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                let dot: f64 = c.iter().zip(&fit.residuals).map(|(a, b)| a * b).sum();
                prop_assert!(dot.abs() <= 1e-8 * cn * enorm.max(1.0));
            }
        }
    }
}
