//! Pre-treatment clustering of units: z-scored features, complete-linkage
//! agglomeration on Euclidean distances, and dendrogram cuts.
//!
//! Cluster ids follow the usual agglomerative convention: leaves are
//! `0..n`, and the cluster created by merge `i` gets id `n + i`.

use log::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub units: Vec<String>,
    pub names: Vec<String>,
    /// `rows[unit][feature]`
    pub rows: Vec<Vec<f64>>,
    pub standardized: bool,
}

impl FeatureMatrix {
    pub fn new(units: Vec<String>, names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != units.len() || rows.iter().any(|r| r.len() != names.len()) {
            return Err(Error::InvalidArgument("feature matrix shape does not match its labels".into()));
        }
        Ok(FeatureMatrix { units, names, rows, standardized: false })
    }

    pub fn n_units(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }
}

/// Z-scores every column with the sample (n − 1) standard deviation.
/// Constant columns become all zeros; their names are returned as warnings.
pub fn standardize(features: &FeatureMatrix) -> Result<(FeatureMatrix, Vec<String>)> {
    let n = features.n_units();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("standardizing needs at least 2 units, got {n}")));
    }
    let mut rows = features.rows.clone();
    let mut warnings = Vec::new();
    for j in 0..features.names.len() {
        let col = features.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        let constant = col.iter().all(|&x| x == col[0]) || sd <= f64::EPSILON * mean.abs();
        for (r, x) in rows.iter_mut().zip(&col) {
            r[j] = if constant { 0.0 } else { (x - mean) / sd };
        }
        if constant {
            let msg = format!("feature `{}` is constant; standardized to zeros", features.names[j]);
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok((
        FeatureMatrix {
            units: features.units.clone(),
            names: features.names.clone(),
            rows,
            standardized: true,
        },
        warnings,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    /// Smaller of the two merged cluster ids.
    pub a: usize,
    pub b: usize,
    /// Complete-linkage distance between the merged clusters.
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Complete-linkage agglomeration. Among equal candidate distances the pair
/// with the lexicographically smallest `(a, b)` cluster ids is merged first.
pub fn complete_linkage(features: &FeatureMatrix) -> Result<Dendrogram> {
    let n = features.n_units();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("clustering needs at least 2 units, got {n}")));
    }
    if features.rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Domain("features contain NaN or infinite values".into()));
    }
    // dist[i][j] between active slots; slot i holds cluster id ids[i]
    let mut dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| euclidean(&features.rows[i], &features.rows[j])).collect())
        .collect();
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if !active[j] {
                    continue;
                }
                let (lo, hi) = if ids[i] < ids[j] { (ids[i], ids[j]) } else { (ids[j], ids[i]) };
                let d = dist[i][j];
                let better = match best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => d < bd || (d == bd && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((d, lo, hi, i, j));
                }
            }
        }
        let (height, a, b, i, j) = best.expect("at least two active clusters");
        // merged cluster lives in slot i
        for k in 0..n {
            if active[k] && k != i && k != j {
                let d = dist[i][k].max(dist[j][k]);
                dist[i][k] = d;
                dist[k][i] = d;
            }
        }
        active[j] = false;
        sizes[i] += sizes[j];
        ids[i] = n + step;
        merges.push(Merge { a, b, height, size: sizes[i] });
    }
    Ok(Dendrogram { n_leaves: n, merges })
}

/// Unit → cluster label in `1..=k`. Labels are numbered by first appearance
/// in unit order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    pub fn single(n: usize) -> Self {
        ClusterAssignment { labels: vec![1; n], k: 1 }
    }

    pub fn select_units(&self, keep: &[usize]) -> Self {
        ClusterAssignment { labels: keep.iter().map(|&i| self.labels[i]).collect(), k: self.k }
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Partition obtained by undoing the last `k − 1` merges.
pub fn cut(dendrogram: &Dendrogram, k: usize) -> Result<ClusterAssignment> {
    let n = dendrogram.n_leaves;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cluster count {k} outside 1..={n}")));
    }
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    for (step, m) in dendrogram.merges.iter().take(n - k).enumerate() {
        let new = n + step;
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        parent[ra] = new;
        parent[rb] = new;
    }
    let mut root_label = std::collections::HashMap::new();
    let labels = (0..n)
        .map(|leaf| {
            let r = find(&mut parent, leaf);
            let next = root_label.len() + 1;
            *root_label.entry(r).or_insert(next)
        })
        .collect();
    Ok(ClusterAssignment { labels, k })
}

/// Equal-weight mean of already z-scored dimensions.
pub fn mean_zscore(z: &[f64]) -> f64 {
    z.iter().sum::<f64>() / z.len() as f64
}

/// Composite index: each of the five named dimensions is z-scored across
/// units and the five scores are averaged per unit.
pub fn attractiveness_index(features: &FeatureMatrix, dimensions: &[String; 5]) -> Result<Vec<f64>> {
    let cols = dimensions
        .iter()
        .map(|d| features.column_index(d))
        .collect::<Result<Vec<_>>>()?;
    let sub = FeatureMatrix::new(
        features.units.clone(),
        dimensions.to_vec(),
        features.rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect(),
    )?;
    let (z, _) = standardize(&sub)?;
    Ok(z.rows.iter().map(|r| mean_zscore(r)).collect())
}
