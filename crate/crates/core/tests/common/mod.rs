//! Brute-force reference implementations written directly from the
//! estimand definitions. They share no code with the library.

#![allow(dead_code)]

use std::collections::BTreeMap;

/// Reference event study on raw bins and outcome levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    /// horizon → (DID_ℓ, DID_ℓ^n, N_ℓ)
    pub horizons: BTreeMap<usize, (f64, f64, usize)>,
    pub delta: Option<f64>,
    /// lead → placebo estimate
    pub placebos: BTreeMap<usize, f64>,
}

pub fn brute_force(
    bins: &[Vec<i64>],
    y: &[Vec<Option<f64>>],
    clusters: &[usize],
    max_horizon: usize,
    leads: usize,
) -> Reference {
    let n = bins.len();
    let t_len = bins[0].len();
    // (did, |Δ|, increment) per horizon
    let mut cells: BTreeMap<usize, Vec<(f64, f64, f64)>> = BTreeMap::new();
    let mut placebo_cells: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut num = 0.0;
    let mut den = 0.0;
    for g in 0..n {
        let base = bins[g][0];
        let mut first = None;
        for t in 0..t_len {
            if bins[g][t] != base {
                first = Some(t);
                break;
            }
        }
        let Some(f) = first else { continue };
        if bins[g][f] < base {
            continue;
        }
        let mut last = t_len;
        for t in f..t_len {
            if bins[g][t] < base {
                last = t;
                break;
            }
        }
        for l in 1..=(last - f) {
            let end = f - 1 + l;
            let mut controls = Vec::new();
            for c in 0..n {
                if c == g || bins[c][0] != base || clusters[c] != clusters[g] {
                    continue;
                }
                let mut still = true;
                for s in 0..=end {
                    if bins[c][s] != bins[c][0] {
                        still = false;
                    }
                }
                if still {
                    controls.push(c);
                }
            }
            let contrast = |from: usize, to: usize| -> Option<f64> {
                let own = y[g][to]? - y[g][from]?;
                let mut total = 0.0;
                let mut count = 0;
                for &c in &controls {
                    if let (Some(a), Some(b)) = (y[c][to], y[c][from]) {
                        total += a - b;
                        count += 1;
                    }
                }
                if count == 0 {
                    None
                } else {
                    Some(own - total / count as f64)
                }
            };
            if let Some(did) = contrast(f - 1, end) {
                let mut delta = 0i64;
                for k in 0..l {
                    delta += bins[g][f + k] - base;
                }
                let inc = (bins[g][end] - base) as f64;
                cells.entry(l).or_default().push((did, (delta as f64).abs(), inc));
                num += did;
                den += inc;
            }
            if l <= leads && f > l {
                if let Some(p) = contrast(f - 1 - l, f - 1) {
                    placebo_cells.entry(l).or_default().push(p);
                }
            }
        }
    }
    let mut horizons = BTreeMap::new();
    for (l, v) in &cells {
        if *l > max_horizon {
            continue;
        }
        let m = v.len() as f64;
        let did = v.iter().map(|c| c.0).sum::<f64>() / m;
        let mean_delta = v.iter().map(|c| c.1).sum::<f64>() / m;
        horizons.insert(*l, (did, did / mean_delta, v.len()));
    }
    let placebos = placebo_cells
        .into_iter()
        .map(|(l, v)| (l, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    Reference { horizons, delta: (den > 0.0).then(|| num / den), placebos }
}

/// `(a, b, height, size)`
pub type MergeStep = (usize, usize, f64, usize);

/// Naive complete-linkage agglomeration: recomputes every cluster-pair
/// distance from the leaves at each step. Returns merges `(a, b, height,
/// size)` and the partition after each step.
pub fn brute_force_linkage(points: &[Vec<f64>]) -> (Vec<MergeStep>, Vec<Vec<usize>>) {
    let n = points.len();
    let d = |i: usize, j: usize| -> f64 {
        let mut s = 0.0;
        for (a, b) in points[i].iter().zip(&points[j]) {
            s += (a - b) * (a - b);
        }
        s.sqrt()
    };
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    let mut partitions = vec![labels_of(&clusters, n)];
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for x in 0..clusters.len() {
            for z in 0..clusters.len() {
                if x == z {
                    continue;
                }
                let (ia, ib) = (clusters[x].0, clusters[z].0);
                if ia > ib {
                    continue;
                }
                let mut far: f64 = 0.0;
                for &p in &clusters[x].1 {
                    for &q in &clusters[z].1 {
                        far = far.max(d(p, q));
                    }
                }
                let take = match best {
                    None => true,
                    Some((bd, ba, bb)) => far < bd || (far == bd && (ia, ib) < (ba, bb)),
                };
                if take {
                    best = Some((far, ia, ib));
                }
            }
        }
        let (h, a, b) = best.unwrap();
        let mut members = Vec::new();
        clusters.retain(|(id, m)| {
            if *id == a || *id == b {
                members.extend(m.iter().copied());
                false
            } else {
                true
            }
        });
        let size = members.len();
        clusters.push((n + step, members));
        merges.push((a, b, h, size));
        partitions.push(labels_of(&clusters, n));
    }
    (merges, partitions)
}

/// Labels numbered 1.. by first appearance in leaf order.
fn labels_of(clusters: &[(usize, Vec<usize>)], n: usize) -> Vec<usize> {
    let mut owner = vec![0; n];
    for (slot, (_, m)) in clusters.iter().enumerate() {
        for &p in m {
            owner[p] = slot;
        }
    }
    let mut seen: Vec<usize> = Vec::new();
    owner
        .iter()
        .map(|o| match seen.iter().position(|s| s == o) {
            Some(i) => i + 1,
            None => {
                seen.push(*o);
                seen.len()
            }
        })
        .collect()
}

/// Relative closeness; exact zeros only match exact zeros.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// One formatted verdict line per acceptance criterion, written straight to
/// stderr so it shows without `--nocapture`.
pub fn verdict(id: usize, name: &str, pass: bool, detail: &str) {
    use std::io::Write;
    let line = format!("criterion {id:>2} [{}] {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::stderr().lock().write_all(line.as_bytes()).expect("stderr");
}
