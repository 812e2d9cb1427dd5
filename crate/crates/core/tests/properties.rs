//! Randomized invariants across the public API.

mod common;

use common::{brute_force, rel_close};
use cumdid::clustering::ClusterAssignment;
use cumdid::cohorts::profile_all;
use cumdid::dgp::{self, simulate, DgpSpec, IncrementProcess};
use cumdid::estimator::inference::{BootstrapOptions, ResampleLevel};
use cumdid::estimator::{estimate, EstimatorOptions, Sample};
use cumdid::exposure::{bin_of, cumulative_exposure, discretize, TreatmentPath};
use cumdid::panel::{difference, load_panel, PanelDataset, Series};
use cumdid::pipeline;
use cumdid::residualize::{residualize_diffs, ControlVariant, ResidualizeOptions};
use proptest::prelude::*;

fn bins_strategy() -> impl Strategy<Value = Vec<Vec<i64>>> {
    (2usize..=6, 2usize..=5).prop_flat_map(|(n, t)| {
        prop::collection::vec((0i64..=1, prop::collection::vec(-1i64..=2, t - 1)), n).prop_map(|units| {
            units
                .into_iter()
                .map(|(start, steps)| {
                    let mut d = start;
                    std::iter::once(start)
                        .chain(steps.into_iter().map(move |s| {
                            d += s;
                            d
                        }))
                        .collect()
                })
                .collect()
        })
    })
}

fn outcomes_for(bins: &[Vec<i64>], raw: &[f64], missing: &[bool]) -> Vec<Series> {
    let t = bins[0].len();
    (0..bins.len())
        .map(|u| (0..t).map(|s| (!missing[u * t + s]).then(|| raw[u * t + s])).collect())
        .collect()
}

fn sample(bins: &[Vec<i64>], y: Vec<Series>, labels: &[usize]) -> Sample {
    let paths = TreatmentPath { bin_width: 1.0, bins: bins.to_vec() };
    let k = *labels.iter().max().unwrap();
    Sample::new(&paths, ClusterAssignment { labels: labels.to_vec(), k }, y, Vec::new()).unwrap()
}

fn random_panel(n: usize, t: usize, values: &[f64], holes: &[bool]) -> PanelDataset {
    let at = |u: usize, s: usize, k: usize| values[(k * n * t + u * t + s) % values.len()];
    let series = |k: usize| -> Vec<Series> {
        (0..n)
            .map(|u| (0..t).map(|s| (!holes[(u * t + s + k) % holes.len()]).then(|| at(u, s, k))).collect())
            .collect()
    };
    PanelDataset::new(
        (0..n).map(|u| format!("u{u}")).collect(),
        (0..t as i64).map(|s| 1990 + s).collect(),
        1990,
        (0..n).map(|u| 10.0 + at(u, 0, 9).abs()).collect(),
    )
    .unwrap()
    .with_outcome("y", series(0))
    .unwrap()
    .with_control("x", series(1))
    .unwrap()
    .with_flow("flow", (0..n).map(|u| (0..t).map(|s| at(u, s, 2)).collect()).collect())
    .unwrap()
    .with_unit_feature("size", (0..n).map(|u| at(u, 0, 3)).collect())
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn panel_csv_round_trip_is_exact(
        n in 1usize..6,
        t in 1usize..6,
        values in prop::collection::vec(-1e6f64..1e6, 1..64),
        holes in prop::collection::vec(prop::bool::weighted(0.15), 1..16),
    ) {
        let panel = random_panel(n, t, &values, &holes);
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let back = load_panel(buf.as_slice(), &panel.schema()).unwrap();
        prop_assert_eq!(back, panel);
    }

    #[test]
    fn differences_accumulate_back_to_the_series(values in prop::collection::vec(-1e4f64..1e4, 1..20)) {
        let series: Series = values.iter().copied().map(Some).collect();
        let d = difference(&series);
        prop_assert!(d[0].is_none());
        let mut level = values[0];
        for t in 1..values.len() {
            level += d[t].unwrap();
            let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            prop_assert!((level - values[t]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn doubling_width_never_grows_bins(share in 0.0f64..500.0, w in 0.05f64..20.0) {
        prop_assert!(bin_of(share, 2.0 * w).abs() <= bin_of(share, w).abs());
    }

    #[test]
    fn tiny_instances_match_brute_force(
        bins in bins_strategy(),
        raw in prop::collection::vec(-10.0f64..10.0, 30),
        missing in prop::collection::vec(prop::bool::weighted(0.08), 30),
        labels in prop::collection::vec(1usize..=2, 6),
    ) {
        let n = bins.len();
        let y = outcomes_for(&bins, &raw, &missing);
        let labels = &labels[..n];
        let reference = brute_force(&bins, &y, labels, 7, 3);
        let est = estimate(&sample(&bins, y, labels), &EstimatorOptions::default());
        let Some(ref_delta) = reference.delta else {
            prop_assert!(est.is_err());
            return Ok(());
        };
        let est = est.unwrap();
        prop_assert!(rel_close(est.ate, ref_delta, 1e-12));
        prop_assert_eq!(est.horizons.len(), reference.horizons.len());
        for h in &est.horizons {
            let (did, norm, count) = reference.horizons[&h.horizon];
            prop_assert!(rel_close(h.did, did, 1e-12) && rel_close(h.normalized, norm, 1e-12));
            prop_assert_eq!(h.n, count);
        }
        prop_assert_eq!(est.placebos.len(), reference.placebos.len());
        for p in &est.placebos {
            prop_assert!(rel_close(p.estimate, reference.placebos[&p.lead], 1e-12));
        }
    }

    #[test]
    fn normalization_identity_and_weights(
        bins in bins_strategy(),
        raw in prop::collection::vec(-10.0f64..10.0, 30),
    ) {
        let y = outcomes_for(&bins, &raw, &[false; 30]);
        let labels = vec![1; bins.len()];
        let Ok(est) = estimate(&sample(&bins, y, &labels), &EstimatorOptions::default()) else {
            return Ok(());
        };
        for h in &est.horizons {
            prop_assert!((h.normalized * h.mean_delta - h.did).abs() <= 1e-12 * h.did.abs().max(1e-300));
        }
        for row in &est.lag_weights.weights {
            prop_assert!(row.iter().all(|&w| w >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    /// Shifting a unit's outcomes from its own first switch onward may only
    /// move that unit's own cells: it is never a control once its treatment
    /// has changed.
    #[test]
    fn switched_units_never_serve_as_controls(
        bins in bins_strategy(),
        raw in prop::collection::vec(-10.0f64..10.0, 30),
        labels in prop::collection::vec(1usize..=2, 6),
    ) {
        let labels = &labels[..bins.len()];
        let y = outcomes_for(&bins, &raw, &[false; 30]);
        let base = sample(&bins, y, labels);
        let opts = EstimatorOptions::default();
        let Ok(before) = estimate(&base, &opts) else { return Ok(()) };
        for c in 0..bins.len() {
            let Some(f) = base.profiles[c].first_switch else { continue };
            let mut shifted = base.clone();
            for v in shifted.outcome[c][f..].iter_mut() {
                *v = v.map(|x| x + 1000.0);
            }
            let after = estimate(&shifted, &opts).unwrap();
            let others = |cells: &[cumdid::estimator::CellEffect]| {
                cells.iter().filter(|e| e.unit != c).cloned().collect::<Vec<_>>()
            };
            prop_assert_eq!(others(&before.cells), others(&after.cells));
            prop_assert_eq!(others(&before.placebo_cells), others(&after.placebo_cells));
            if !base.profiles[c].is_switcher_in() {
                prop_assert_eq!(&before.cells, &after.cells);
            }
        }
    }

    /// Periods removed by the one-sided window never enter any contrast.
    #[test]
    fn trimmed_periods_are_unused(
        bins in bins_strategy(),
        raw in prop::collection::vec(-10.0f64..10.0, 30),
    ) {
        let labels = vec![1; bins.len()];
        let y = outcomes_for(&bins, &raw, &[false; 30]);
        let base = sample(&bins, y, &labels);
        let opts = EstimatorOptions::default();
        let Ok(before) = estimate(&base, &opts) else { return Ok(()) };
        for g in 0..bins.len() {
            let trimmed = base.profiles[g].trimmed_periods();
            if trimmed.is_empty() {
                continue;
            }
            let mut shifted = base.clone();
            for v in shifted.outcome[g][trimmed].iter_mut() {
                *v = v.map(|x| x - 777.0);
            }
            let after = estimate(&shifted, &opts).unwrap();
            prop_assert_eq!(&before.cells, &after.cells);
            prop_assert_eq!(&before.placebo_cells, &after.placebo_cells);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn affine_outcome_maps_scale_estimates_and_keep_p_values(
        a in prop_oneof![-4.0f64..-0.25, 0.25f64..4.0],
        b in -50.0f64..50.0,
        seed in 0u64..1000,
    ) {
        let spec = DgpSpec { noise_sd: 1.0, onset: Some((2, 5)), ..DgpSpec::unit_step_persistent(0.7, 60, 8, seed) };
        let (panel, _) = simulate(&spec).unwrap();
        let paths = discretize(&cumulative_exposure(&panel, dgp::FLOW).unwrap(), 1.0).unwrap();
        let y = panel.outcome(dgp::OUTCOME).unwrap().to_vec();
        let moved: Vec<Series> = y.iter().map(|s| s.iter().map(|v| v.map(|x| a * x + b)).collect()).collect();
        let opts = EstimatorOptions { max_horizon: 4, placebos: 2, ..Default::default() };
        let boot = BootstrapOptions { replications: 60, level: ResampleLevel::Unit, seed };
        let clusters = ClusterAssignment::single(60);
        let r0 = pipeline::infer(&Sample::new(&paths, clusters.clone(), y, Vec::new()).unwrap(), &opts, &boot).unwrap();
        let r1 = pipeline::infer(&Sample::new(&paths, clusters, moved, Vec::new()).unwrap(), &opts, &boot).unwrap();
        let tol = 1e-9;
        prop_assert!((r1.ate.estimate - a * r0.ate.estimate).abs() <= tol * (1.0 + r1.ate.estimate.abs()));
        for (x, z) in r0.event_study.iter().zip(&r1.event_study) {
            prop_assert!((z.estimate - a * x.estimate).abs() <= tol * (1.0 + z.estimate.abs()));
        }
        for (x, z) in r0.placebos.iter().zip(&r1.placebos) {
            prop_assert!((z.estimate - a * x.estimate).abs() <= tol * (1.0 + z.estimate.abs()));
        }
        prop_assert!((r0.ate.p_value.unwrap() - r1.ate.p_value.unwrap()).abs() <= 1e-9);
        let (j0, j1) = (r0.joint_placebo.unwrap(), r1.joint_placebo.unwrap());
        prop_assert!((j0.p_value - j1.p_value).abs() <= 1e-9);
    }

    #[test]
    fn residualizing_twice_changes_nothing(seed in 0u64..1000, quadratic in any::<bool>()) {
        let spec = DgpSpec {
            noise_sd: 1.0,
            gamma: 1.5,
            increments: IncrementProcess::Step { size: 1 },
            ..DgpSpec::unit_step_persistent(0.5, 80, 6, seed)
        };
        let (panel, _) = simulate(&spec).unwrap();
        let paths = discretize(&cumulative_exposure(&panel, dgp::FLOW).unwrap(), 1.0).unwrap();
        let profiles = profile_all(&paths.bins).unwrap();
        let diffs: Vec<Series> = panel.outcome(dgp::OUTCOME).unwrap().iter().map(|s| difference(s)).collect();
        let controls = vec![panel.control(dgp::CONTROL).unwrap().iter().map(|s| difference(s)).collect::<Vec<_>>()];
        let variant = if quadratic { ControlVariant::Quadratic } else { ControlVariant::Linear };
        let options = ResidualizeOptions { variant, pool_clusters: false };
        let clusters = ClusterAssignment::single(80);
        let once = residualize_diffs(&diffs, &controls, &profiles, &clusters, options).unwrap();
        let twice = residualize_diffs(&once.residuals, &controls, &profiles, &clusters, options).unwrap();
        let scale = diffs.iter().flatten().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        for reg in &once.regressions {
            for &(u, t) in &reg.cells {
                let (x, z) = (once.residuals[u][t].unwrap(), twice.residuals[u][t].unwrap());
                prop_assert!((x - z).abs() <= 1e-9 * scale, "cell ({u}, {t}): {x} vs {z}");
            }
        }
    }
}
