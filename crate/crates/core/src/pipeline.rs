//! End-to-end runs: ingest, expose, cluster, profile, residualize, estimate
//! and report.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::clustering::{attractiveness_index, complete_linkage, cut, standardize, ClusterAssignment, FeatureMatrix};
use crate::cohorts::{audit_reason, profile_all, SwitchProfile};
use crate::config::{LoadedConfig, RunConfig};
use crate::error::{Error, Result};
use crate::estimator::inference::{bootstrap_inference, BootstrapOptions, EventStudyResult, ResampleLevel};
use crate::estimator::soo::{soo_check, SooResult};
use crate::estimator::twfe::twfe_estimate;
use crate::estimator::{estimate, EstimatorOptions, Sample};
use crate::exposure::{cumulative_exposure, discretize, TreatmentPath};
use crate::panel::{difference, load_panel, PanelDataset, Series};
use crate::report;
use crate::residualize::{ControlVariant, ResidualizeOptions};

pub const ATTRACTIVENESS_FEATURE: &str = "attractiveness";

/// Reads the configured panel and applies log transforms.
pub fn prepare_panel(loaded: &LoadedConfig) -> Result<PanelDataset> {
    let config = &loaded.config;
    let path = loaded.resolve(&config.input.path);
    let file = File::open(&path).map_err(|e| Error::Config(format!("cannot open input `{}`: {e}", path.display())))?;
    let mut panel = load_panel(BufReader::new(file), &config.schema())?;
    for o in config.outcomes.iter().filter(|o| o.log) {
        panel.log_transform_outcome(&o.name)?;
    }
    Ok(panel)
}

/// Complete-linkage clusters on z-scored unit features, plus warnings.
pub fn assign_clusters(panel: &PanelDataset, config: &RunConfig) -> Result<(ClusterAssignment, Vec<String>)> {
    let n = panel.n_units();
    let Some(c) = config.clustering.as_ref().filter(|c| c.k > 1) else {
        return Ok((ClusterAssignment::single(n), Vec::new()));
    };
    if c.k > n {
        return Err(Error::Config(format!("clustering.k = {} exceeds the {n} units", c.k)));
    }
    let mut names = c.features.clone();
    let mut columns: Vec<Vec<f64>> = c
        .features
        .iter()
        .map(|f| panel.unit_feature(f).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    if let Some(a) = &c.attractiveness {
        let dims: Vec<Vec<f64>> = a
            .dimensions
            .iter()
            .map(|f| panel.unit_feature(f).map(<[f64]>::to_vec))
            .collect::<Result<_>>()?;
        let m = FeatureMatrix::new(
            panel.units().to_vec(),
            a.dimensions.to_vec(),
            (0..n).map(|u| dims.iter().map(|d| d[u]).collect()).collect(),
        )?;
        columns.push(attractiveness_index(&m, &a.dimensions)?);
        names.push(ATTRACTIVENESS_FEATURE.to_string());
    }
    let rows = (0..n).map(|u| columns.iter().map(|col| col[u]).collect()).collect();
    let m = FeatureMatrix::new(panel.units().to_vec(), names, rows)?;
    let (z, constant) = standardize(&m)?;
    let warnings = constant
        .into_iter()
        .map(|f| format!("clustering feature `{f}` is constant and carries no information"))
        .collect();
    Ok((cut(&complete_linkage(&z)?, c.k)?, warnings))
}

/// Job-specific seed derived from the master seed, so each result depends
/// only on its own identity.
pub fn derive_seed(master: u64, flow: &str, bin_width: f64, outcome: &str) -> u64 {
    let digest = Sha256::digest(format!("{master}/{flow}/{bin_width:?}/{outcome}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn control_diffs(panel: &PanelDataset, config: &RunConfig) -> Result<Vec<Vec<Series>>> {
    let Some(c) = config.controls.as_ref().filter(|c| c.variant != ControlVariant::None) else {
        return Ok(Vec::new());
    };
    c.columns
        .iter()
        .map(|name| {
            let levels = panel.control(name)?;
            Ok(if c.differenced {
                levels.to_vec()
            } else {
                levels.iter().map(|s| difference(s)).collect()
            })
        })
        .collect()
}

pub fn estimator_options(config: &RunConfig) -> EstimatorOptions {
    EstimatorOptions {
        max_horizon: config.horizons,
        placebos: config.placebos,
        min_post_periods: config.min_post_periods,
        controls: config.controls.as_ref().map_or_else(ResidualizeOptions::default, |c| ResidualizeOptions {
            variant: c.variant,
            pool_clusters: c.pool_clusters,
        }),
    }
}

/// Resampling blocks for the bootstrap. A single cluster falls back to
/// resampling units.
pub fn bootstrap_blocks(clusters: &ClusterAssignment, level: ResampleLevel) -> (Vec<usize>, ResampleLevel, Option<String>) {
    let n = clusters.labels.len();
    let distinct = clusters.labels.iter().collect::<std::collections::BTreeSet<_>>().len();
    match level {
        ResampleLevel::Cluster if distinct > 1 => (clusters.labels.clone(), ResampleLevel::Cluster, None),
        ResampleLevel::Cluster => (
            (0..n).collect(),
            ResampleLevel::Unit,
            Some("only one cluster: bootstrap resamples units instead".to_string()),
        ),
        ResampleLevel::Unit => ((0..n).collect(), ResampleLevel::Unit, None),
    }
}

/// Point estimates with bootstrap inference for one sample.
pub fn infer(sample: &Sample, opts: &EstimatorOptions, boot: &BootstrapOptions) -> Result<EventStudyResult> {
    let point = estimate(sample, opts)?;
    let (blocks, level, note) = bootstrap_blocks(&sample.clusters, boot.level);
    let draws = bootstrap_inference(&blocks, boot, |idx| {
        estimate(&sample.resample(idx), opts).map(|e| e.statistics(opts))
    })?;
    let mut result = EventStudyResult::assemble(&point, &draws, opts, level)?;
    if let Some(n) = note {
        result.warnings.push(n);
    }
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct JobResult {
    pub treatment: String,
    pub bin_width: f64,
    pub outcome: String,
    pub seed: u64,
    pub result: EventStudyResult,
    pub soo: Option<SooResult>,
    pub twfe: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TreatmentSummary {
    pub treatment: String,
    pub bin_width: f64,
    #[serde(skip)]
    pub profiles: Vec<SwitchProfile>,
    /// Units per audit reason.
    pub audit: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnessRow {
    pub treatment: String,
    pub outcome: String,
    pub bin_width: f64,
    pub estimate: f64,
    /// Estimate divided by the bin width: effect per percentage point.
    pub per_pp: f64,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub p_value: Option<f64>,
    pub n_switchers: usize,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub clusters: ClusterAssignment,
    pub treatments: Vec<TreatmentSummary>,
    pub jobs: Vec<JobResult>,
    pub harness: Vec<HarnessRow>,
    pub warnings: Vec<String>,
}

struct Context<'a> {
    panel: &'a PanelDataset,
    config: &'a RunConfig,
    clusters: &'a ClusterAssignment,
    controls: Vec<Vec<Series>>,
    soo_covariates: Option<Vec<Vec<f64>>>,
    opts: EstimatorOptions,
}

impl Context<'_> {
    fn job(&self, flow: &str, paths: &TreatmentPath, outcome: &str, with_checks: bool) -> Result<JobResult> {
        let y = self.panel.outcome(outcome)?.to_vec();
        let sample = Sample::new(paths, self.clusters.clone(), y, self.controls.clone())?;
        let seed = derive_seed(self.config.inference.seed, flow, paths.bin_width, outcome);
        let boot = BootstrapOptions { seed, ..self.config.inference };
        info!("estimating {outcome} on {flow} (bin width {})", paths.bin_width);
        let mut result = infer(&sample, &self.opts, &boot)?;
        let (mut soo, mut twfe) = (None, None);
        if with_checks {
            if let Some(cov) = &self.soo_covariates {
                match soo_check(&sample.outcome, &sample.profiles, cov, &sample.clusters) {
                    Ok(r) => soo = Some(r),
                    Err(e) => result.warnings.push(format!("selection-on-observables check skipped: {e}")),
                }
            }
            match twfe_estimate(&sample.outcome, &sample.bins) {
                Ok(b) => twfe = Some(b),
                Err(e) => result.warnings.push(format!("TWFE comparator skipped: {e}")),
            }
        }
        for w in &result.warnings {
            warn!("{outcome} on {flow}: {w}");
        }
        Ok(JobResult {
            treatment: flow.to_string(),
            bin_width: paths.bin_width,
            outcome: outcome.to_string(),
            seed,
            result,
            soo,
            twfe,
        })
    }
}

fn context<'a>(panel: &'a PanelDataset, config: &'a RunConfig, clusters: &'a ClusterAssignment) -> Result<Context<'a>> {
    let names = config.soo_covariates();
    let soo_covariates = if names.is_empty() {
        None
    } else {
        let cols: Vec<&[f64]> = names.iter().map(|n| panel.unit_feature(n)).collect::<Result<_>>()?;
        Some((0..panel.n_units()).map(|u| cols.iter().map(|c| c[u]).collect()).collect())
    };
    Ok(Context {
        panel,
        config,
        clusters,
        controls: control_diffs(panel, config)?,
        soo_covariates,
        opts: estimator_options(config),
    })
}

/// One average-total-effect row per (treatment flow, outcome, width).
pub fn run_binwidth_harness(
    panel: &PanelDataset,
    config: &RunConfig,
    clusters: &ClusterAssignment,
    widths: &[f64],
) -> Result<Vec<HarnessRow>> {
    let ctx = context(panel, config, clusters)?;
    let mut flows: Vec<&str> = Vec::new();
    for t in &config.treatments {
        if !flows.contains(&t.flow.as_str()) {
            flows.push(&t.flow);
        }
    }
    let mut jobs = Vec::new();
    for flow in flows {
        let exposure = cumulative_exposure(panel, flow)?;
        for &w in widths {
            let paths = discretize(&exposure, w)?;
            for o in &config.outcomes {
                jobs.push((flow, paths.clone(), o.name.as_str()));
            }
        }
    }
    jobs.par_iter()
        .map(|(flow, paths, outcome)| {
            let r = ctx.job(flow, paths, outcome, false)?;
            let a = &r.result.ate;
            Ok(HarnessRow {
                treatment: r.treatment,
                outcome: r.outcome,
                bin_width: r.bin_width,
                estimate: a.estimate,
                per_pp: a.estimate / r.bin_width,
                se: a.se,
                ci_lo: a.ci_lo,
                ci_hi: a.ci_hi,
                p_value: a.p_value,
                n_switchers: a.n_switchers,
            })
        })
        .collect()
}

/// Every configured estimate on an already loaded panel.
pub fn analyze(panel: &PanelDataset, config: &RunConfig) -> Result<Analysis> {
    config.validate()?;
    let (clusters, mut warnings) = assign_clusters(panel, config)?;
    let ctx = context(panel, config, &clusters)?;
    let mut treatments = Vec::new();
    let mut jobs = Vec::new();
    for t in &config.treatments {
        let paths = discretize(&cumulative_exposure(panel, &t.flow)?, t.bin_width)?;
        let profiles = profile_all(&paths.bins)?;
        let mut audit = BTreeMap::new();
        for p in &profiles {
            *audit.entry(audit_reason(p, config.min_post_periods).to_string()).or_insert(0) += 1;
        }
        treatments.push(TreatmentSummary { treatment: t.flow.clone(), bin_width: t.bin_width, profiles, audit });
        for o in &config.outcomes {
            jobs.push((t.flow.as_str(), paths.clone(), o.name.as_str()));
        }
    }
    let jobs = jobs
        .par_iter()
        .map(|(flow, paths, outcome)| ctx.job(flow, paths, outcome, true))
        .collect::<Result<Vec<_>>>()?;
    let harness = match &config.robustness {
        Some(r) => run_binwidth_harness(panel, config, &clusters, &r.bin_widths)?,
        None => Vec::new(),
    };
    if !panel.dropped_small_units().is_empty() {
        warnings.push(format!(
            "{} unit(s) below the minimum baseline population were dropped",
            panel.dropped_small_units().len()
        ));
    }
    Ok(Analysis { clusters, treatments, jobs, harness, warnings })
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub analysis: Analysis,
}

/// Full batch run. Outputs are staged and only moved into place once every
/// step has succeeded.
pub fn run(loaded: &LoadedConfig, output_override: Option<&Path>) -> Result<RunSummary> {
    let panel = prepare_panel(loaded)?;
    let analysis = analyze(&panel, &loaded.config)?;
    let output_dir = match output_override {
        Some(p) => p.to_path_buf(),
        None => loaded.resolve(&loaded.config.output_dir),
    };
    let files = report::write_all(&output_dir, &panel, &loaded.config, &loaded.sha256, &analysis)?;
    Ok(RunSummary { output_dir, files, analysis })
}
