//! Report files: per-result JSON, flat CSV tables and the run manifest.
//!
//! Everything is written into a staging folder next to the destination and
//! renamed into place at the end, so a failed run leaves nothing behind.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::json;

use crate::cohorts::write_switch_audit;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimator::inference::EstimateRow;
use crate::panel::PanelDataset;
use crate::pipeline::{Analysis, HarnessRow, JobResult};

pub const MANIFEST: &str = "manifest.json";
pub const ATE_SUMMARY: &str = "ate_summary.csv";

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn treatment_tag(flow: &str, bin_width: f64) -> String {
    format!("{}__w{}", sanitize(flow), num(bin_width))
}

pub fn job_prefix(job: &JobResult) -> String {
    format!("{}__{}", sanitize(&job.outcome), treatment_tag(&job.treatment, job.bin_width))
}

fn create(dir: &Path, name: &str, files: &mut Vec<String>) -> Result<BufWriter<File>> {
    files.push(name.to_string());
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Rows `{horizon, estimate, se, ci_lo, ci_hi, n}`; `sign` flips the
/// horizon for placebo leads.
pub fn write_estimate_rows<W: Write>(writer: W, rows: &[EstimateRow], sign: i64) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["horizon", "estimate", "se", "ci_lo", "ci_hi", "n"])?;
    for r in rows {
        w.write_record([
            (sign * r.horizon as i64).to_string(),
            num(r.estimate),
            opt(r.se),
            opt(r.ci_lo),
            opt(r.ci_hi),
            r.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_job(dir: &Path, job: &JobResult, files: &mut Vec<String>) -> Result<()> {
    let prefix = job_prefix(job);
    let mut f = create(dir, &format!("{prefix}.json"), files)?;
    serde_json::to_writer_pretty(&mut f, job)?;
    f.write_all(b"\n")?;
    f.flush()?;
    let r = &job.result;
    write_estimate_rows(create(dir, &format!("{prefix}_event_study.csv"), files)?, &r.event_study, 1)?;
    write_estimate_rows(create(dir, &format!("{prefix}_normalized.csv"), files)?, &r.normalized, 1)?;
    write_estimate_rows(create(dir, &format!("{prefix}_placebo.csv"), files)?, &r.placebos, -1)?;
    let mut w = csv::Writer::from_writer(create(dir, &format!("{prefix}_weights.csv"), files)?);
    w.write_record(["horizon", "lag", "weight"])?;
    for (h, row) in r.lag_weights.horizons.iter().zip(&r.lag_weights.weights) {
        for (k, wt) in row.iter().enumerate() {
            w.write_record([h.to_string(), k.to_string(), num(*wt)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_ate_summary<W: Write>(writer: W, jobs: &[JobResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "treatment",
        "bin_width",
        "outcome",
        "estimate",
        "se",
        "p_value",
        "placebo_p_value",
        "ci_lo",
        "ci_hi",
        "n_switchers",
        "twfe",
        "soo_coefficient",
        "soo_p_value",
    ])?;
    for j in jobs {
        let a = &j.result.ate;
        w.write_record([
            j.treatment.clone(),
            num(j.bin_width),
            j.outcome.clone(),
            num(a.estimate),
            opt(a.se),
            opt(a.p_value),
            opt(j.result.joint_placebo.map(|t| t.p_value)),
            opt(a.ci_lo),
            opt(a.ci_hi),
            a.n_switchers.to_string(),
            opt(j.twfe),
            opt(j.soo.as_ref().map(|s| s.coefficient)),
            opt(j.soo.as_ref().map(|s| s.p_value)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_harness<W: Write>(writer: W, rows: &[HarnessRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "outcome",
        "bin_width",
        "estimate",
        "per_pp",
        "se",
        "ci_lo",
        "ci_hi",
        "p_value",
        "n_switchers",
    ])?;
    for r in rows {
        w.write_record([
            r.outcome.clone(),
            num(r.bin_width),
            num(r.estimate),
            num(r.per_pp),
            opt(r.se),
            opt(r.ci_lo),
            opt(r.ci_hi),
            opt(r.p_value),
            r.n_switchers.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_files(
    dir: &Path,
    panel: &PanelDataset,
    config: &RunConfig,
    config_sha256: &str,
    analysis: &Analysis,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for job in &analysis.jobs {
        write_job(dir, job, &mut files)?;
    }
    write_ate_summary(create(dir, ATE_SUMMARY, &mut files)?, &analysis.jobs)?;
    for t in &analysis.treatments {
        let name = format!("switch_audit_{}.csv", treatment_tag(&t.treatment, t.bin_width));
        write_switch_audit(create(dir, &name, &mut files)?, panel.units(), panel.periods(), &t.profiles, config.min_post_periods)?;
    }
    let mut flows: Vec<&str> = analysis.harness.iter().map(|r| r.treatment.as_str()).collect();
    flows.dedup();
    for flow in flows {
        let rows: Vec<HarnessRow> = analysis.harness.iter().filter(|r| r.treatment == flow).cloned().collect();
        write_harness(create(dir, &format!("binwidth_{}.csv", sanitize(flow)), &mut files)?, &rows)?;
    }

    let mut cluster_sizes = vec![0usize; analysis.clusters.k];
    for &l in &analysis.clusters.labels {
        cluster_sizes[l - 1] += 1;
    }
    let mut warnings = analysis.warnings.clone();
    for j in &analysis.jobs {
        warnings.extend(j.result.warnings.iter().map(|w| format!("{} on {}: {w}", j.outcome, j.treatment)));
    }
    let mut listed = files.clone();
    listed.push(MANIFEST.to_string());
    listed.sort();
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": config_sha256,
        "seed": config.inference.seed,
        "replications": config.inference.replications,
        "units": panel.n_units(),
        "periods": panel.periods(),
        "baseline_period": panel.baseline_period(),
        "dropped_small_units": panel.dropped_small_units(),
        "cluster_sizes": cluster_sizes,
        "treatments": analysis.treatments,
        "jobs": analysis.jobs.iter().map(|j| json!({
            "treatment": j.treatment,
            "bin_width": j.bin_width,
            "outcome": j.outcome,
            "seed": j.seed,
            "included_switchers": j.result.ate.n_switchers,
            "cells": j.result.ate.n_cells,
            "dropped_cells": j.result.dropped_cells,
            "bootstrap": j.result.bootstrap,
        })).collect::<Vec<_>>(),
        "files": listed,
        "warnings": warnings,
    });
    let mut f = create(dir, MANIFEST, &mut files)?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    f.flush()?;
    files.sort();
    Ok(files)
}

/// Writes every report file into `output_dir`, replacing a previous run's
/// output there. Returns the file names.
pub fn write_all(
    output_dir: &Path,
    panel: &PanelDataset,
    config: &RunConfig,
    config_sha256: &str,
    analysis: &Analysis,
) -> Result<Vec<String>> {
    let parent = match output_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => ".".into(),
    };
    fs::create_dir_all(&parent)?;
    if output_dir.exists() {
        let previous_run = output_dir.join(MANIFEST).is_file();
        let empty = fs::read_dir(output_dir)?.next().is_none();
        if !previous_run && !empty {
            return Err(Error::Config(format!(
                "output directory `{}` exists and does not hold a previous run",
                output_dir.display()
            )));
        }
    }
    let staging = tempfile::Builder::new().prefix(".cumdid-staging-").tempdir_in(&parent)?;
    let files = write_files(staging.path(), panel, config, config_sha256, analysis)?;
    if output_dir.exists() {
        fs::remove_dir_all(output_dir)?;
    }
    let staged = staging.keep();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&staged, fs::Permissions::from_mode(0o755))?;
    }
    fs::rename(staged, output_dir)?;
    Ok(files)
}
