//! Cumulative exposure shares and their integer treatment bins.

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// Cumulative net flow as a percentage of baseline population, per unit and
/// period: `100 · Σ_{j≤t} flow_j / population`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSeries {
    pub flow: String,
    /// `shares[unit][period]`, in percent.
    pub shares: Vec<Vec<f64>>,
}

/// Integer bins `floor(share / bin_width)`, one path per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentPath {
    pub bin_width: f64,
    pub bins: Vec<Vec<i64>>,
}

impl TreatmentPath {
    pub fn path(&self, unit: usize) -> &[i64] {
        &self.bins[unit]
    }

    pub fn n_units(&self) -> usize {
        self.bins.len()
    }

    pub fn select_units(&self, keep: &[usize]) -> TreatmentPath {
        TreatmentPath { bin_width: self.bin_width, bins: keep.iter().map(|&i| self.bins[i].clone()).collect() }
    }
}

pub fn cumulative_exposure(panel: &PanelDataset, flow: &str) -> Result<ExposureSeries> {
    let flows = panel.flow(flow)?;
    let shares = flows
        .iter()
        .zip(panel.baseline_population())
        .map(|(row, &pop)| {
            // running sum kept exact; divide once per cell
            let mut total = 0.0;
            row.iter()
                .map(|&f| {
                    total += f;
                    total * 100.0 / pop
                })
                .collect()
        })
        .collect();
    Ok(ExposureSeries { flow: flow.to_string(), shares })
}

/// Bin index of one share. Negative shares floor toward −∞.
pub fn bin_of(share: f64, bin_width: f64) -> i64 {
    (share / bin_width).floor() as i64
}

pub fn discretize(exposure: &ExposureSeries, bin_width: f64) -> Result<TreatmentPath> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidArgument(format!("bin width must be positive, got {bin_width}")));
    }
    let bins = exposure
        .shares
        .iter()
        .map(|row| row.iter().map(|&s| bin_of(s, bin_width)).collect())
        .collect();
    Ok(TreatmentPath { bin_width, bins })
}

/// One treatment path per width, in the order the widths are given.
pub fn rebin(exposure: &ExposureSeries, widths: &[f64]) -> Result<Vec<(f64, TreatmentPath)>> {
    if widths.is_empty() {
        return Err(Error::InvalidArgument("at least one bin width is required".into()));
    }
    widths.iter().map(|&w| Ok((w, discretize(exposure, w)?))).collect()
}
