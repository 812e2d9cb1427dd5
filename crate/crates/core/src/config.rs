//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::inference::BootstrapOptions;
use crate::panel::PanelSchema;
use crate::residualize::ControlVariant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Panel file; relative paths resolve against the config file's folder.
    pub path: PathBuf,
    pub unit: String,
    pub period: String,
    pub population: String,
    #[serde(default)]
    pub baseline_period: Option<i64>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub min_baseline_population: Option<f64>,
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentConfig {
    pub flow: String,
    #[serde(default = "default_width")]
    pub bin_width: f64,
}

fn default_width() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeConfig {
    pub name: String,
    /// Natural log at ingestion; zeros become missing.
    #[serde(default)]
    pub log: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractivenessConfig {
    pub dimensions: [String; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringConfig {
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Adds the composite attractiveness index as one more feature.
    #[serde(default)]
    pub attractiveness: Option<AttractivenessConfig>,
}

fn default_k() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsConfig {
    pub columns: Vec<String>,
    #[serde(default)]
    pub variant: ControlVariant,
    /// Fit one auxiliary regression per baseline bin across clusters.
    #[serde(default)]
    pub pool_clusters: bool,
    /// Columns already hold per-period changes and are used without
    /// differencing.
    #[serde(default)]
    pub differenced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    #[serde(default = "default_widths")]
    pub bin_widths: Vec<f64>,
}

pub fn default_widths() -> Vec<f64> {
    vec![1.0, 2.0, 5.0, 10.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    pub treatments: Vec<TreatmentConfig>,
    pub outcomes: Vec<OutcomeConfig>,
    #[serde(default)]
    pub clustering: Option<ClusteringConfig>,
    #[serde(default)]
    pub controls: Option<ControlsConfig>,
    #[serde(default = "default_horizons")]
    pub horizons: usize,
    #[serde(default = "default_placebos")]
    pub placebos: usize,
    #[serde(default = "default_min_post")]
    pub min_post_periods: usize,
    pub inference: BootstrapOptions,
    /// Covariates for the selection-on-observables check; defaults to the
    /// clustering features. An empty list skips the check.
    #[serde(default)]
    pub soo_covariates: Option<Vec<String>>,
    #[serde(default)]
    pub robustness: Option<RobustnessConfig>,
    pub output_dir: PathBuf,
}

fn default_horizons() -> usize {
    7
}
fn default_placebos() -> usize {
    3
}
fn default_min_post() -> usize {
    1
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.treatments.is_empty() {
            return bad("at least one treatment is required".into());
        }
        if self.outcomes.is_empty() {
            return bad("at least one outcome is required".into());
        }
        for t in &self.treatments {
            if !(t.bin_width > 0.0 && t.bin_width.is_finite()) {
                return bad(format!("bin width of `{}` must be positive", t.flow));
            }
        }
        if self.horizons == 0 {
            return bad("horizons must be at least 1".into());
        }
        if let Some(c) = &self.clustering {
            if c.k == 0 {
                return bad("clustering.k must be at least 1".into());
            }
            if c.k > 1 && c.features.is_empty() && c.attractiveness.is_none() {
                return bad("clustering with k > 1 needs features".into());
            }
        }
        if let Some(c) = &self.controls {
            if c.columns.is_empty() && c.variant != ControlVariant::None {
                return bad("controls.columns is empty".into());
            }
        }
        if let Some(r) = &self.robustness {
            if r.bin_widths.is_empty() || r.bin_widths.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                return bad("robustness.bin_widths must be a nonempty list of positive widths".into());
            }
        }
        if self.inference.replications < crate::estimator::inference::MIN_REPLICATIONS {
            return bad(format!(
                "inference.replications must be at least {}",
                crate::estimator::inference::MIN_REPLICATIONS
            ));
        }
        Ok(())
    }

    pub fn clustering_features(&self) -> Vec<String> {
        self.clustering.as_ref().map_or_else(Vec::new, |c| c.features.clone())
    }

    pub fn soo_covariates(&self) -> Vec<String> {
        self.soo_covariates.clone().unwrap_or_else(|| self.clustering_features())
    }

    /// Column mapping covering every column the run refers to.
    pub fn schema(&self) -> PanelSchema {
        let mut unit_features: Vec<String> = self.clustering_features();
        if let Some(a) = self.clustering.as_ref().and_then(|c| c.attractiveness.as_ref()) {
            unit_features.extend(a.dimensions.iter().cloned());
        }
        unit_features.extend(self.soo_covariates());
        let mut seen = std::collections::HashSet::new();
        unit_features.retain(|f| seen.insert(f.clone()));
        let mut flows: Vec<String> = Vec::new();
        for t in &self.treatments {
            if !flows.contains(&t.flow) {
                flows.push(t.flow.clone());
            }
        }
        PanelSchema {
            unit: self.input.unit.clone(),
            period: self.input.period.clone(),
            population: self.input.population.clone(),
            baseline_period: self.input.baseline_period,
            outcomes: self.outcomes.iter().map(|o| o.name.clone()).collect(),
            flows,
            controls: self.controls.as_ref().map_or_else(Vec::new, |c| c.columns.clone()),
            unit_features,
            delimiter: self.input.delimiter,
            min_baseline_population: self.input.min_baseline_population,
        }
    }
}

/// A parsed configuration together with its provenance.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Hex SHA-256 of the raw configuration bytes.
    pub sha256: String,
    /// Folder relative paths resolve against.
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Config(format!("config is not UTF-8: {e}")))?;
        let config = RunConfig::from_json(text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, sha256: hex::encode(Sha256::digest(&bytes)), base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "input": {"path": "panel.csv", "unit": "id", "period": "year", "population": "pop"},
        "treatments": [{"flow": "internal"}],
        "outcomes": [{"name": "firms"}],
        "inference": {"replications": 100, "seed": 7},
        "output_dir": "out"
    }"#;

    #[test]
    fn defaults_applied() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!((c.horizons, c.placebos, c.min_post_periods), (7, 3, 1));
        assert_eq!(c.treatments[0].bin_width, 1.0);
        let s = c.schema();
        assert_eq!(s.flows, vec!["internal"]);
        assert_eq!(s.outcomes, vec!["firms"]);
    }

    #[test]
    fn seed_is_mandatory() {
        let text = MINIMAL.replace(r#", "seed": 7"#, "");
        let err = RunConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = MINIMAL.replace(r#""horizon""#, "").replace(r#""output_dir""#, r#""colour": 1, "output_dir""#);
        assert!(RunConfig::from_json(&text).is_err());
    }

    #[test]
    fn schema_collects_all_columns() {
        let text = MINIMAL.replace(
            r#""output_dir""#,
            r#""clustering": {"features": ["a", "b"], "k": 2,
                "attractiveness": {"dimensions": ["d1", "d2", "d3", "d4", "a"]}},
               "controls": {"columns": ["x"], "variant": "quadratic"},
               "output_dir""#,
        );
        let s = RunConfig::from_json(&text).unwrap().schema();
        assert_eq!(s.unit_features, vec!["a", "b", "d1", "d2", "d3", "d4"]);
        assert_eq!(s.controls, vec!["x"]);
    }
}
