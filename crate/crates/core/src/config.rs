//! Run configuration, loadable from TOML. Every field has a default so a
//! config file only needs the entries it wants to change.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{StepColumns, StringencyColumns};
use crate::pipeline::PipelineOptions;
use crate::rhythm::{ExclusionThresholds, Segmentation, DEFAULT_EPSILON};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub steps: PathBuf,
    pub demographics: PathBuf,
    pub survey: PathBuf,
    pub stringency: Option<PathBuf>,
}

impl Default for InputPaths {
    fn default() -> Self {
        InputPaths {
            steps: "steps.csv".into(),
            demographics: "demographics.csv".into(),
            survey: "survey.csv".into(),
            stringency: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExclusionConfig {
    pub min_availability: f64,
    pub min_workdays: usize,
    pub min_full_weekends: usize,
    pub max_leave_days: u32,
}

impl Default for ExclusionConfig {
    fn default() -> Self {
        let t = ExclusionThresholds::default();
        ExclusionConfig {
            min_availability: t.min_availability,
            min_workdays: t.min_workdays,
            min_full_weekends: t.min_full_weekends,
            max_leave_days: t.max_leave_days,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            seed: 1,
        }
    }
}

/// Model formulas, in `response ~ a + b + a:b, group = col` form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub formulas: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let covariates =
            "age + gender + migrant + live_alone + has_children + role + gender:has_children";
        ModelConfig {
            formulas: vec![
                format!("short_workday ~ {covariates}, group = participant"),
                format!("long_workday ~ {covariates}, group = participant"),
                format!("long_weekend ~ {covariates}, group = participant"),
                "onsite_pct ~ long_workday, group = month".to_string(),
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: InputPaths,
    pub step_columns: StepColumns,
    pub stringency_columns: StringencyColumns,
    /// Region code to keep from the stringency export.
    pub stringency_region: String,
    /// Segment boundary start hours; first must be 0.
    pub segment_boundaries: Vec<u8>,
    /// Distance floor for the inverse-distance consistency.
    pub epsilon: f64,
    pub exclusions: ExclusionConfig,
    pub models: ModelConfig,
    pub bootstrap: BootstrapConfig,
    /// Thread count; 0 means one thread per core.
    pub workers: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: InputPaths::default(),
            step_columns: StepColumns::default(),
            stringency_columns: StringencyColumns::default(),
            stringency_region: "FIN".into(),
            segment_boundaries: vec![0, 6, 12, 18],
            epsilon: DEFAULT_EPSILON,
            exclusions: ExclusionConfig::default(),
            models: ModelConfig::default(),
            bootstrap: BootstrapConfig::default(),
            workers: 0,
            out_dir: "out".into(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config encode: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        Segmentation::new(self.segment_boundaries.clone())?;
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.exclusions.min_availability) {
            return Err(Error::Config("min_availability must be in [0, 1]".into()));
        }
        for f in &self.models.formulas {
            f.parse::<crate::lmm::ModelSpec>()?;
        }
        Ok(())
    }

    pub fn pipeline_options(&self) -> Result<PipelineOptions> {
        Ok(PipelineOptions {
            segmentation: Segmentation::new(self.segment_boundaries.clone())?,
            epsilon: self.epsilon,
            thresholds: ExclusionThresholds {
                min_availability: self.exclusions.min_availability,
                min_workdays: self.exclusions.min_workdays,
                min_full_weekends: self.exclusions.min_full_weekends,
                max_leave_days: self.exclusions.max_leave_days,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        let text = config.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(config.segment_boundaries, back.segment_boundaries);
        assert_eq!(config.epsilon, back.epsilon);
        assert_eq!(config.models.formulas, back.models.formulas);
        assert_eq!(config.bootstrap.replicates, back.bootstrap.replicates);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let config = RunConfig::from_toml("epsilon = 1e-4\n[bootstrap]\nreplicates = 200\n")
            .unwrap();
        assert_eq!(config.epsilon, 1e-4);
        assert_eq!(config.bootstrap.replicates, 200);
        assert_eq!(config.segment_boundaries, vec![0, 6, 12, 18]);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(RunConfig::from_toml("epsilon = 0.0").is_err());
        assert!(RunConfig::from_toml("segment_boundaries = [1, 6]").is_err());
        assert!(RunConfig::from_toml("no_such_field = 3").is_err());
        assert!(
            RunConfig::from_toml("[models]\nformulas = [\"y ~ ~ x\"]").is_err(),
            "malformed formula"
        );
    }

    #[test]
    fn default_formulas_parse() {
        for f in RunConfig::default().models.formulas {
            f.parse::<crate::lmm::ModelSpec>().unwrap();
        }
    }
}
