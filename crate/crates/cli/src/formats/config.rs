//! Experiment config files: JSON with the split parameters, the
//! hyperparameter grid, and protocol options. Omitted fields fall back
//! to the documented defaults (100 family sets of 10 identities, 10
//! images minimum, mean objective).

use std::path::Path;

use serde::{Deserialize, Serialize};
use shallowface_core::protocol::{ExperimentConfig, Objective};

use crate::error::{io_err, parse_err, CliError};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_family_size")]
    pub family_size: usize,
    #[serde(default = "default_num_family_sets")]
    pub num_family_sets: usize,
    #[serde(default = "default_min_images")]
    pub min_images: usize,
    pub alpha_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_depths: Option<Vec<usize>>,
    #[serde(default)]
    pub objective: ObjectiveName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stranger_holdout: Option<f64>,
}

fn default_family_size() -> usize {
    10
}

fn default_num_family_sets() -> usize {
    100
}

fn default_min_images() -> usize {
    10
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveName {
    #[default]
    MeanMfmo,
    MaxMfmo,
}

impl From<ObjectiveName> for Objective {
    fn from(name: ObjectiveName) -> Self {
        match name {
            ObjectiveName::MeanMfmo => Objective::MeanMfmo,
            ObjectiveName::MaxMfmo => Objective::MaxMfmo,
        }
    }
}

impl From<Objective> for ObjectiveName {
    fn from(obj: Objective) -> Self {
        match obj {
            Objective::MeanMfmo => ObjectiveName::MeanMfmo,
            Objective::MaxMfmo => ObjectiveName::MaxMfmo,
        }
    }
}

impl ConfigFile {
    pub fn into_config(self) -> ExperimentConfig {
        ExperimentConfig {
            seed: self.seed,
            family_size: self.family_size,
            num_family_sets: self.num_family_sets,
            min_images: self.min_images,
            alpha_grid: self.alpha_grid,
            n_grid: self.n_grid,
            truncation_depths: self.truncation_depths,
            objective: self.objective.into(),
            stranger_holdout: self.stranger_holdout,
        }
    }

    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self {
            seed: config.seed,
            family_size: config.family_size,
            num_family_sets: config.num_family_sets,
            min_images: config.min_images,
            alpha_grid: config.alpha_grid.clone(),
            n_grid: config.n_grid.clone(),
            truncation_depths: config.truncation_depths.clone(),
            objective: config.objective.into(),
            stranger_holdout: config.stranger_holdout,
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let file: ConfigFile = serde_json::from_slice(&bytes).map_err(|e| parse_err(path, e))?;
    Ok(file.into_config())
}
