//! TOML run configurations.

use std::path::Path;

use ordheck::data::ColumnConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ols,
    Oprobit,
    Oheckman,
    /// Binary selection: the outcome stage against all others.
    Heckman2,
    Twostep,
    Imputation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    #[default]
    Oim,
    Robust,
    Cluster,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub covariance: CovarianceKind,
    /// Multiply cluster-robust covariances by G/(G−1).
    #[serde(default)]
    pub small_sample_correction: bool,
    /// Outcome columns reported as `exp(β) − 1`.
    #[serde(default)]
    pub exp_beta: Vec<String>,
    /// Quantile for the imputation estimator.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub data: ColumnConfig,
}

fn default_tau() -> f64 {
    0.5
}

fn default_max_iter() -> usize {
    500
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinarizeKind {
    Median,
    Threshold,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IvConfig {
    pub stage_column: String,
    pub outcome_column: String,
    pub instrument_column: String,
    /// Stages counted as selected; defaults to the highest stage present.
    #[serde(default)]
    pub selected_stages: Vec<usize>,
    #[serde(default = "default_binarize")]
    pub binarize: BinarizeKind,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
}

fn default_binarize() -> BinarizeKind {
    BinarizeKind::Median
}

fn default_bins() -> usize {
    10
}

fn default_draws() -> usize {
    10_000
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// (ρ, α₁) pairs; the study's full grid when empty.
    #[serde(default)]
    pub cells: Vec<[f64; 2]>,
    #[serde(default)]
    pub n_per_group: Option<usize>,
    /// Imputation quantiles for study II.
    #[serde(default)]
    pub taus: Vec<f64>,
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
