//! Strict JSON configs, one per command. Relative paths resolve against
//! the config file's directory.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::ManifoldSpec;
use crate::nn::OptimizerKind;
use crate::rip::DEFAULT_SUPPORT_CAP;

use super::model::ModelConfig;

fn default_halve_every() -> u64 {
    crate::nn::DEFAULT_HALVE_EVERY
}

/// Totals at reporting precision: thousands of parameters
/// and millions of FLOPs with two decimals and thousands separators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountExpect {
    pub params_thousands: String,
    pub flops_millions: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub expect: Option<CountExpect>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    /// Entries `N(0, 1/n)`.
    Gaussian,
    /// Orthonormal rows scaled by `sqrt(d/n)`.
    Orthoprojector,
    /// `n = d` identity.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub kind: MatrixKind,
    pub n: usize,
    pub d: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    RandomOrthogonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSection {
    pub spec: ManifoldSpec,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RipConfig {
    pub matrix: MatrixConfig,
    pub s: usize,
    /// Enumerate every support (refused beyond `exact_cap` supports).
    #[serde(default = "yes")]
    pub exact: bool,
    #[serde(default = "default_cap")]
    pub exact_cap: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Also estimate the constant over `{y : ‖Wy‖₀ ≤ s}`.
    #[serde(default)]
    pub transform: Option<TransformKind>,
    /// Also measure the distortion of sampled manifold points.
    #[serde(default)]
    pub manifold: Option<ManifoldSection>,
    #[serde(default)]
    pub seed: u64,
}

fn yes() -> bool {
    true
}
fn default_cap() -> u64 {
    DEFAULT_SUPPORT_CAP
}
fn default_trials() -> usize {
    1000
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverExpect {
    /// Lower bound on the success rate at the largest `n`.
    #[serde(default)]
    pub min_rate_at_max_n: Option<f64>,
    /// Upper bound on the success rate at the smallest `n`.
    #[serde(default)]
    pub max_rate_at_min_n: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverConfig {
    pub d: usize,
    pub k: usize,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub expect: Option<RecoverExpect>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// A directory with the four IDX files under their usual names,
    /// optionally gzip-compressed.
    Mnist {
        dir: PathBuf,
        #[serde(default)]
        train_count: Option<usize>,
        #[serde(default)]
        test_count: Option<usize>,
    },
    /// Binary batches; test data is standardized with training statistics.
    Cifar10 {
        train: Vec<PathBuf>,
        test: Vec<PathBuf>,
        #[serde(default)]
        train_count: Option<usize>,
        #[serde(default)]
        test_count: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainExpect {
    pub max_test_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCommandConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "default_halve_every")]
    pub halve_every: u64,
    /// Drives projections, initialization and shuffling.
    #[serde(default)]
    pub seed: u64,
    /// Fill the `seconds` column; reports are then no longer reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub expect: Option<TrainExpect>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// `sin(⟨w, x⟩)` for a fixed random unit vector `w`.
    Sin,
    /// Constant zero.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressivityExpect {
    /// Median RMSE at the largest `n` may exceed the smallest-`n` median by
    /// at most this much.
    pub trend_slack: f64,
    /// Bound on RP RMSE at `matched_n` over the full-input network's RMSE.
    pub matched_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressivityConfig {
    pub d: usize,
    pub k: usize,
    pub n_grid: Vec<usize>,
    /// Trainable width of each hidden layer of the projected network.
    pub hidden: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    #[serde(default = "default_halve_every")]
    pub halve_every: u64,
    /// Independent repetitions (projection, initialization, shuffling).
    pub repeats: usize,
    #[serde(default = "sin")]
    pub target: TargetKind,
    /// Width whose trainable-parameter count the full-input network matches.
    #[serde(default)]
    pub matched_n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub expect: Option<ExpressivityExpect>,
}

fn sin() -> TargetKind {
    TargetKind::Sin
}
