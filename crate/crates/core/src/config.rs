//! Experiment configuration file (TOML).
//!
//! One file describes the network, the primitive distribution families, the
//! policy thresholds, and the experiment layout. Unknown keys are hard
//! errors so typos cannot silently fall back to defaults. All horizons are
//! in scaled (diffusion) time; the engine converts to the unscaled clock via
//! `r^2` internally.

use crate::linalg::Mat;
use crate::model::{DistributionFamily, ModelError, NetworkSpec};
use crate::simengine::PolicyParams;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config schema version {0} unsupported (expected {CONFIG_SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Validate,
    SingleRun,
    ConvergeErgodic,
    ConvergeDiscounted,
    HgiOnly,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Validate => "validate",
            Mode::SingleRun => "single-run",
            Mode::ConvergeErgodic => "converge-ergodic",
            Mode::ConvergeDiscounted => "converge-discounted",
            Mode::HgiOnly => "hgi-only",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "validate" => Ok(Mode::Validate),
            "single-run" => Ok(Mode::SingleRun),
            "converge-ergodic" => Ok(Mode::ConvergeErgodic),
            "converge-discounted" => Ok(Mode::ConvergeDiscounted),
            "hgi-only" => Ok(Mode::HgiOnly),
            other => Err(format!(
                "unknown mode {other:?}; expected validate, single-run, converge-ergodic, converge-discounted, or hgi-only"
            )),
        }
    }
}

/// Network block: either inline arrays or a reference to another TOML file
/// containing an inline block.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub incidence: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub capacity: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha_bar: Option<Vec<f64>>,
    #[serde(default)]
    pub beta_bar: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma_u: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma_v: Option<Vec<f64>>,
    #[serde(default)]
    pub holding_cost: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionsSection {
    pub arrival: Vec<DistributionFamily>,
    pub service: Vec<DistributionFamily>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub c1: f64,
    pub c2: f64,
    pub kappa: f64,
}

fn default_jobs() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub mode: Mode,
    pub r_grid: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_discount_tolerance() -> f64 {
    1e-4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonsSection {
    /// Scaled averaging window for the ergodic cost.
    pub ergodic_t: f64,
    /// Discount rate for the discounted cost.
    #[serde(default)]
    pub discount_rate: Option<f64>,
    /// Target relative mass allowed past the truncation horizon.
    #[serde(default = "default_discount_tolerance")]
    pub discount_tolerance: f64,
}

fn default_rbm_dt() -> f64 {
    1e-3
}

fn default_rbm_t() -> f64 {
    5e3
}

fn default_burn_in() -> f64 {
    0.2
}

fn default_rbm_replications() -> usize {
    8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbmSection {
    #[serde(default = "default_rbm_dt")]
    pub dt: f64,
    #[serde(default = "default_rbm_t")]
    pub horizon: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_rbm_replications")]
    pub replications: usize,
}

impl Default for RbmSection {
    fn default() -> Self {
        RbmSection {
            dt: default_rbm_dt(),
            horizon: default_rbm_t(),
            burn_in: default_burn_in(),
            replications: default_rbm_replications(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub network: NetworkSection,
    pub distributions: DistributionsSection,
    pub policy: PolicySection,
    pub experiment: ExperimentSection,
    pub horizons: HorizonsSection,
    #[serde(default)]
    pub rbm: RbmSection,
}

impl ExperimentConfig {
    pub fn from_str_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion(cfg.schema_version));
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_str_toml(&text)?;
        // resolve a network file reference relative to the config file
        if let Some(file) = cfg.network.file.clone() {
            let resolved = if file.is_relative() {
                path.parent().map_or(file.clone(), |d| d.join(&file))
            } else {
                file
            };
            let text = std::fs::read_to_string(&resolved)
                .map_err(|source| ConfigError::Io { path: resolved.clone(), source })?;
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            struct NetworkFile {
                network: NetworkSection,
            }
            let nf: NetworkFile = toml::from_str(&text)?;
            if nf.network.file.is_some() {
                return Err(ConfigError::Invalid("network files cannot nest references".into()));
            }
            cfg.network = nf.network;
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.experiment.r_grid.is_empty() {
            return Err(ConfigError::Invalid("r_grid must not be empty".into()));
        }
        if self.experiment.r_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::Invalid("r_grid must be strictly ascending".into()));
        }
        if self.experiment.replications == 0 {
            return Err(ConfigError::Invalid("replications must be positive".into()));
        }
        if self.experiment.jobs == 0 {
            return Err(ConfigError::Invalid("jobs must be positive".into()));
        }
        if self.horizons.ergodic_t <= 0.0 {
            return Err(ConfigError::Invalid("ergodic_t must be positive".into()));
        }
        if self.experiment.mode == Mode::ConvergeDiscounted && self.horizons.discount_rate.is_none()
        {
            return Err(ConfigError::Invalid(
                "converge-discounted requires horizons.discount_rate".into(),
            ));
        }
        if let Some(v) = self.horizons.discount_rate {
            if v <= 0.0 {
                return Err(ConfigError::Invalid("discount_rate must be positive".into()));
            }
        }
        Ok(())
    }

    /// Builds the network spec from the inline block (a file reference must
    /// already have been resolved by [`ExperimentConfig::from_file`]).
    pub fn network_spec(&self) -> Result<NetworkSpec, ConfigError> {
        let spec = build_network_spec(&self.network)?;
        if self.distributions.arrival.len() != spec.n_classes()
            || self.distributions.service.len() != spec.n_classes()
        {
            return Err(ConfigError::Invalid(format!(
                "distribution lists must have one family per class ({})",
                spec.n_classes()
            )));
        }
        Ok(spec)
    }

    pub fn policy_params(&self) -> PolicyParams {
        PolicyParams { c1: self.policy.c1, c2: self.policy.c2, kappa: self.policy.kappa }
    }
}

/// Builds a [`NetworkSpec`] from an inline network section.
pub fn build_network_spec(n: &NetworkSection) -> Result<NetworkSpec, ConfigError> {
    if n.file.is_some() {
        return Err(ConfigError::Invalid(
            "network.file must be resolved before building the spec".into(),
        ));
    }
    let missing = |name: &str| ConfigError::Invalid(format!("network.{name} is required inline"));
    let incidence = n.incidence.clone().ok_or_else(|| missing("incidence"))?;
    let width = incidence.first().map_or(0, Vec::len);
    if width == 0 || incidence.iter().any(|row| row.len() != width) {
        return Err(ConfigError::Invalid(
            "network.incidence must be a nonempty rectangular matrix".into(),
        ));
    }
    let k = Mat::from_rows(incidence);
    Ok(NetworkSpec::new(
        k,
        n.capacity.clone().ok_or_else(|| missing("capacity"))?,
        n.alpha.clone().ok_or_else(|| missing("alpha"))?,
        n.beta.clone().ok_or_else(|| missing("beta"))?,
        n.alpha_bar.clone().ok_or_else(|| missing("alpha_bar"))?,
        n.beta_bar.clone().ok_or_else(|| missing("beta_bar"))?,
        n.sigma_u.clone().ok_or_else(|| missing("sigma_u"))?,
        n.sigma_v.clone().ok_or_else(|| missing("sigma_v"))?,
        n.holding_cost.clone().ok_or_else(|| missing("holding_cost"))?,
    )?)
}

/// The canonical two-resource example config, used by tests and shipped as a
/// quick start.
pub fn example_config_toml() -> &'static str {
    r#"schema_version = 1

[network]
incidence = [[1, 0, 1], [0, 1, 1]]
capacity = [2.0, 2.0]
alpha = [1.0, 1.0, 1.0]
beta = [1.0, 1.0, 1.0]
alpha_bar = [0.22, 0.22, 0.22]
beta_bar = [0.3, 0.3, 0.3]
sigma_u = [1.0, 1.0, 1.0]
sigma_v = [1.0, 1.0, 1.0]
holding_cost = [1.0, 1.0, 1.0]

[distributions]
arrival = ["exponential", "exponential", "exponential"]
service = ["exponential", "exponential", "exponential"]

[policy]
c1 = 1.0
c2 = 2.0
kappa = 0.2

[experiment]
mode = "converge-ergodic"
r_grid = [4, 8, 16, 32]
replications = 64
seed = 42
output_dir = "out"
jobs = 2

[horizons]
ergodic_t = 200.0
discount_rate = 0.1

[rbm]
dt = 1e-3
horizon = 5000.0
burn_in = 0.2
replications = 8
"#
}
