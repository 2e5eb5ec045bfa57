//! Run configuration: one structured document (TOML or JSON), flag
//! overrides, explicit defaults, and a complete echo for provenance.
//!
//! The echo written next to the results is itself a valid `--config` file;
//! re-running from it reproduces every output byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mvlab::engine::InitialLaw;
use mvlab::experiments::acceptance::DEFAULT_SEED;
use mvlab::model::{make_builtin_model, FamilyId, ModelSpec, ProbeConfig};

/// Error classified for the exit code: config problems exit with 2.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Run(msg) => write!(f, "run error: {msg}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

pub fn config_err(msg: impl std::fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

pub fn run_err(msg: impl std::fmt::Display) -> CliError {
    CliError::Run(msg.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Rayon worker count; 0 lets rayon choose.
    pub workers: usize,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub initial: InitialConfig,
    pub sweep: SweepConfig,
    pub glivenko: GlivenkoConfig,
    pub picard: PicardConfig,
    pub yamada: YamadaConfig,
    pub validate: ValidateConfig,
    pub accept: AcceptConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            workers: 0,
            out: PathBuf::from("mvlab-out"),
            model: ModelConfig::default(),
            initial: InitialConfig::default(),
            sweep: SweepConfig::default(),
            glivenko: GlivenkoConfig::default(),
            picard: PicardConfig::default(),
            yamada: YamadaConfig::default(),
            validate: ValidateConfig::default(),
            accept: AcceptConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub family: String,
    pub params: BTreeMap<String, f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { family: "linear_mf".into(), params: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    /// `point`, `uniform`, or `gaussian`.
    pub law: String,
    pub mean: f64,
    pub var: f64,
    pub lo: f64,
    pub hi: f64,
    pub point: Vec<f64>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { law: "gaussian".into(), mean: 1.0, var: 0.25, lo: 0.0, hi: 1.0, point: vec![0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n: usize,
    pub n_list: Vec<usize>,
    pub factors: Vec<usize>,
    pub factor: usize,
    pub factor_ref: usize,
    pub m: usize,
    pub t: f64,
    pub replications: usize,
    pub q: f64,
    /// Extra reference particles as a multiple of the largest ensemble.
    pub n_extra_mult: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n: 256,
            n_list: vec![64, 128, 256, 512],
            factors: vec![32, 64, 128, 256],
            factor: 4,
            factor_ref: 4,
            m: 2048,
            t: 1.0,
            replications: 8,
            q: 2.0,
            n_extra_mult: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlivenkoConfig {
    pub p: f64,
    pub dim: usize,
    pub surrogate_mult: usize,
    pub n_proj: usize,
}

impl Default for GlivenkoConfig {
    fn default() -> Self {
        Self { p: 1.0, dim: 1, surrogate_mult: 64, n_proj: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardConfig {
    pub k_max: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { k_max: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct YamadaConfig {
    pub gamma: f64,
    pub eps: f64,
    /// Use the one-parameter specialization `gamma = exp(1/eps)`.
    pub eps_only: bool,
    pub grid_points: usize,
    pub x_max: f64,
}

impl Default for YamadaConfig {
    fn default() -> Self {
        Self { gamma: (2.0f64).exp(), eps: 0.1, eps_only: false, grid_points: 512, x_max: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub box_radius: f64,
    pub n_pairs: usize,
    pub tol: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self { box_radius: 2.0, n_pairs: 256, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceptConfig {
    /// `quick` or `full`.
    pub budget: String,
    /// Restrict to criteria whose name contains this substring.
    pub only: Option<String>,
    pub zero_tolerance: bool,
}

impl Default for AcceptConfig {
    fn default() -> Self {
        Self { budget: "full".into(), only: None, zero_tolerance: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
    pub paths_csv: bool,
    pub paths_bin: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { csv: true, json: true, svg: false, paths_csv: true, paths_bin: true }
    }
}

impl RunConfig {
    /// Load from TOML (default) or JSON (by extension), rejecting unknown
    /// keys with the parser's line/field diagnostic.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        if is_json {
            serde_json::from_str(&text)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
        }
    }

    /// Constraints shared by every subcommand; per-plan divisibility is
    /// checked where the fields are actually used.
    pub fn validate(&self) -> Result<(), CliError> {
        if !self.sweep.m.is_power_of_two() {
            return Err(config_err(format!(
                "sweep.m = {} must be a power of two",
                self.sweep.m
            )));
        }
        if self.sweep.replications == 0 {
            return Err(config_err("sweep.replications must be at least 1"));
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<ModelSpec, CliError> {
        let family: FamilyId = self.model.family.parse().map_err(config_err)?;
        make_builtin_model(family, &self.model.params).map_err(config_err)
    }

    pub fn build_initial(&self) -> Result<InitialLaw, CliError> {
        match self.initial.law.as_str() {
            "point" => Ok(InitialLaw::Point(self.initial.point.clone())),
            "uniform" => Ok(InitialLaw::Uniform { lo: self.initial.lo, hi: self.initial.hi }),
            "gaussian" => Ok(InitialLaw::Gaussian { mean: self.initial.mean, var: self.initial.var }),
            other => Err(config_err(format!(
                "initial.law must be point|uniform|gaussian, got `{other}`"
            ))),
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            box_radius: self.validate.box_radius,
            n_pairs: self.validate.n_pairs,
            seed: self.seed,
            tol: self.validate.tol,
        }
    }

    pub fn n_extra(&self, max_n: usize) -> usize {
        self.sweep.n_extra_mult * max_n
    }
}
