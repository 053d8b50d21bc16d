//! Run configuration: one JSON document per invocation.
//!
//! The document's `command` field must match the invoked subcommand; the
//! remaining fields are a flat union of what the six commands consume, each
//! command validating that its required keys are present. Unknown keys are
//! rejected so that typos fail loudly instead of silently falling back to
//! defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use mte_welfare::dgp::DgpSpec;
use mte_welfare::error::{Error, Result};
use mte_welfare::estimator::DiagnosticBounds;
use mte_welfare::harness::{ClassDescriptor, ExperimentConfig, PropensityKind, RuleKind};
use mte_welfare::policy::DecisionSet;
use mte_welfare::rules::PosteriorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Simulate,
    Fit,
    Choose,
    Welfare,
    Regret,
    Validate,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Fit => "fit",
            CommandKind::Choose => "choose",
            CommandKind::Welfare => "welfare",
            CommandKind::Regret => "regret",
            CommandKind::Validate => "validate",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    /// Master seed; the `--seed` flag overrides it.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Output directory; the `--out` flag overrides it.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Data-generating process; defaults to the reference process.
    #[serde(default)]
    pub spec: Option<DgpSpec>,
    /// Sample size for `simulate`.
    #[serde(default)]
    pub n: Option<usize>,
    /// Keep the latent columns (`y0,y1,u`) in simulated output.
    #[serde(default)]
    pub retain_latents: bool,
    /// Input dataset for `fit`, `choose`, and (optionally) `welfare`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Selection polynomial order; defaults to 2.
    #[serde(default)]
    pub k: Option<usize>,
    /// Propensity handling for `fit`/`choose`; defaults to fitted.
    #[serde(default)]
    pub propensity: Option<PropensityKind>,
    /// Policy class for `choose` and `welfare`.
    #[serde(default)]
    pub class: Option<ClassDescriptor>,
    /// Decision rule for `choose`.
    #[serde(default)]
    pub rule: Option<RuleKind>,
    /// Posterior block, required when `rule` is `bayes`.
    #[serde(default)]
    pub posterior: Option<PosteriorSpec>,
    /// Explicit decision set for `welfare`.
    #[serde(default)]
    pub decision: Option<DecisionSet>,
    /// Diagnostic thresholds for `fit`; defaults documented on the type.
    #[serde(default)]
    pub diagnostic_bounds: Option<DiagnosticBounds>,
    /// Full harness experiment for `regret`.
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
    /// Decimal digits in console reports; defaults to 6.
    #[serde(default)]
    pub precision: Option<usize>,
}

/// A parsed configuration plus the digest of its source bytes, used in every
/// provenance line the run emits.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub digest: String,
}

pub fn parse_config(path: &Path) -> Result<LoadedConfig> {
    let raw = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_str(&raw)
        .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
    if let Some(spec) = &config.spec {
        spec.validate()?;
    }
    if let Some(k) = config.k {
        if k < 2 {
            return Err(Error::Config(format!("k must be >= 2, got {k}")));
        }
    }
    if let Some(experiment) = &config.experiment {
        experiment.validate()?;
    }
    if let Some(dataset) = &config.dataset {
        if !dataset.exists() {
            return Err(Error::Config(format!(
                "dataset file {} does not exist",
                dataset.display()
            )));
        }
    }
    let hash = Sha256::digest(raw.as_bytes());
    let digest = hash.iter().take(8).map(|b| format!("{b:02x}")).collect();
    Ok(LoadedConfig { config, digest })
}

/// Default configuration for `validate` runs without a config file.
pub fn default_validate() -> LoadedConfig {
    LoadedConfig {
        config: RunConfig {
            command: CommandKind::Validate,
            seed: None,
            out: None,
            spec: None,
            n: None,
            retain_latents: false,
            dataset: None,
            k: None,
            propensity: None,
            class: None,
            rule: None,
            posterior: None,
            decision: None,
            diagnostic_bounds: None,
            experiment: None,
            precision: None,
        },
        digest: String::new(),
    }
}
