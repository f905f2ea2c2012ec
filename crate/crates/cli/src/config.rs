//! The pipeline config file. Every field is optional; flags override it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mixstereo::augment::AugmentConfig;
use mixstereo::dataset::Catalog;
use mixstereo::model::Architecture;
use mixstereo::pipeline::ReplicationPolicy;
use serde::{Deserialize, Serialize};

use crate::error::{read_file, CliError};

/// A named policy (`pretrain`, `finetune`, `uniform`) or explicit factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicySpec {
    Named(String),
    Factors(BTreeMap<String, u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub catalog: Option<PathBuf>,
    pub policy: PolicySpec,
    pub augment: AugmentConfig,
    /// `standard`, `small`, or a path to an architecture JSON file.
    pub arch: String,
    pub weights: Option<PathBuf>,
    pub iters: usize,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            catalog: None,
            policy: PolicySpec::Named("pretrain".into()),
            augment: AugmentConfig::default(),
            arch: "standard".into(),
            weights: None,
            iters: 32,
            out_dir: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = read_file(path)?;
        let cfg: PipelineConfig = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::domain(format!("{}: {e}", path.display())))?;
        cfg.augment
            .validate()
            .map_err(|e| CliError::domain(format!("{}: augment: {e}", path.display())))?;
        Ok(cfg)
    }
}

pub fn load_catalog(path: Option<&Path>) -> Result<Catalog, CliError> {
    match path {
        Some(p) => Ok(Catalog::load(p)?),
        None => Ok(Catalog::reference()),
    }
}

/// `--policy` accepts a name or a JSON file holding a name-to-factor map.
pub fn resolve_policy(flag: Option<&str>, cfg: &PolicySpec, catalog: &Catalog) -> Result<ReplicationPolicy, CliError> {
    let spec = match flag {
        Some(s) if Path::new(s).is_file() => {
            let bytes = read_file(Path::new(s))?;
            let factors: BTreeMap<String, u32> =
                serde_json::from_slice(&bytes).map_err(|e| CliError::domain(format!("{s}: {e}")))?;
            PolicySpec::Factors(factors)
        }
        Some(s) => PolicySpec::Named(s.to_string()),
        None => cfg.clone(),
    };
    Ok(match spec {
        PolicySpec::Named(n) => ReplicationPolicy::named(&n, &catalog.datasets)?,
        PolicySpec::Factors(f) => ReplicationPolicy::new(f)?,
    })
}

pub fn resolve_arch(spec: &str) -> Result<Architecture, CliError> {
    let arch = match spec {
        "standard" => Architecture::standard(),
        "small" => Architecture::small(),
        path => {
            let bytes = read_file(Path::new(path))?;
            serde_json::from_slice(&bytes).map_err(|e| CliError::domain(format!("{path}: {e}")))?
        }
    };
    arch.validate()?;
    Ok(arch)
}
