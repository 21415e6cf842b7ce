//! Resolved run configurations. Each subcommand starts from defaults, applies
//! the optional `--config` file (TOML, or JSON when the extension is
//! `.json`) and then any flags given on the command line.

use std::fs;
use std::path::{Path, PathBuf};

use qcpp_core::anneal::AnnealConfig;
use qcpp_core::experiment::SolverKind;
use qcpp_core::newton::NewtonConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn load_file<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading config {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("config {}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Parse(format!("config {}: {e}", path.display())))
    }
}

pub fn resolve<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T, CliError> {
    match path {
        Some(p) => load_file(p),
        None => Ok(T::default()),
    }
}

/// Copies every `Some` flag over the corresponding config field.
macro_rules! overlay {
    ($cfg:expr, $args:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })+
    };
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub orthogonality_threshold: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            d: 8,
            n: 3,
            m: 7,
            seed: 0,
            orthogonality_threshold: qcpp_core::scenario::DEFAULT_ORTHOGONALITY_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonRunConfig {
    pub seed: u64,
    pub restarts: usize,
    pub newton: NewtonConfig,
}

impl Default for NewtonRunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 50,
            newton: NewtonConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealRunConfig {
    pub anneal: AnnealConfig,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BruteConfig {}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepRunConfig {
    pub kind: SolverKind,
    pub d: usize,
    pub n: usize,
    pub m_list: Vec<usize>,
    pub seeds: Vec<u64>,
    pub restarts: usize,
    pub newton: NewtonConfig,
    pub anneal: AnnealConfig,
}

impl Default for SweepRunConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Newton,
            d: 8,
            n: 3,
            m_list: vec![3, 5, 7],
            seeds: vec![0],
            restarts: 50,
            newton: NewtonConfig::default(),
            anneal: AnnealConfig::default(),
        }
    }
}
