use std::path::{Path, PathBuf};

use histwalk_core::experiments::StepsRule;
use histwalk_core::{ModelSpec, Version};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelSpec,
    #[serde(default)]
    pub run: RunConfig,
}

/// Defaults for the run-time flags; command-line flags take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: Option<Version>,
    pub steps: Option<u64>,
    pub replicas: Option<u64>,
    pub seed: Option<u64>,
    pub n_grid: Option<Vec<usize>>,
    pub steps_rule: Option<StepsRule>,
    pub samples: Option<u64>,
    pub exit_cap: Option<u64>,
    pub tie_tol: Option<f64>,
    pub output: Option<PathBuf>,
}

pub fn load(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let config: Config = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    config
        .model
        .check_structure()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(config)
}

/// Parses `start:stop:step` into the inclusive arithmetic grid.
pub fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, h] = parts.as_slice() else {
        return Err(format!("expected start:stop:step, got {s:?}"));
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    let (a, b, h) = (num(a)?, num(b)?, num(h)?);
    if !(a.is_finite() && b.is_finite() && h > 0.0 && h.is_finite()) || b < a {
        return Err(format!("need finite start <= stop and step > 0, got {s:?}"));
    }
    let count = ((b - a) / h + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| a + k as f64 * h).collect())
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|e| format!("{x:?}: {e}")))
        .collect()
}
