use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use subshuffle::sgd::{LrSchedule, ProblemSpec};

use crate::sweep::{Axis, LogRange};

/// Optional JSON config; every key mirrors the flag of the same name
/// (`lambda_max` for `--lambda-max`). Flags win over the file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<u64>,
    pub k: Option<u64>,
    pub eps0: Option<f64>,
    pub delta: Option<f64>,
    pub rounds: Option<OneOrMany>,
    pub lambda_min: Option<u32>,
    pub lambda_max: Option<u32>,
    pub exact_search: Option<bool>,
    pub bound: Option<BoundKind>,
    pub axis: Option<Axis>,
    pub values: Option<Vec<f64>>,
    pub range: Option<LogRange>,
    pub seed: Option<u64>,
    pub problem: Option<ProblemSpec>,
    pub sgd: Option<SgdSection>,
}

/// `sgd` block of a simulate config. Missing keys fall back to the top-level
/// keys of the same name, then to built-in defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSection {
    pub rounds: Option<u64>,
    pub k: Option<u64>,
    pub eps0: Option<f64>,
    pub clip: Option<f64>,
    pub lr: Option<LrSchedule>,
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub bypass_randomizer: Option<bool>,
    pub lambda_max: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(u64),
    Many(Vec<u64>),
}

impl OneOrMany {
    pub fn into_vec(self) -> Vec<u64> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Upper,
    Lower,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Flag, then config file, then error.
pub fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| anyhow!("missing --{name} (flag or `{}` in --config)", name.replace('-', "_")))
}

pub fn or_default<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn require_out(out: Option<&PathBuf>) -> Result<&PathBuf> {
    match out {
        Some(p) => Ok(p),
        None => bail!("this command writes files and needs --out <DIR>"),
    }
}
