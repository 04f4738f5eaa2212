//! Run manifests: the full configuration plus `manifest.*` keys recording the code
//! version, creation time, seed and output files. A manifest is itself a valid config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::io::config::{format_config, manifest_entries, parse_config, MANIFEST_PREFIX};
use crate::io::path_error;
use crate::sim::ExperimentConfig;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub code_version: String,
    /// Unix seconds.
    pub created_at: u64,
    pub seed: u64,
    /// Output role (`events`, `histogram`, ...) to file name.
    pub outputs: BTreeMap<String, String>,
}

/// `SOURCE_DATE_EPOCH` when set, otherwise the current time.
pub fn creation_timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()))
}

impl RunManifest {
    pub fn new(config: ExperimentConfig) -> Self {
        Self {
            seed: config.seed,
            config,
            code_version: CODE_VERSION.to_string(),
            created_at: creation_timestamp(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn with_output(mut self, role: &str, file: &str) -> Self {
        self.outputs.insert(role.to_string(), file.to_string());
        self
    }

    pub fn to_text(&self) -> String {
        let mut s = format_config(&self.config);
        let _ = writeln!(s, "{MANIFEST_PREFIX}code_version = {}", self.code_version);
        let _ = writeln!(s, "{MANIFEST_PREFIX}created_at = {}", self.created_at);
        let _ = writeln!(s, "{MANIFEST_PREFIX}seed = {}", self.seed);
        for (k, v) in &self.outputs {
            let _ = writeln!(s, "{MANIFEST_PREFIX}output.{k} = {v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config = parse_config(text, None)?;
        let mut meta = manifest_entries(text)?;
        let mut take = |k: &str| {
            meta.remove(k)
                .ok_or_else(|| Error::MissingKeys(vec![format!("{MANIFEST_PREFIX}{k}")]))
        };
        let code_version = take("code_version")?;
        let num = |k: &str, v: String| {
            v.parse::<u64>().map_err(|_| {
                Error::invalid(
                    format!("{MANIFEST_PREFIX}{k}"),
                    format!("expected an integer, got `{v}`"),
                )
            })
        };
        let created_at = num("created_at", take("created_at")?)?;
        let seed = num("seed", take("seed")?)?;
        let mut outputs = BTreeMap::new();
        for (k, v) in meta {
            match k.strip_prefix("output.") {
                Some(role) => {
                    outputs.insert(role.to_string(), v);
                }
                None => return Err(Error::UnknownKey(format!("{MANIFEST_PREFIX}{k}"))),
            }
        }
        Ok(Self {
            config,
            code_version,
            created_at,
            seed,
            outputs,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| path_error(path, e))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| path_error(path, e))?)
    }
}
