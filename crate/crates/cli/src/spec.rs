// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use driftbranch::{InitialStateSpec, ModelParams, KERNEL_TYPES};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A complete simulation request as read from `--spec`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub model: ModelParams,
    pub init: InitialStateSpec,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    /// Step of the renewal solver used by `compare`.
    #[serde(default)]
    pub renewal_dt: Option<f64>,
}

fn default_replicas() -> usize {
    1000
}

/// Parses JSON, adding the accepted kernel types to unknown-variant errors.
pub fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let mut msg = format!("invalid {what}: {e}");
        if e.to_string().contains("unknown variant") && e.to_string().contains("product_gamma") {
            msg.push_str(&format!("\nsupported kernel types: {}", KERNEL_TYPES.join(", ")));
        }
        anyhow!(msg)
    })
}

/// An argument holding inline JSON, or `@path` naming a JSON file.
pub fn json_arg<T: DeserializeOwned>(arg: &str, what: &str) -> Result<T> {
    match arg.strip_prefix('@') {
        Some(path) => read_json(Path::new(path), what),
        None => parse_json(arg, what),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_json(&text, &format!("{what} in {}", path.display()))
}

/// Comma-separated list of times.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("invalid grid time {t:?}")))
        .collect()
}
