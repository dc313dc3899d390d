use std::path::{Path, PathBuf};

use motion_mask::evaluation::ScenarioOptions;
use motion_mask::pipeline::PipelineConfig;
use motion_mask::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSettings {
    pub users: usize,
    pub per_session: usize,
    pub scenario: ScenarioOptions,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self { users: 20, per_session: 10, scenario: ScenarioOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeSettings {
    pub bench_frames: usize,
    pub mean_budget_ms: f64,
    pub p99_budget_ms: f64,
}

impl Default for RuntimeSettings {
    fn default() -> Self {
        Self { bench_frames: 2000, mean_budget_ms: 5.0, p99_budget_ms: 15.0 }
    }
}

/// Settings read from `--config`, then adjusted by `--set` and dedicated flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub seed: u64,
    pub paths: Paths,
    pub pipeline: PipelineConfig,
    pub evaluation: EvaluationSettings,
    pub runtime: RuntimeSettings,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `dotted.key=value` overrides; values are parsed as TOML scalars, falling back to strings.
    pub fn with_overrides(self, sets: &[String]) -> Result<Self> {
        if sets.is_empty() {
            return Ok(self);
        }
        let mut root = toml::Value::try_from(&self).map_err(|e| Error::Config(e.to_string()))?;
        for s in sets {
            let (key, raw) = s
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
            let value = parse_scalar(raw.trim());
            set_path(&mut root, key.trim(), value)?;
        }
        root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Copies the global seed into every seeded component.
    pub fn propagate_seed(&mut self) {
        self.pipeline.train.seed = self.seed;
        self.evaluation.scenario.seed = self.seed;
        self.evaluation.scenario.train.seed = self.seed;
        self.evaluation.scenario.forest.seed = self.seed;
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (i, p) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Usage(format!("{key}: {} is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            if !table.contains_key(*p) && !optional_key(p) {
                return Err(Error::Usage(format!("unknown setting {key}")));
            }
            table.insert((*p).to_string(), value);
            return Ok(());
        }
        cur = table.get_mut(*p).ok_or_else(|| Error::Usage(format!("unknown setting {key}")))?;
    }
    Ok(())
}

/// Optional fields are absent from the serialized form when unset.
fn optional_key(k: &str) -> bool {
    matches!(
        k,
        "clip_norm"
            | "max_features"
            | "data"
            | "bundle"
            | "reports"
            | "identifier"
            | "action_similarity"
            | "user_similarity"
            | "anonymizer"
            | "normalizer"
    )
}
