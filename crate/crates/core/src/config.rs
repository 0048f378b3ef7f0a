//! Experiment configuration: TOML (or a summary's JSON echo), dotted-key
//! overrides and instance construction.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::aggregation::{trivial_aggregation, Aggregation};
use crate::envs::{
    chain_mdp, compress_rewards, expand_aggregate_mdp, random_mdp, DuplicationSpec, EnvError,
};
use crate::harness::{HarnessError, Instance};
use crate::mdp::EpisodicMdp;

/// Default cap on `S·S·A·H`, the cost of one exact policy evaluation.
pub const DEFAULT_EVALUATION_BUDGET: u64 = 50_000_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("override `{raw}`: {reason}")]
    Override { raw: String, reason: String },
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("{path}: {message}")]
    Document { path: String, message: String },
}

/// Which environment to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    Chain {
        horizon: usize,
        length: usize,
        #[serde(default)]
        slip: f64,
    },
    Random {
        horizon: usize,
        states: usize,
        actions: usize,
        #[serde(default)]
        sparsity: Option<usize>,
        seed: u64,
    },
    /// Copies of a seeded random base MDP. Base rewards are compressed to
    /// `[η, 1 − η]` so that the perturbed rewards stay in `[0, 1]`.
    Duplication {
        horizon: usize,
        latent_states: usize,
        actions: usize,
        copies: usize,
        #[serde(default)]
        perturbation: f64,
        #[serde(default)]
        sparsity: Option<usize>,
        seed: u64,
    },
    /// A duplication recipe stored as JSON.
    DuplicationFile { path: PathBuf },
    /// An MDP stored as JSON.
    File { path: PathBuf },
}

/// Which aggregation to use.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AggregationSpec {
    /// The generator's own aggregation; trivial when it has none.
    #[default]
    Native,
    Trivial,
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    Aqucb,
    /// Same update with the bonus removed.
    Sarsa,
}

/// `ε` in the bonus: a number, or `"auto"` for the measured aggregation error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum EpsilonSetting {
    #[default]
    Auto,
    Value(f64),
}

impl EpsilonSetting {
    pub fn resolve(self, measured: f64) -> f64 {
        match self {
            Self::Auto => measured,
            Self::Value(v) => v,
        }
    }
}

impl Serialize for EpsilonSetting {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Auto => serializer.serialize_str("auto"),
            Self::Value(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for EpsilonSetting {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Ok(Self::Value(v)),
            Raw::Text(s) if s == "auto" => Ok(Self::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"auto\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default)]
    pub name: AgentKind,
    #[serde(alias = "K")]
    pub episodes: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub epsilon: EpsilonSetting,
}

fn default_delta() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Exact evaluation stride; defaults to 1 up to 10⁴ episodes and 10 above.
    #[serde(default)]
    pub stride: Option<u64>,
    #[serde(default = "default_budget")]
    pub evaluation_budget: u64,
    #[serde(default)]
    pub policy_snapshot_stride: Option<u64>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            stride: None,
            evaluation_budget: DEFAULT_EVALUATION_BUDGET,
            policy_snapshot_stride: None,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_budget() -> u64 {
    DEFAULT_EVALUATION_BUDGET
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub aggregation: AggregationSpec,
    pub agent: AgentConfig,
    #[serde(default)]
    pub harness: HarnessConfig,
    #[serde(default, skip_serializing_if = "is_default_output")]
    pub output: OutputConfig,
}

fn is_default_output(o: &OutputConfig) -> bool {
    o.dir.is_none()
}

/// Bare override keys that do not match a key present in the document.
const ALIASES: &[(&str, &str)] = &[
    ("K", "agent.episodes"),
    ("episodes", "agent.episodes"),
    ("delta", "agent.delta"),
    ("epsilon", "agent.epsilon"),
    ("agent", "agent.name"),
    ("seeds", "harness.seeds"),
    ("stride", "harness.stride"),
    ("generator", "environment.generator"),
];

impl ExperimentConfig {
    /// Reads a TOML config, or the JSON summary of an earlier run (its
    /// `config` echo), then applies `overrides`. Relative paths inside the
    /// document are resolved against its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let origin = path.display().to_string();
        let is_json =
            path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        let mut cfg = if is_json {
            Self::from_json_str(&text, &origin, overrides)?
        } else {
            Self::from_toml_str(&text, &origin, overrides)?
        };
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn from_toml_str(
        text: &str,
        origin: &str,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        // Parse the untouched text first so errors point at its lines.
        let direct: Result<Self, _> = toml::from_str(text);
        let parse_err = |e: toml::de::Error| ConfigError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        };
        if overrides.is_empty() {
            return direct.map_err(parse_err);
        }
        direct.map_err(parse_err)?;
        let mut table: toml::Table = toml::from_str(text).map_err(parse_err)?;
        normalize_aliases(&mut table);
        for raw in overrides {
            apply_override(&mut table, raw)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse {
                origin: format!("{origin} (after overrides)"),
                message: e.to_string(),
            })
    }

    /// Accepts either a bare config object or a summary with a `config` field.
    pub fn from_json_str(
        text: &str,
        origin: &str,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let parse_err = |e: serde_json::Error| ConfigError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        };
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(parse_err)?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        strip_nulls(&mut value);
        // Round-trip through TOML so both formats share the override logic.
        let mut table: toml::Table = serde_json::from_value(value).map_err(parse_err)?;
        normalize_aliases(&mut table);
        for raw in overrides {
            apply_override(&mut table, raw)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse {
                origin: origin.to_string(),
                message: e.to_string(),
            })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.environment {
            EnvironmentSpec::File { path } | EnvironmentSpec::DuplicationFile { path } => fix(path),
            _ => {}
        }
        if let AggregationSpec::File { path } = &mut self.aggregation {
            fix(path);
        }
        if let Some(dir) = &mut self.output.dir {
            fix(dir);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field: &str, reason: String| {
            Err(ConfigError::Invalid {
                field: field.into(),
                reason,
            })
        };
        if self.agent.episodes == 0 {
            return invalid("agent.episodes", "must be at least 1".into());
        }
        if !(self.agent.delta > 0.0 && self.agent.delta < 1.0) {
            return invalid(
                "agent.delta",
                format!("must lie in (0, 1), got {}", self.agent.delta),
            );
        }
        if let EpsilonSetting::Value(e) = self.agent.epsilon {
            if !(e.is_finite() && e >= 0.0) {
                return invalid("agent.epsilon", format!("must be nonnegative, got {e}"));
            }
        }
        if self.harness.seeds.is_empty() {
            return invalid("harness.seeds", "needs at least one seed".into());
        }
        if self.harness.stride == Some(0) {
            return invalid("harness.stride", "must be at least 1".into());
        }
        Ok(())
    }

    /// The config as recorded in a summary: everything except output paths.
    pub fn echo(&self) -> Self {
        Self {
            output: OutputConfig::default(),
            ..self.clone()
        }
    }

    pub fn build_instance(&self) -> Result<Instance, HarnessError> {
        let (mdp, native) = build_environment(&self.environment)?;
        let aggregation = match &self.aggregation {
            AggregationSpec::Native => native,
            AggregationSpec::Trivial => {
                trivial_aggregation(mdp.horizon(), mdp.num_states(), mdp.num_actions())
            }
            AggregationSpec::File { path } => read_json(path)?,
        };
        Instance::new(mdp, aggregation)
    }
}

/// Builds an environment and its native aggregation (trivial for generators
/// without one).
pub fn build_environment(
    spec: &EnvironmentSpec,
) -> Result<(EpisodicMdp, Aggregation), ConfigError> {
    let trivial = |mdp: EpisodicMdp| {
        let agg = trivial_aggregation(mdp.horizon(), mdp.num_states(), mdp.num_actions());
        (mdp, agg)
    };
    Ok(match spec {
        EnvironmentSpec::Chain {
            horizon,
            length,
            slip,
        } => trivial(chain_mdp(*horizon, *length, *slip)?),
        EnvironmentSpec::Random {
            horizon,
            states,
            actions,
            sparsity,
            seed,
        } => trivial(random_mdp(*horizon, *states, *actions, *sparsity, *seed)?),
        EnvironmentSpec::Duplication { .. } => {
            let expanded =
                expand_aggregate_mdp(&duplication_spec(spec)?.expect("duplication generator"))?;
            (expanded.mdp, expanded.aggregation)
        }
        EnvironmentSpec::DuplicationFile { path } => {
            let recipe: DuplicationSpec = read_json(path)?;
            let expanded = expand_aggregate_mdp(&recipe)?;
            (expanded.mdp, expanded.aggregation)
        }
        EnvironmentSpec::File { path } => trivial(read_json(path)?),
    })
}

/// The duplication recipe behind a `duplication` environment, if it is one.
pub fn duplication_spec(spec: &EnvironmentSpec) -> Result<Option<DuplicationSpec>, ConfigError> {
    let EnvironmentSpec::Duplication {
        horizon,
        latent_states,
        actions,
        copies,
        perturbation,
        sparsity,
        seed,
    } = spec
    else {
        return Ok(None);
    };
    if !(*perturbation >= 0.0 && *perturbation < 0.5) {
        return Err(ConfigError::Invalid {
            field: "environment.perturbation".into(),
            reason: format!("must lie in [0, 0.5), got {perturbation}"),
        });
    }
    let base = random_mdp(*horizon, *latent_states, *actions, *sparsity, *seed)?;
    Ok(Some(DuplicationSpec {
        base_mdp: compress_rewards(&base, *perturbation)?,
        copies_per_state: *copies,
        reward_perturbation: *perturbation,
        seed: seed.wrapping_add(1),
    }))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Document {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// TOML has no null; an absent key means the same thing here.
fn strip_nulls(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.retain(|_, v| !v.is_null());
            map.values_mut().for_each(strip_nulls);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_nulls),
        _ => {}
    }
}

fn normalize_aliases(table: &mut toml::Table) {
    if let Some(toml::Value::Table(agent)) = table.get_mut("agent") {
        if let Some(k) = agent.remove("K") {
            agent.entry("episodes").or_insert(k);
        }
    }
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back
/// to a plain string.
fn parse_override_value(text: &str) -> toml::Value {
    let wrapped = format!("v = {text}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

/// Applies one `key=value` override. Dotted keys address nested tables;
/// a bare key must exist in exactly one section or be a known alias.
pub fn apply_override(table: &mut toml::Table, raw: &str) -> Result<(), ConfigError> {
    let err = |reason: String| ConfigError::Override {
        raw: raw.to_string(),
        reason,
    };
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| err("expected key=value".into()))?;
    let key = key.trim();
    let value = parse_override_value(value.trim());
    if key.is_empty() {
        return Err(err("empty key".into()));
    }

    let path: Vec<String> = if key.contains('.') {
        key.split('.').map(str::to_string).collect()
    } else {
        let holders: Vec<&String> = table
            .iter()
            .filter(|(_, v)| v.as_table().is_some_and(|t| t.contains_key(key)))
            .map(|(k, _)| k)
            .collect();
        match holders.as_slice() {
            [section] => vec![section.to_string(), key.to_string()],
            [] => match ALIASES.iter().find(|(alias, _)| *alias == key) {
                Some((_, target)) => target.split('.').map(str::to_string).collect(),
                None => return Err(err(format!("unknown key `{key}`"))),
            },
            many => {
                let names: Vec<&str> = many.iter().map(|s| s.as_str()).collect();
                return Err(err(format!(
                    "`{key}` is ambiguous between sections {}",
                    names.join(", ")
                )));
            }
        }
    };

    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cursor = table;
    for part in parents {
        let entry = cursor
            .entry(part.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| err(format!("`{part}` is not a section")))?;
    }
    cursor.insert(last.clone(), value);
    Ok(())
}
