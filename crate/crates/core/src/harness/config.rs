//! Experiment configuration: a versioned TOML document plus built-in presets.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::{ChatSettings, HistoryWindow, Personality, PromptTemplateSet, RetryPolicy};
use crate::metrics::{FormationSpec, Shape};
use crate::olfati::{AlphaParams, OracleFlocker};
use crate::scripted::ScriptedKind;
use crate::sim::{AgentId, MotionLimits};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

pub const PRESETS: [&str; 4] = [
    "circle5x5",
    "triangle3x5",
    "pair10",
    "pair10-one-stationary",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(
        "unknown preset '{0}' (available: circle5x5, triangle3x5, pair10, pair10-one-stationary)"
    )]
    UnknownPreset(String),
    #[error("unknown backend '{0}' (expected oracle, chat or scripted:<kind>)")]
    UnknownBackend(String),
}

/// Which decision-maker drives an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendSpec {
    Oracle,
    Chat,
    Scripted(ScriptedKind),
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Oracle => f.write_str("oracle"),
            BackendSpec::Chat => f.write_str("chat"),
            BackendSpec::Scripted(kind) => write!(f, "scripted:{kind}"),
        }
    }
}

impl FromStr for BackendSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "oracle" => Ok(BackendSpec::Oracle),
            "chat" => Ok(BackendSpec::Chat),
            other => other
                .strip_prefix("scripted:")
                .and_then(|k| k.parse::<ScriptedKind>().ok())
                .map(BackendSpec::Scripted)
                .ok_or_else(|| ConfigError::UnknownBackend(s.to_string())),
        }
    }
}

impl Serialize for BackendSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_rounds() -> u32 {
    25
}

fn default_trials() -> u32 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub agent_count: usize,
    #[serde(default)]
    pub stationary_ids: Vec<AgentId>,
    /// Initial positions are drawn uniformly from [-w, w]².
    pub init_half_width: f64,
    pub max_velocity: f64,
    pub safe_distance: f64,
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    #[serde(default = "default_trials")]
    pub trials: u32,
    #[serde(default)]
    pub seed: u64,
    /// Abort an episode on the first unrecoverable backend failure.
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub parallel_decisions: bool,
}

fn default_half_angle() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationConfig {
    pub shape: Shape,
    pub desired_distance: f64,
    #[serde(default = "default_half_angle")]
    pub v_half_angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOverride {
    pub id: AgentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub personality: Option<Personality>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsConfig {
    /// Backend for every agent without an override.
    pub default: BackendSpec,
    #[serde(default, rename = "override", skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<AgentOverride>,
}

fn default_fraction() -> f64 {
    1.0
}

fn default_substeps() -> u32 {
    OracleFlocker::DEFAULT_SUBSTEPS
}

fn default_dt() -> f64 {
    OracleFlocker::DEFAULT_DT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub chat: ChatSettings,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub history: HistoryWindow,
    /// Include the other agents' last displacement in round prompts.
    #[serde(default)]
    pub velocities: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PromptTemplateSet>,
    #[serde(default = "default_fraction")]
    pub consensus_fraction: f64,
    /// Alpha-lattice parameters; derived from the desired distance if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<AlphaParams>,
    #[serde(default = "default_substeps")]
    pub oracle_substeps: u32,
    #[serde(default = "default_dt")]
    pub oracle_dt: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            chat: ChatSettings::default(),
            retry: RetryPolicy::default(),
            history: HistoryWindow::default(),
            velocities: false,
            templates: None,
            consensus_fraction: default_fraction(),
            oracle: None,
            oracle_substeps: default_substeps(),
            oracle_dt: default_dt(),
        }
    }
}

fn default_level() -> String {
    "info".into()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggingConfig {
    #[serde(default = "default_level")]
    pub level: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl Default for LoggingConfig {
    fn default() -> Self {
        Self {
            level: default_level(),
            out_dir: default_out_dir(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub world: WorldConfig,
    pub formation: FormationConfig,
    pub agents: AgentsConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub logging: LoggingConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        let found = raw
            .get("schema_version")
            .and_then(toml::Value::as_integer)
            .ok_or_else(|| ConfigError::Invalid("missing integer 'schema_version'".into()))?;
        if found != i64::from(CONFIG_SCHEMA_VERSION) {
            return Err(ConfigError::SchemaVersion {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: CONFIG_SCHEMA_VERSION,
            });
        }
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let (shape, count, distance, stationary, half_width) = match name {
            "circle5x5" => (Shape::Circle, 5, 5.0, vec![], 10.0),
            "triangle3x5" => (Shape::Triangle, 3, 5.0, vec![], 10.0),
            "pair10" => (Shape::PairDistance, 2, 10.0, vec![], 20.0),
            "pair10-one-stationary" => (Shape::PairDistance, 2, 10.0, vec![0], 20.0),
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        let config = Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            name: name.to_string(),
            world: WorldConfig {
                agent_count: count,
                stationary_ids: stationary,
                init_half_width: half_width,
                max_velocity: 5.0,
                safe_distance: 2.0,
                rounds: default_rounds(),
                trials: default_trials(),
                seed: 0,
                strict: false,
                parallel_decisions: false,
            },
            formation: FormationConfig {
                shape,
                desired_distance: distance,
                v_half_angle_deg: default_half_angle(),
            },
            agents: AgentsConfig {
                default: BackendSpec::Oracle,
                overrides: Vec::new(),
            },
            backend: BackendConfig::default(),
            logging: LoggingConfig::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                found: self.schema_version,
                expected: CONFIG_SCHEMA_VERSION,
            });
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return invalid(format!(
                "name '{}' must be a non-empty file-name component",
                self.name
            ));
        }
        let w = &self.world;
        if w.trials < 1 {
            return invalid("trials must be at least 1".into());
        }
        if w.rounds < 1 {
            return invalid("rounds must be at least 1".into());
        }
        if !(w.init_half_width.is_finite() && w.init_half_width > 0.0) {
            return invalid(format!(
                "init_half_width must be positive, got {}",
                w.init_half_width
            ));
        }
        self.limits()?;
        self.formation_spec()?;
        let ids: BTreeSet<AgentId> = (0..w.agent_count).collect();
        if let Some(bad) = w.stationary_ids.iter().find(|id| !ids.contains(id)) {
            return invalid(format!(
                "stationary id {bad} is not an agent (0..{})",
                w.agent_count
            ));
        }
        if w.stationary_ids.len() >= w.agent_count {
            return invalid("at least one agent must be active".into());
        }
        let mut seen = BTreeSet::new();
        for o in &self.agents.overrides {
            if !ids.contains(&o.id) {
                return invalid(format!("override for unknown agent {}", o.id));
            }
            if !seen.insert(o.id) {
                return invalid(format!("agent {} has more than one override", o.id));
            }
        }
        if self.backend.retry.max_attempts < 1 {
            return invalid("retry.max_attempts must be at least 1".into());
        }
        if !(self.backend.consensus_fraction > 0.0 && self.backend.consensus_fraction <= 1.0) {
            return invalid("consensus_fraction must be in (0, 1]".into());
        }
        if self.backend.oracle_substeps < 1 || self.backend.oracle_dt.is_nan() || self.backend.oracle_dt <= 0.0 {
            return invalid("oracle_substeps and oracle_dt must be positive".into());
        }
        if let Some(t) = &self.backend.templates {
            t.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.alpha_params()?;
        Ok(())
    }

    pub fn limits(&self) -> Result<MotionLimits, ConfigError> {
        MotionLimits::new(self.world.max_velocity, self.world.safe_distance)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn formation_spec(&self) -> Result<FormationSpec, ConfigError> {
        let mut spec = FormationSpec::new(
            self.formation.shape,
            self.formation.desired_distance,
            self.world.agent_count,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        spec.v_half_angle_deg = self.formation.v_half_angle_deg;
        Ok(spec)
    }

    pub fn alpha_params(&self) -> Result<AlphaParams, ConfigError> {
        match self.backend.oracle {
            Some(p) => p.validate().map(|_| p),
            None => AlphaParams::for_lattice_distance(self.formation.desired_distance),
        }
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn backend_for(&self, id: AgentId) -> BackendSpec {
        self.agents
            .overrides
            .iter()
            .find(|o| o.id == id)
            .and_then(|o| o.backend)
            .unwrap_or(self.agents.default)
    }

    pub fn personality_for(&self, id: AgentId) -> Option<Personality> {
        self.agents
            .overrides
            .iter()
            .find(|o| o.id == id)
            .and_then(|o| o.personality)
    }

    pub fn uses_chat(&self) -> bool {
        (0..self.world.agent_count).any(|id| self.backend_for(id) == BackendSpec::Chat)
    }

    /// Effective retry policy; strict mode never holds position.
    pub fn retry_policy(&self) -> RetryPolicy {
        let mut policy = self.backend.retry;
        if self.world.strict {
            policy.on_exhaustion = crate::llm::ExhaustionPolicy::FailEpisode;
        }
        policy
    }

    /// Replaces every backend (default and overrides) with `spec`.
    pub fn set_backend(&mut self, spec: BackendSpec) {
        self.agents.default = spec;
        for o in &mut self.agents.overrides {
            o.backend = None;
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes to JSON");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let config = ExperimentConfig::preset(name).unwrap();
            let text = config.to_toml();
            assert_eq!(
                ExperimentConfig::from_toml(&text).unwrap(),
                config,
                "{name}"
            );
        }
        assert!(matches!(
            ExperimentConfig::preset("hexagon"),
            Err(ConfigError::UnknownPreset(_))
        ));
    }

    #[test]
    fn parses_a_hand_written_document() {
        let text = r#"
schema_version = 1
name = "lonely-pair"

[world]
agent_count = 2
stationary_ids = [0]
init_half_width = 20.0
max_velocity = 5.0
safe_distance = 2.0
trials = 3

[formation]
shape = "pair-distance"
desired_distance = 10.0

[agents]
default = "scripted:diverger"

[[agents.override]]
id = 0
backend = "scripted:stationary"

[backend.retry]
max_attempts = 2
on_exhaustion = "fail-episode"
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.world.rounds, 25);
        assert_eq!(c.world.trials, 3);
        assert_eq!(
            c.backend_for(0),
            BackendSpec::Scripted(ScriptedKind::Stationary)
        );
        assert_eq!(
            c.backend_for(1),
            BackendSpec::Scripted(ScriptedKind::Diverger)
        );
        assert_eq!(c.backend.retry.max_attempts, 2);
        assert!(!c.uses_chat());
    }

    #[test]
    fn rejects_bad_documents() {
        let base = ExperimentConfig::preset("pair10").unwrap();

        let mut c = base.clone();
        c.world.trials = 0;
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));

        let mut c = base.clone();
        c.world.stationary_ids = vec![7];
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));

        let text = base
            .to_toml()
            .replace("schema_version = 1", "schema_version = 9");
        match ExperimentConfig::from_toml(&text) {
            Err(ConfigError::SchemaVersion { found, expected }) => {
                assert_eq!((found, expected), (9, 1))
            }
            other => panic!("unexpected {other:?}"),
        }

        let text = base.to_toml().replace("[world]", "[world]\nbogus = 1");
        assert!(matches!(
            ExperimentConfig::from_toml(&text),
            Err(ConfigError::Syntax(_))
        ));
    }

    #[test]
    fn backend_spec_strings() {
        for s in [
            "oracle",
            "chat",
            "scripted:consensus-seeker",
            "scripted:oracle-flocker-wrapper",
        ] {
            assert_eq!(s.parse::<BackendSpec>().unwrap().to_string(), s);
        }
        assert!("scripted:nope".parse::<BackendSpec>().is_err());
    }

    #[test]
    fn strict_forces_fail_episode() {
        let mut c = ExperimentConfig::preset("circle5x5").unwrap();
        c.world.strict = true;
        assert_eq!(
            c.retry_policy().on_exhaustion,
            crate::llm::ExhaustionPolicy::FailEpisode
        );
    }

    #[test]
    fn digest_tracks_content() {
        let a = ExperimentConfig::preset("circle5x5").unwrap();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.world.seed = 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
