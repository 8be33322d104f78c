//! Engine and run configuration.
//!
//! Configuration files are TOML with one flat table per subsystem:
//!
//! ```toml
//! [engine]
//! history = 10        # P, frames of history per object
//! horizon = 20        # Q, frames predicted ahead
//! cadence = 5         # T, frames between prediction rounds
//! fps = 30.0
//! gating = "intersect_only"
//! overlap_margin = 0.0
//! dedup_cooldown = 30
//! eps_move = 3.0
//! min_obs = 5
//!
//! [predictor]
//! kind = "constant_velocity"
//! k = 3
//!
//! [ingest]
//! format = "records"
//! max_gap = 5
//!
//! [eval]
//! lookahead_frames = 90
//! ```
//!
//! Every key is optional; omitted keys take the defaults shown.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{TrackFormat, DEFAULT_MAX_GAP};
use crate::predictor::PredictorSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown predictor kind `{0}` (expected constant_velocity or least_squares)")]
    UnknownPredictor(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid { field: field.into(), reason: reason.into() }
    }
}

/// Whether alerts require the deviation gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gating {
    /// Alert on any predicted intersection.
    #[default]
    IntersectOnly,
    /// Alert only if a moving member of the pair is flagged anomalous, or has
    /// no matured residuals yet.
    DeviationGated,
}

impl Gating {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::IntersectOnly => "intersect_only",
            Self::DeviationGated => "deviation_gated",
        }
    }
}

impl FromStr for Gating {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intersect_only" => Ok(Self::IntersectOnly),
            "deviation_gated" => Ok(Self::DeviationGated),
            other => Err(ConfigError::invalid("engine.gating", format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Gating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// P: states kept per object.
    pub history: usize,
    /// Q: frames predicted per round.
    pub horizon: usize,
    /// T: predictions run on frames divisible by this.
    pub cadence: u64,
    pub fps: f64,
    pub gating: Gating,
    pub overlap_margin: f64,
    pub dedup_cooldown: u64,
    pub predictor: PredictorSpec,
    pub eps_move: f64,
    pub min_obs: usize,
    /// Absences longer than this many frames restart an object's window.
    pub max_gap: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            history: 10,
            horizon: 20,
            cadence: 5,
            fps: 30.0,
            gating: Gating::IntersectOnly,
            overlap_margin: 0.0,
            dedup_cooldown: 30,
            predictor: PredictorSpec::default(),
            eps_move: 3.0,
            min_obs: 5,
            max_gap: DEFAULT_MAX_GAP,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.history < 2 {
            return Err(ConfigError::invalid("engine.history", "P must be >= 2"));
        }
        if self.horizon < 1 {
            return Err(ConfigError::invalid("engine.horizon", "Q must be >= 1"));
        }
        if self.cadence < 1 {
            return Err(ConfigError::invalid("engine.cadence", "T must be >= 1"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(ConfigError::invalid("engine.fps", "must be > 0"));
        }
        if !(self.overlap_margin.is_finite() && self.overlap_margin >= 0.0) {
            return Err(ConfigError::invalid("engine.overlap_margin", "must be >= 0"));
        }
        if !(self.eps_move.is_finite() && self.eps_move >= 0.0) {
            return Err(ConfigError::invalid("engine.eps_move", "must be >= 0"));
        }
        if self.min_obs < 1 || self.min_obs > self.history {
            return Err(ConfigError::invalid(
                "engine.min_obs",
                format!("must lie in 1..=history ({})", self.history),
            ));
        }
        self.predictor.validate()?;
        if self.predictor.min_history() > self.history {
            return Err(ConfigError::invalid(
                "predictor",
                format!("needs {} states but history is {}", self.predictor.min_history(), self.history),
            ));
        }
        Ok(())
    }

    pub fn frames_to_seconds(&self, frames: u64) -> f64 {
        frames as f64 / self.fps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub history: usize,
    pub horizon: usize,
    pub cadence: u64,
    pub fps: f64,
    pub gating: Gating,
    pub overlap_margin: f64,
    pub dedup_cooldown: u64,
    pub eps_move: f64,
    pub min_obs: usize,
}

impl Default for EngineSection {
    fn default() -> Self {
        let d = EngineConfig::default();
        Self {
            history: d.history,
            horizon: d.horizon,
            cadence: d.cadence,
            fps: d.fps,
            gating: d.gating,
            overlap_margin: d.overlap_margin,
            dedup_cooldown: d.dedup_cooldown,
            eps_move: d.eps_move,
            min_obs: d.min_obs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub format: TrackFormat,
    pub max_gap: u64,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self { format: TrackFormat::Records, max_gap: DEFAULT_MAX_GAP }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Frames before ground truth in which an alert can count as a hit.
    /// Defaults to `3 * fps` of the scene.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lookahead_frames: Option<u64>,
}

/// Whole configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub engine: EngineSection,
    pub predictor: PredictorSpec,
    pub ingest: IngestSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_owned()))
    }

    /// Applies `section.key=value` overrides on top of `text` before parsing.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_owned()))?;
        for ov in overrides {
            let (path, raw) = ov
                .split_once('=')
                .ok_or_else(|| ConfigError::invalid("--set", format!("expected section.key=value, got `{ov}`")))?;
            let (section, key) = path
                .trim()
                .split_once('.')
                .ok_or_else(|| ConfigError::invalid("--set", format!("expected section.key, got `{path}`")))?;
            let raw = raw.trim();
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
            let table = doc
                .entry(section.to_owned())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| ConfigError::invalid(section, "is not a table"))?;
            table.insert(key.to_owned(), value);
        }
        let text = toml::to_string(&doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn engine_config(&self) -> Result<EngineConfig, ConfigError> {
        let e = &self.engine;
        let cfg = EngineConfig {
            history: e.history,
            horizon: e.horizon,
            cadence: e.cadence,
            fps: e.fps,
            gating: e.gating,
            overlap_margin: e.overlap_margin,
            dedup_cooldown: e.dedup_cooldown,
            predictor: self.predictor,
            eps_move: e.eps_move,
            min_obs: e.min_obs,
            max_gap: self.ingest.max_gap,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn lookahead_for(&self, fps: f64) -> u64 {
        self.eval.lookahead_frames.unwrap_or((3.0 * fps).round() as u64)
    }

    /// Full effective configuration, echoed into run summaries.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
