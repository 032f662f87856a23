//! Run configuration: a TOML file, overridden by `PAINPAINT_*` environment
//! variables, overridden by command-line flags.

use std::path::{Path, PathBuf};

use painpaint_core::inpaint::CorruptionKind;
use painpaint_core::pipeline::PipelineConfig;
use painpaint_core::sampler::PriorityMode;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENV_PREFIX: &str = "PAINPAINT_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatcherKind {
    /// Reprojection-based matches from depth and poses.
    Geometric,
    /// Precomputed matches from `matches`.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthKind {
    GroundTruth,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InpainterKind {
    Oracle,
    Corrupting,
    Service,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    PatchStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    ViewBank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub tau: f64,
    pub k: usize,
    pub m: usize,
    pub eta: f64,
    pub score_threshold: f64,
    pub lambda: f64,
    pub iters: usize,
    pub seed: u64,
    pub priority: PriorityMode,
    pub verification: bool,
    pub steps: u32,
    pub prompt: Option<String>,
    pub scene_steps: usize,
    /// First anchor; random when unset.
    pub anchor: Option<usize>,
    pub matcher: MatcherKind,
    pub matches: Option<PathBuf>,
    pub matcher_stride: usize,
    pub depth: DepthKind,
    pub depth_constant: f32,
    pub inpainter: InpainterKind,
    pub corruption: CorruptionKind,
    pub corruption_magnitude: f64,
    pub features: FeatureKind,
    pub scene: SceneKind,
    pub service_endpoint: Option<String>,
    pub service_timeout_secs: f64,
    pub service_max_in_flight: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            dataset: None,
            output: None,
            tau: p.tau,
            k: p.k,
            m: p.m,
            eta: p.eta,
            score_threshold: p.score_threshold,
            lambda: p.lambda,
            iters: p.iters,
            seed: p.seed,
            priority: p.priority,
            verification: p.verification,
            steps: p.steps,
            prompt: p.prompt,
            scene_steps: p.scene_steps,
            anchor: None,
            matcher: MatcherKind::Geometric,
            matches: None,
            matcher_stride: 4,
            depth: DepthKind::GroundTruth,
            depth_constant: 1.0,
            inpainter: InpainterKind::Oracle,
            corruption: CorruptionKind::Noise,
            corruption_magnitude: 0.2,
            features: FeatureKind::PatchStats,
            scene: SceneKind::ViewBank,
            service_endpoint: None,
            service_timeout_secs: 120.0,
            service_max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Str,
    Float,
    Int,
    Bool,
}

/// Every configuration key with its value type.
const KEYS: &[(&str, Kind)] = &[
    ("dataset", Kind::Str),
    ("output", Kind::Str),
    ("tau", Kind::Float),
    ("k", Kind::Int),
    ("m", Kind::Int),
    ("eta", Kind::Float),
    ("score_threshold", Kind::Float),
    ("lambda", Kind::Float),
    ("iters", Kind::Int),
    ("seed", Kind::Int),
    ("priority", Kind::Str),
    ("verification", Kind::Bool),
    ("steps", Kind::Int),
    ("prompt", Kind::Str),
    ("scene_steps", Kind::Int),
    ("anchor", Kind::Int),
    ("matcher", Kind::Str),
    ("matches", Kind::Str),
    ("matcher_stride", Kind::Int),
    ("depth", Kind::Str),
    ("depth_constant", Kind::Float),
    ("inpainter", Kind::Str),
    ("corruption", Kind::Str),
    ("corruption_magnitude", Kind::Float),
    ("features", Kind::Str),
    ("scene", Kind::Str),
    ("service_endpoint", Kind::Str),
    ("service_timeout_secs", Kind::Float),
    ("service_max_in_flight", Kind::Int),
];

pub fn keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|(k, _)| *k)
}

fn typed(key: &str, raw: &str) -> Result<toml::Value> {
    let kind = KEYS.iter().find(|(k, _)| *k == key).map(|(_, t)| *t).ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
    let bad = || Error::Config(format!("{key}: cannot parse '{raw}'"));
    Ok(match kind {
        Kind::Str => toml::Value::String(raw.to_string()),
        Kind::Float => toml::Value::Float(raw.trim().parse().map_err(|_| bad())?),
        Kind::Int => toml::Value::Integer(raw.trim().parse().map_err(|_| bad())?),
        Kind::Bool => toml::Value::Boolean(raw.trim().parse().map_err(|_| bad())?),
    })
}

/// Collects configuration layers, lowest precedence first.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    table: toml::Table,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn file(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self = self.toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(self)
    }

    pub fn toml(mut self, text: &str) -> Result<Self> {
        let t: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        for (k, mut v) in t {
            if !KEYS.iter().any(|(key, _)| *key == k) {
                return Err(Error::Config(format!("unknown key '{k}'")));
            }
            // Let `0.5`-style keys accept integers written without a decimal point.
            if let (Some((_, Kind::Float)), toml::Value::Integer(i)) = (KEYS.iter().find(|(key, _)| *key == k), &v) {
                v = toml::Value::Float(*i as f64);
            }
            self.table.insert(k, v);
        }
        Ok(self)
    }

    /// Applies `PAINPAINT_<KEY>` variables from `vars`.
    pub fn env(mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        for (name, value) in vars {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else { continue };
            let key = key.to_ascii_lowercase();
            if KEYS.iter().any(|(k, _)| *k == key) {
                self.table.insert(key.clone(), typed(&key, &value)?);
            }
        }
        Ok(self)
    }

    pub fn set(mut self, key: &str, raw: &str) -> Result<Self> {
        let key = key.replace('-', "_");
        self.table.insert(key.clone(), typed(&key, raw)?);
        Ok(self)
    }

    pub fn build(self) -> Result<RunConfig> {
        let cfg = RunConfig::deserialize(toml::Value::Table(self.table)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.pipeline().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            tau: self.tau,
            k: self.k,
            m: self.m,
            eta: self.eta,
            score_threshold: self.score_threshold,
            lambda: self.lambda,
            iters: self.iters,
            seed: self.seed,
            priority: self.priority,
            verification: self.verification,
            steps: self.steps,
            prompt: self.prompt.clone(),
            scene_steps: self.scene_steps,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dataset(&self) -> Result<&Path> {
        self.dataset.as_deref().ok_or_else(|| Error::Usage("no dataset given (--dataset or 'dataset' in the config)".into()))
    }

    pub fn output(&self) -> Result<&Path> {
        self.output.as_deref().ok_or_else(|| Error::Usage("no output directory given (--output or 'output' in the config)".into()))
    }
}
