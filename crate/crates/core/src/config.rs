//! Engine configuration: a TOML file with `SCENETONE_*` environment overrides.
//!
//! API keys are only ever read from the environment.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::crossfade::PolicyConfig;
use crate::mix::StemDefaults;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid value {value:?} for {key}")]
    Env { key: String, value: String },
    #[error("invalid fixture or table file: {0}")]
    Fixtures(String),
    #[error("{0} backend is live but {1} is not set")]
    MissingKey(&'static str, &'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MixDelivery {
    #[default]
    Poll,
    Webhook,
}

/// Simulated service latencies for the mock backends, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockLatencies {
    pub caption_ms: u64,
    pub generation_ms: u64,
    pub preview_mix_ms: u64,
    pub master_ms: u64,
    pub upload_ms: u64,
}

impl Default for MockLatencies {
    fn default() -> Self {
        Self {
            caption_ms: 1200,
            generation_ms: 3800,
            preview_mix_ms: 5200,
            master_ms: 8600,
            upload_ms: 0,
        }
    }
}

impl MockLatencies {
    pub fn zero() -> Self {
        Self {
            caption_ms: 0,
            generation_ms: 0,
            preview_mix_ms: 0,
            master_ms: 0,
            upload_ms: 0,
        }
    }
}

/// Cost units charged per call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Costs {
    pub caption: f64,
    pub generation: f64,
    pub preview_mix_per_stem: f64,
    pub master: f64,
}

impl Default for Costs {
    fn default() -> Self {
        Self {
            caption: 0.002,
            generation: 0.14,
            preview_mix_per_stem: 0.05,
            master: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmbientHook {
    pub enabled: bool,
    /// Genre or mood words marking a section as ambient.
    pub keywords: Vec<String>,
    pub max_delta_db: f64,
}

impl Default for AmbientHook {
    fn default() -> Self {
        Self {
            enabled: false,
            keywords: ["ambient", "calm", "sparse", "drone", "minimal"]
                .map(String::from)
                .to_vec(),
            max_delta_db: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Endpoints {
    pub caption_url: String,
    pub caption_model: String,
    pub generation_url: String,
    pub mix_url: String,
    /// Public URL the mixing service should call back.
    pub webhook_url: Option<String>,
}

impl Default for Endpoints {
    fn default() -> Self {
        Self {
            caption_url: "https://api.openai.com/v1/chat/completions".into(),
            caption_model: "gpt-4o".into(),
            generation_url: "https://api.stability.ai/v2beta/audio/stable-audio-2/text-to-audio".into(),
            mix_url: "https://tonn.roexaudio.com".into(),
            webhook_url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub caption_backend: BackendMode,
    pub generation_backend: BackendMode,
    pub mix_backend: BackendMode,
    pub mix_delivery: MixDelivery,
    pub endpoints: Endpoints,
    pub latencies: MockLatencies,
    pub costs: Costs,
    pub policy: PolicyConfig,
    pub lookahead_ms: u64,
    pub ambient: AmbientHook,
    pub auto_mix: bool,
    pub stem_defaults: StemDefaults,
    pub master_target_dbfs: f64,
    pub caption_timeout_ms: u64,
    pub generation_timeout_ms: u64,
    pub max_pending_captures: usize,
    /// Tempo used when the first caption carries none.
    pub default_bpm: f64,
    pub fixtures: Option<PathBuf>,
    pub prompt_tables: Option<PathBuf>,
    pub bind: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            caption_backend: BackendMode::Mock,
            generation_backend: BackendMode::Mock,
            mix_backend: BackendMode::Mock,
            mix_delivery: MixDelivery::Poll,
            endpoints: Endpoints::default(),
            latencies: MockLatencies::default(),
            costs: Costs::default(),
            policy: PolicyConfig::default(),
            lookahead_ms: 250,
            ambient: AmbientHook::default(),
            auto_mix: false,
            stem_defaults: StemDefaults::default(),
            master_target_dbfs: -14.0,
            caption_timeout_ms: 10_000,
            generation_timeout_ms: 30_000,
            max_pending_captures: 2,
            default_bpm: 100.0,
            fixtures: None,
            prompt_tables: None,
            bind: "127.0.0.1:8787".into(),
        }
    }
}

/// Secrets, taken from the environment only.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ApiKeys {
    pub caption: Option<String>,
    pub generation: Option<String>,
    pub mix: Option<String>,
}

impl ApiKeys {
    pub fn from_env() -> Self {
        let get = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        Self {
            caption: get("SCENETONE_CAPTION_API_KEY"),
            generation: get("SCENETONE_GENERATION_API_KEY"),
            mix: get("SCENETONE_MIX_API_KEY"),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Reads `path` (defaults when `None`) and applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(std::env::vars())?;
        Ok(cfg)
    }

    /// Applies `SCENETONE_*` overrides from the given variables.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix("SCENETONE_") else {
                continue;
            };
            let bad = || ConfigError::Env {
                key: key.clone(),
                value: value.clone(),
            };
            let mode = |v: &str| match v.to_ascii_lowercase().as_str() {
                "mock" => Ok(BackendMode::Mock),
                "live" => Ok(BackendMode::Live),
                _ => Err(bad()),
            };
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
            let int = |v: &str| v.parse::<u64>().map_err(|_| bad());
            match name {
                "CAPTION_BACKEND" => self.caption_backend = mode(&value)?,
                "GENERATION_BACKEND" => self.generation_backend = mode(&value)?,
                "MIX_BACKEND" => self.mix_backend = mode(&value)?,
                "MIX_DELIVERY" => {
                    self.mix_delivery = match value.as_str() {
                        "poll" => MixDelivery::Poll,
                        "webhook" => MixDelivery::Webhook,
                        _ => return Err(bad()),
                    }
                }
                "LAMBDA" => self.policy.lambda = num(&value)?,
                "TAU" => self.policy.tau = num(&value)?,
                "LOOKAHEAD_MS" => self.lookahead_ms = int(&value)?,
                "CAPTION_LATENCY_MS" => self.latencies.caption_ms = int(&value)?,
                "GENERATION_LATENCY_MS" => self.latencies.generation_ms = int(&value)?,
                "PREVIEW_MIX_LATENCY_MS" => self.latencies.preview_mix_ms = int(&value)?,
                "MASTER_LATENCY_MS" => self.latencies.master_ms = int(&value)?,
                "AUTO_MIX" => self.auto_mix = value.parse().map_err(|_| bad())?,
                "BIND" => self.bind = value.clone(),
                "CAPTION_URL" => self.endpoints.caption_url = value.clone(),
                "GENERATION_URL" => self.endpoints.generation_url = value.clone(),
                "MIX_URL" => self.endpoints.mix_url = value.clone(),
                "WEBHOOK_URL" => self.endpoints.webhook_url = Some(value.clone()),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn lookahead(&self) -> Duration {
        Duration::from_millis(self.lookahead_ms)
    }

    pub fn caption_timeout(&self) -> Duration {
        Duration::from_millis(self.caption_timeout_ms)
    }

    pub fn generation_timeout(&self) -> Duration {
        Duration::from_millis(self.generation_timeout_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_latencies_and_costs() {
        let c = Config::default();
        assert_eq!(c.latencies.caption_ms, 1200);
        assert_eq!(c.latencies.generation_ms, 3800);
        assert_eq!(c.costs.caption, 0.002);
        assert_eq!(c.costs.generation, 0.14);
        assert_eq!(c.lookahead_ms, 250);
        assert_eq!(c.max_pending_captures, 2);
    }

    #[test]
    fn toml_round_trip() {
        let mut c = Config::default();
        c.auto_mix = true;
        c.policy.lambda = 0.5;
        c.latencies = MockLatencies::zero();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = Config::from_toml("auto_mix = true\n[latencies]\ncaption_ms = 5\n").unwrap();
        assert!(c.auto_mix);
        assert_eq!(c.latencies.caption_ms, 5);
        assert_eq!(c.latencies.generation_ms, 3800);
    }

    #[test]
    fn env_overrides() {
        let mut c = Config::default();
        let vars = [
            ("SCENETONE_MIX_BACKEND", "live"),
            ("SCENETONE_LAMBDA", "2.5"),
            ("SCENETONE_LOOKAHEAD_MS", "100"),
            ("SCENETONE_GENERATION_LATENCY_MS", "0"),
            ("HOME", "/root"),
        ];
        c.apply_env(vars.map(|(k, v)| (k.to_string(), v.to_string()))).unwrap();
        assert_eq!(c.mix_backend, BackendMode::Live);
        assert_eq!(c.policy.lambda, 2.5);
        assert_eq!(c.lookahead_ms, 100);
        assert_eq!(c.latencies.generation_ms, 0);
    }

    #[test]
    fn bad_env_value_is_reported() {
        let mut c = Config::default();
        let err = c
            .apply_env([("SCENETONE_TAU".to_string(), "lots".to_string())])
            .unwrap_err();
        assert!(matches!(err, ConfigError::Env { .. }));
    }
}
