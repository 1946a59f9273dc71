//! Layered run configuration: built-in defaults, then an optional TOML file,
//! then command-line flags.

use std::path::Path;

use anyhow::{Context, Result};
use beamsep::data::{DatagenConfig, SynthConfig};
use beamsep::nn::TrainConfig;
use beamsep::wpe::WpeConfig;
use serde::{Deserialize, Serialize};

pub const LOCK_FILE: &str = "config-lock.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    /// Analysis window widths to evaluate, one report per width.
    pub windows: Vec<usize>,
    /// Windows per forward pass.
    pub batch_size: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            windows: vec![160],
            batch_size: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed. Corpus, datagen and training seeds derive from it; it
    /// replaces `train.seed`.
    pub seed: u64,
    /// Worker threads; unset means one per core.
    pub threads: Option<usize>,
    pub corpus: SynthConfig,
    pub datagen: DatagenConfig,
    pub train: TrainConfig,
    pub wpe: WpeConfig,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: None,
            corpus: SynthConfig::default(),
            datagen: DatagenConfig::default(),
            train: TrainConfig::default(),
            wpe: WpeConfig::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with the TOML file at `path`, if given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| anyhow::anyhow!(e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.datagen.validate()?;
        self.train.validate()?;
        self.wpe.validate()?;
        if self.eval.windows.is_empty() {
            anyhow::bail!("eval.windows must not be empty");
        }
        for &w in &self.eval.windows {
            beamsep::data::check_window_frames(w)?;
        }
        if self.eval.batch_size == 0 || self.threads == Some(0) {
            anyhow::bail!("batch size and thread count must be positive");
        }
        Ok(())
    }
}

/// The effective configuration of one command, written next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigLock {
    pub tool_version: String,
    pub command: String,
    /// Command arguments after defaults were applied.
    pub args: serde_json::Value,
    pub config: RunConfig,
}

impl ConfigLock {
    pub fn new(command: &str, args: serde_json::Value, config: &RunConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args,
            config: config.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn file_overrides_nested_keys() {
        let cfg = RunConfig::from_toml("seed = 9\n[wpe]\ntaps = 4\niters = 2\n[train]\nwindow_frames = 320\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.wpe.taps, 4);
        assert_eq!(cfg.wpe.iterations, 2);
        assert_eq!(cfg.wpe.delay, WpeConfig::default().delay);
        assert_eq!(cfg.train.window_frames, 320);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sede = 1").is_err());
        assert!(RunConfig::from_toml("[wpe]\niterations = 2").is_err());
        assert!(RunConfig::from_toml("[train]\nlr = 0.1").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let cfg = RunConfig::from_toml("[eval]\nwindows = [100]").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::from_toml("[wpe]\niters = 0").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn lock_round_trips() {
        let cfg = RunConfig::default();
        let lock = ConfigLock::new("train", serde_json::json!({"epochs": 3}), &cfg);
        let text = serde_json::to_string(&lock).unwrap();
        let back: ConfigLock = serde_json::from_str(&text).unwrap();
        assert_eq!(back.config, cfg);
        assert_eq!(back.args["epochs"], 3);
    }
}
