//! Run configuration (TOML). Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{ActionConfig, EnvConfig, ObsConfig};
use crate::error::{Error, Result};
use crate::ppo::PpoConfig;

/// Environment variable naming the default output root.
pub const OUT_ROOT_VAR: &str = "GAPCROSS_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub n_rollouts: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            n_rollouts: 30,
            seed: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub label: String,
    pub seed: u64,
    pub workers: usize,
    /// Output directory; defaults to `$GAPCROSS_OUT/<label>` or `runs/<label>`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Preset action channels 1-6; overrides the channel toggles in `env.action`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_case: Option<u8>,
    /// Preset observation combination 1-16; overrides `env.observation`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obs_combination: Option<u8>,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            label: "run".into(),
            seed: 1,
            workers: 1,
            output_dir: None,
            action_case: None,
            obs_combination: None,
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        let cfg = cfg.resolve()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::ConfigParse(m) => Error::ConfigParse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies the preset shortcuts, leaving an explicit configuration.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(c) = self.action_case.take() {
            let preset = ActionConfig::case(c).map_err(|_| Error::config("action_case", "must be 1..=6"))?;
            let a = &mut self.env.action;
            a.use_mu = preset.use_mu;
            a.use_omega = preset.use_omega;
            a.use_x_off = preset.use_x_off;
            a.use_z_off = preset.use_z_off;
            a.x_oscillation = preset.x_oscillation;
        }
        if let Some(c) = self.obs_combination.take() {
            self.env.observation =
                ObsConfig::combination(c).map_err(|_| Error::config("obs_combination", "must be 1..=16"))?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::config("workers", "must be >= 1"));
        }
        if self.workers > self.ppo.batch_size {
            return Err(Error::config("workers", "must not exceed ppo.batch_size"));
        }
        if self.label.is_empty() || self.label.contains(['/', '\\']) {
            return Err(Error::config("label", "must be a non-empty file-name-safe string"));
        }
        if self.eval.n_rollouts == 0 {
            return Err(Error::config("eval.n_rollouts", "must be >= 1"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed", "must be < 2^63"));
        }
        self.env.validate()?;
        self.ppo.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Explicit directory, else `$GAPCROSS_OUT/<label>`, else `runs/<label>`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(d) = &self.output_dir {
            return d.clone();
        }
        default_root().join(&self.label)
    }
}

pub fn default_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}
