//! Proximal policy optimisation, from scratch.

pub mod adam;
pub mod checkpoint;
pub mod gae;
pub mod loss;
pub mod mlp;
pub mod normalizer;
pub mod policy;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::Checkpoint;
pub use gae::gae;
pub use loss::{ppo_loss, LossCoefs, LossStats, Minibatch};
pub use policy::ActorCritic;
pub use train::{BatchStats, MetricsLog, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub sgd_iters: usize,
    pub gamma: f64,
    pub lam: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Initial learning rate; adapted toward `kl_target` afterwards.
    pub learning_rate: f64,
    pub kl_target: f64,
    /// Set to false for a fixed learning rate.
    pub adaptive_lr: bool,
    pub lr_min: f64,
    pub lr_max: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub total_samples: u64,
    /// Batches between checkpoints (0 = only the final one).
    pub checkpoint_every: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            batch_size: 4096,
            minibatch_size: 128,
            sgd_iters: 10,
            gamma: 0.99,
            lam: 0.95,
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            learning_rate: 1e-4,
            kl_target: 0.01,
            adaptive_lr: true,
            lr_min: 1e-5,
            lr_max: 1e-2,
            max_grad_norm: 1.0,
            hidden: vec![256, 256],
            init_log_std: -0.5,
            total_samples: 35_000_000,
            checkpoint_every: 50,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |key: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("ppo.{key}"), "must be finite and > 0"))
            }
        };
        let unit = |key: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("ppo.{key}"), "must lie in [0, 1]"))
            }
        };
        if self.batch_size == 0 {
            return Err(Error::config("ppo.batch_size", "must be >= 1"));
        }
        if self.minibatch_size == 0 || self.minibatch_size > self.batch_size {
            return Err(Error::config("ppo.minibatch_size", "must be in 1..=batch_size"));
        }
        if self.sgd_iters == 0 {
            return Err(Error::config("ppo.sgd_iters", "must be >= 1"));
        }
        unit("gamma", self.gamma)?;
        unit("lam", self.lam)?;
        pos("clip", self.clip)?;
        pos("learning_rate", self.learning_rate)?;
        pos("kl_target", self.kl_target)?;
        pos("lr_min", self.lr_min)?;
        pos("lr_max", self.lr_max)?;
        pos("max_grad_norm", self.max_grad_norm)?;
        if self.lr_min > self.lr_max {
            return Err(Error::config("ppo.lr_min", "must not exceed lr_max"));
        }
        for (k, v) in [("entropy_coef", self.entropy_coef), ("value_coef", self.value_coef)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("ppo.{k}"), "must be finite and >= 0"));
            }
        }
        if !self.init_log_std.is_finite() {
            return Err(Error::config("ppo.init_log_std", "must be finite"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("ppo.hidden", "needs at least one non-empty layer"));
        }
        Ok(())
    }

    pub fn coefs(&self) -> LossCoefs {
        LossCoefs {
            clip: self.clip,
            entropy: self.entropy_coef,
            value: self.value_coef,
        }
    }

    /// KL-driven learning-rate adaptation.
    pub fn adapt_lr(&self, lr: f64, kl: f64) -> f64 {
        if !self.adaptive_lr {
            return lr;
        }
        let next = if kl > 2.0 * self.kl_target {
            lr / 2.0
        } else if kl < 0.5 * self.kl_target {
            lr * 1.5
        } else {
            lr
        };
        next.clamp(self.lr_min, self.lr_max)
    }
}
