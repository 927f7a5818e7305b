use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{AdversarialLoss, LossWeights};
use crate::models::ModelConfig;

/// Generator update schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// One update on `lambda1 * rec + lambda2 * cls_g + adv_g`.
    AttganJoint,
    /// An update on `lambda1 * rec + adv_g`, then a separate update on
    /// `lambda2 * cls_g`.
    DesignSplit,
}

impl core::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attgan_joint" => Ok(Schedule::AttganJoint),
            "design_split" => Ok(Schedule::DesignSplit),
            other => Err(Error::Config(format!("unknown schedule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub schedule: Schedule,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::beta1")]
    pub beta1: f64,
    #[serde(default = "defaults::beta2")]
    pub beta2: f64,
    #[serde(default = "defaults::adam_eps")]
    pub adam_eps: f64,
    /// Discriminator/classifier updates per outer step.
    #[serde(default = "defaults::inner_dc_steps")]
    pub inner_dc_steps: usize,
    pub total_steps: u64,
    #[serde(default)]
    pub seed: u64,
    /// 0 writes only the final checkpoint.
    #[serde(default)]
    pub checkpoint_every: u64,
    #[serde(default = "defaults::log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub adversarial: AdversarialLoss,
    /// Reuse the first generator optimizer for the classification update of
    /// the split schedule instead of giving it its own moments.
    #[serde(default)]
    pub shared_cls_optimizer: bool,
    /// Held-out fraction used by the CLI when splitting the data.
    #[serde(default = "defaults::test_fraction")]
    pub test_fraction: f64,
    pub model: ModelConfig,
}

mod defaults {
    pub fn batch_size() -> usize {
        32
    }
    pub fn learning_rate() -> f64 {
        0.0002
    }
    pub fn beta1() -> f64 {
        0.5
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn adam_eps() -> f64 {
        1e-8
    }
    pub fn inner_dc_steps() -> usize {
        5
    }
    pub fn log_every() -> u64 {
        10
    }
    pub fn test_fraction() -> f64 {
        0.1
    }
}

impl TrainConfig {
    pub fn new(schedule: Schedule, model: ModelConfig, total_steps: u64) -> Self {
        Self {
            schedule,
            weights: LossWeights::default(),
            batch_size: defaults::batch_size(),
            learning_rate: defaults::learning_rate(),
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            adam_eps: defaults::adam_eps(),
            inner_dc_steps: defaults::inner_dc_steps(),
            total_steps,
            seed: 0,
            checkpoint_every: 0,
            log_every: defaults::log_every(),
            adversarial: AdversarialLoss::Vanilla,
            shared_cls_optimizer: false,
            test_fraction: defaults::test_fraction(),
            model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.inner_dc_steps == 0 {
            return Err(Error::Config("inner_dc_steps must be >= 1".into()));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be >= 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test_fraction must lie in (0, 1)".into()));
        }
        if let AdversarialLoss::WassersteinGp { penalty_weight } = self.adversarial {
            if !(penalty_weight >= 0.0) {
                return Err(Error::Config("penalty_weight must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}
