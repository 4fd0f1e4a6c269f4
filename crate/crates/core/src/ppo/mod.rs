//! PPO with GAE, separate extrinsic and intrinsic value heads, and a clipped surrogate.
//!
//! Rollout buffers are time-major: transition `(t, env)` lives at index
//! `t * n_envs + env`.

mod gae;
mod policy;
mod rollout;
mod update;

use serde::{Deserialize, Serialize};

pub use gae::{gae, Advantages};
pub use policy::{entropy, PolicyNet, PolicyOutput};
pub use rollout::{collect_rollout, ActionSource, RolloutBatch, Runner};
pub use update::{combined_advantages, ppo_update, surrogate_grad, PpoStats};

use crate::error::{config_err, Result};
use crate::intrinsic::EncoderSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub lr: f64,
    pub clip: f64,
    pub ent_coef: f64,
    pub minibatches: usize,
    pub epochs: usize,
    pub gamma: f64,
    /// Discount of the intrinsic stream.
    pub gamma_int: f64,
    pub lambda: f64,
    pub vf_coef: f64,
    /// Weight of the extrinsic advantage; 0 keeps extrinsic reward out of every gradient.
    pub c_ext: f64,
    pub c_int: f64,
    /// Steps per env per rollout.
    pub rollout_len: usize,
    pub max_grad_norm: f64,
    /// Approximate KL above which the remaining epochs are skipped.
    pub target_kl: f64,
    /// Whether episode ends cut the intrinsic return.
    pub int_episodic: bool,
    pub hidden: usize,
    pub encoder: EncoderSpec,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr: 2.5e-4,
            clip: 0.1,
            ent_coef: 0.01,
            minibatches: 4,
            epochs: 4,
            gamma: 0.99,
            gamma_int: 0.99,
            lambda: 0.95,
            vf_coef: 0.5,
            c_ext: 2.0,
            c_int: 1.0,
            rollout_len: 128,
            max_grad_norm: 0.5,
            target_kl: 0.5,
            int_episodic: false,
            hidden: 64,
            encoder: EncoderSpec {
                convs: vec![(4, 4, 4), (8, 3, 2), (8, 3, 2), (8, 3, 1)],
            },
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |g: f64| g > 0.0 && g < 1.0;
        if !open_unit(self.gamma) || !open_unit(self.gamma_int) {
            return Err(config_err("discounts must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(config_err("lambda must lie in [0, 1]"));
        }
        if !(self.clip > 0.0) || !(self.lr > 0.0) || !(self.max_grad_norm > 0.0) {
            return Err(config_err("clip, lr and max_grad_norm must be positive"));
        }
        if self.minibatches == 0 || self.epochs == 0 || self.rollout_len == 0 || self.hidden == 0 {
            return Err(config_err("minibatches, epochs, rollout_len and hidden must be positive"));
        }
        if self.ent_coef < 0.0 || self.vf_coef < 0.0 || self.c_ext < 0.0 || self.c_int < 0.0 {
            return Err(config_err("loss and advantage coefficients must be non-negative"));
        }
        if self.c_ext == 0.0 && self.c_int == 0.0 {
            return Err(config_err("c_ext and c_int cannot both be zero"));
        }
        if !(self.target_kl > 0.0) {
            return Err(config_err("target_kl must be positive"));
        }
        self.encoder.validate()
    }
}
