//! Intrinsic reward modules behind one contract, plus the reward normalizer.
//!
//! A module sees each transition `(s_t, a_t, s_{t+1}, audio_{t+1})` of a
//! rollout. Rewards for a batch are computed before the module trains on
//! that batch, so the reward for step `t` only reflects what the module had
//! learned from earlier rollouts.

mod aep;
mod cluster;
mod icm;
mod net;
mod normalizer;
mod rnd;
mod sndreg;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use aep::AepModule;
pub use cluster::ClusterModule;
pub use icm::IcmModule;
pub use net::{gather_frames, ConditionedNet, EncoderSpec};
pub use normalizer::{RewardNormalizer, Welford, NORM_EPSILON};
pub use rnd::RndModule;
pub use sndreg::SndRegModule;

use crate::audio::TEXTURE_DIM;
use crate::clustering::{ClusterConfig, EventClasses};
use crate::envs::FRAME_LEN;
use crate::error::{config_err, Error, Result};

/// Intrinsic reward method selected in the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Aep,
    Sndreg,
    Cluster,
    Rnd,
    Icm,
    None,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Aep,
        Method::Sndreg,
        Method::Cluster,
        Method::Rnd,
        Method::Icm,
        Method::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Aep => "aep",
            Method::Sndreg => "sndreg",
            Method::Cluster => "cluster",
            Method::Rnd => "rnd",
            Method::Icm => "icm",
            Method::None => "none",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| config_err(format!("unknown method `{s}`")))
    }
}

/// Hyperparameters shared by the learned modules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicConfig {
    pub lr: f64,
    /// Passes over each rollout per update.
    pub epochs: usize,
    pub minibatch: usize,
    pub max_grad_norm: f64,
    /// Feed the next-step sound texture to RND/ICM alongside the image.
    pub use_audio: bool,
    /// ICM forward-loss weight; the inverse loss gets `1 - icm_beta`.
    pub icm_beta: f64,
    /// Width of the image embedding and hidden layers.
    pub hidden: usize,
    pub encoder: EncoderSpec,
}

impl Default for IntrinsicConfig {
    fn default() -> Self {
        Self {
            lr: 2.5e-4,
            epochs: 4,
            minibatch: 64,
            max_grad_norm: 1.0,
            use_audio: false,
            icm_beta: 0.2,
            hidden: 64,
            encoder: EncoderSpec::default(),
        }
    }
}

impl IntrinsicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(config_err("intrinsic lr must be positive"));
        }
        if self.epochs == 0 || self.minibatch == 0 || self.hidden == 0 {
            return Err(config_err("intrinsic epochs, minibatch and hidden must be positive"));
        }
        if !(0.0..=1.0).contains(&self.icm_beta) {
            return Err(config_err("icm_beta must be in [0, 1]"));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(config_err("intrinsic max_grad_norm must be positive"));
        }
        self.encoder.validate()
    }
}

/// Rollout transitions in time-major order (`index = t * n_envs + env`).
#[derive(Debug, Clone, Copy)]
pub struct Transitions<'a> {
    /// `len * FRAME_LEN` pixels of `s_t`.
    pub frames: &'a [f64],
    /// `len * FRAME_LEN` pixels of `s_{t+1}` (the terminal frame when an episode ended).
    pub next_frames: &'a [f64],
    pub actions: &'a [usize],
    /// Texture of the audio produced by each step (zeros when silent).
    pub textures: &'a [Vec<f64>],
    pub silent: &'a [bool],
    /// Global environment-step index of each transition.
    pub steps: &'a [u64],
    pub num_actions: usize,
}

impl<'a> Transitions<'a> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.frames.len() != n * FRAME_LEN
            || self.next_frames.len() != n * FRAME_LEN
            || self.textures.len() != n
            || self.silent.len() != n
            || self.steps.len() != n
        {
            return Err(config_err("transition fields have inconsistent lengths"));
        }
        if self.actions.iter().any(|a| *a >= self.num_actions) {
            return Err(config_err("transition action out of range"));
        }
        if self.textures.iter().any(|t| t.len() != TEXTURE_DIM) {
            return Err(config_err("transition texture has wrong dimension"));
        }
        Ok(())
    }
}

/// Training diagnostics of one module update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModuleStats {
    /// Mean loss before the update.
    pub loss: f64,
    /// Fraction of argmax predictions matching the label before the update (AEP only).
    pub accuracy: Option<f64>,
}

pub trait RewardModule: Send {
    fn method(&self) -> Method;

    /// Raw, non-negative intrinsic reward for every transition, in order.
    ///
    /// Only the clustering module mutates state here; learned modules are read-only.
    fn compute_rewards(&mut self, batch: &Transitions) -> Result<Vec<f64>>;

    /// Trains on the batch after its rewards were computed.
    fn update(&mut self, batch: &Transitions, rng: &mut ChaCha8Rng) -> Result<ModuleStats>;

    /// Number of online sound clusters, when the module keeps any.
    fn cluster_count(&self) -> Option<usize> {
        None
    }

    /// Writes checkpoint files with the given path prefix.
    fn save(&self, _prefix: &Path) -> Result<()> {
        Ok(())
    }

    /// Whether this module holds a learned predictor network.
    fn has_predictor(&self) -> bool {
        false
    }
}

/// Module that always rewards zero.
pub struct NoneModule;

impl RewardModule for NoneModule {
    fn method(&self) -> Method {
        Method::None
    }

    fn compute_rewards(&mut self, batch: &Transitions) -> Result<Vec<f64>> {
        Ok(vec![0.0; batch.len()])
    }

    fn update(&mut self, _batch: &Transitions, _rng: &mut ChaCha8Rng) -> Result<ModuleStats> {
        Ok(ModuleStats::default())
    }
}

/// Builds a baseline module. AEP needs frozen classes and goes through [`AepModule::new`].
pub fn build_module(
    method: Method,
    config: &IntrinsicConfig,
    cluster: &ClusterConfig,
    num_actions: usize,
    classes: Option<&EventClasses>,
    rng: &mut ChaCha8Rng,
) -> Result<Box<dyn RewardModule>> {
    config.validate()?;
    Ok(match method {
        Method::None => Box::new(NoneModule),
        Method::Cluster => Box::new(ClusterModule::new(cluster.clone())?),
        Method::Sndreg => Box::new(SndRegModule::new(config, num_actions, rng)?),
        Method::Rnd => Box::new(RndModule::new(config, rng)?),
        Method::Icm => Box::new(IcmModule::new(config, num_actions, rng)?),
        Method::Aep => {
            let classes = crate::clustering::require_classes(classes)?;
            Box::new(AepModule::new(config, classes.clone(), num_actions, rng)?)
        }
    })
}

/// Shuffled minibatch index lists covering `0..n` once.
pub fn minibatches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Rows of `textures` at `idx` as a `[idx.len(), TEXTURE_DIM]` tensor.
pub fn gather_textures(textures: &[Vec<f64>], idx: &[usize]) -> crate::neural::Tensor {
    let mut data = Vec::with_capacity(idx.len() * TEXTURE_DIM);
    for &i in idx {
        data.extend_from_slice(&textures[i]);
    }
    crate::neural::Tensor::new(vec![idx.len(), TEXTURE_DIM], data).expect("texture rows")
}

#[cfg(test)]
mod tests;
