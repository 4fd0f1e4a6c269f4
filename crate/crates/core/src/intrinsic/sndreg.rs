//! Ablation: regress the next sound texture instead of classifying its event.

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::net::{gather_frames, ConditionedNet};
use super::{gather_textures, minibatches, IntrinsicConfig, Method, ModuleStats, RewardModule, Transitions};
use crate::audio::TEXTURE_DIM;
use crate::error::{config_err, Result};
use crate::neural::loss::squared_error;
use crate::neural::{one_hot, Tensor};

const EVAL_CHUNK: usize = 256;

pub struct SndRegModule {
    config: IntrinsicConfig,
    net: ConditionedNet,
    num_actions: usize,
}

impl SndRegModule {
    pub fn new(config: &IntrinsicConfig, num_actions: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        if num_actions == 0 {
            return Err(config_err("sound regression needs at least one action"));
        }
        let net = ConditionedNet::new(&config.encoder, config.hidden, num_actions, TEXTURE_DIM, rng)?;
        Ok(Self {
            config: config.clone(),
            net,
            num_actions,
        })
    }

    pub fn net_mut(&mut self) -> &mut ConditionedNet {
        &mut self.net
    }

    pub fn predict(&self, batch: &Transitions, idx: &[usize]) -> Result<Tensor> {
        let frames = gather_frames(batch.frames, idx);
        let actions: Vec<usize> = idx.iter().map(|&i| batch.actions[i]).collect();
        self.net.forward(&frames, Some(&one_hot(&actions, self.num_actions)))
    }

    /// Squared L2 distance between predicted and observed texture per transition.
    fn score(&self, batch: &Transitions) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..batch.len()).collect();
        let mut out = Vec::with_capacity(batch.len());
        for idx in all.chunks(EVAL_CHUNK) {
            let pred = self.predict(batch, idx)?;
            out.extend(squared_error(&pred, &gather_textures(batch.textures, idx))?.0);
        }
        Ok(out)
    }
}

impl RewardModule for SndRegModule {
    fn method(&self) -> Method {
        Method::Sndreg
    }

    fn compute_rewards(&mut self, batch: &Transitions) -> Result<Vec<f64>> {
        batch.validate()?;
        self.score(batch)
    }

    fn update(&mut self, batch: &Transitions, rng: &mut ChaCha8Rng) -> Result<ModuleStats> {
        batch.validate()?;
        if batch.is_empty() {
            return Err(config_err("sound regression update on an empty batch"));
        }
        let before = self.score(batch)?;
        for _ in 0..self.config.epochs {
            for idx in minibatches(batch.len(), self.config.minibatch, rng) {
                let frames = gather_frames(batch.frames, &idx);
                let actions: Vec<usize> = idx.iter().map(|&i| batch.actions[i]).collect();
                let extra = one_hot(&actions, self.num_actions);
                let pred = self.net.forward_train(&frames, Some(&extra))?;
                let (_, grad) = squared_error(&pred, &gather_textures(batch.textures, &idx))?;
                let grads = self.net.backward(&grad)?;
                self.net.apply(grads, self.config.lr, self.config.max_grad_norm)?;
            }
        }
        Ok(ModuleStats {
            loss: before.iter().sum::<f64>() / before.len() as f64,
            accuracy: None,
        })
    }

    fn save(&self, prefix: &Path) -> Result<()> {
        self.net.save(prefix, "sndreg")
    }

    fn has_predictor(&self) -> bool {
        true
    }
}
