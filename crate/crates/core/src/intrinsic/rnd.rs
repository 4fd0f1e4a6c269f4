//! Random network distillation: reward the error of imitating a fixed random net.

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::net::{gather_frames, ConditionedNet};
use super::{gather_textures, minibatches, IntrinsicConfig, Method, ModuleStats, RewardModule, Transitions};
use crate::audio::TEXTURE_DIM;
use crate::error::{config_err, Result};
use crate::neural::loss::squared_error;
use crate::neural::Tensor;

const EVAL_CHUNK: usize = 256;

/// Target and predictor share one architecture. Both read `s_{t+1}`, plus
/// its sound texture when `use_audio` is set.
pub struct RndModule {
    config: IntrinsicConfig,
    target: ConditionedNet,
    predictor: ConditionedNet,
}

impl RndModule {
    pub fn new(config: &IntrinsicConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let extra = if config.use_audio { TEXTURE_DIM } else { 0 };
        let target = ConditionedNet::new(&config.encoder, config.hidden, extra, config.hidden, rng)?;
        let predictor = ConditionedNet::new(&config.encoder, config.hidden, extra, config.hidden, rng)?;
        Ok(Self {
            config: config.clone(),
            target,
            predictor,
        })
    }

    pub fn target(&self) -> &ConditionedNet {
        &self.target
    }

    pub fn predictor_mut(&mut self) -> &mut ConditionedNet {
        &mut self.predictor
    }

    fn inputs(&self, batch: &Transitions, idx: &[usize]) -> (Tensor, Option<Tensor>) {
        let frames = gather_frames(batch.next_frames, idx);
        let extra = self.config.use_audio.then(|| gather_textures(batch.textures, idx));
        (frames, extra)
    }

    /// Target outputs (flat, `output_len` per row) and prediction errors.
    fn score(&self, batch: &Transitions) -> Result<(Vec<f64>, Vec<f64>)> {
        let all: Vec<usize> = (0..batch.len()).collect();
        let mut targets = Vec::with_capacity(batch.len() * self.target.output_len());
        let mut errors = Vec::with_capacity(batch.len());
        for idx in all.chunks(EVAL_CHUNK) {
            let (frames, extra) = self.inputs(batch, idx);
            let target = self.target.forward(&frames, extra.as_ref())?;
            let pred = self.predictor.forward(&frames, extra.as_ref())?;
            errors.extend(squared_error(&pred, &target)?.0);
            targets.extend_from_slice(target.data());
        }
        Ok((targets, errors))
    }
}

impl RewardModule for RndModule {
    fn method(&self) -> Method {
        Method::Rnd
    }

    fn compute_rewards(&mut self, batch: &Transitions) -> Result<Vec<f64>> {
        batch.validate()?;
        Ok(self.score(batch)?.1)
    }

    fn update(&mut self, batch: &Transitions, rng: &mut ChaCha8Rng) -> Result<ModuleStats> {
        batch.validate()?;
        if batch.is_empty() {
            return Err(config_err("RND update on an empty batch"));
        }
        // The target is frozen, so its outputs are computed once per update.
        let (targets, before) = self.score(batch)?;
        let width = self.target.output_len();
        for _ in 0..self.config.epochs {
            for idx in minibatches(batch.len(), self.config.minibatch, rng) {
                let (frames, extra) = self.inputs(batch, &idx);
                let mut rows = Vec::with_capacity(idx.len() * width);
                for &i in &idx {
                    rows.extend_from_slice(&targets[i * width..(i + 1) * width]);
                }
                let target = Tensor::new(vec![idx.len(), width], rows)?;
                let pred = self.predictor.forward_train(&frames, extra.as_ref())?;
                let (_, grad) = squared_error(&pred, &target)?;
                let grads = self.predictor.backward(&grad)?;
                self.predictor.apply(grads, self.config.lr, self.config.max_grad_norm)?;
            }
        }
        Ok(ModuleStats {
            loss: before.iter().sum::<f64>() / before.len() as f64,
            accuracy: None,
        })
    }

    fn save(&self, prefix: &Path) -> Result<()> {
        self.target.save(prefix, "rnd_target")?;
        self.predictor.save(prefix, "rnd_predictor")
    }

    fn has_predictor(&self) -> bool {
        true
    }
}
