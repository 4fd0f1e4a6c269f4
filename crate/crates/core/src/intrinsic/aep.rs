//! Auditory event prediction: classify the next sound event from frame and action.

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::net::{gather_frames, ConditionedNet};
use super::{minibatches, IntrinsicConfig, Method, ModuleStats, RewardModule, Transitions};
use crate::clustering::EventClasses;
use crate::error::{config_err, Result};
use crate::neural::loss::{log_softmax, softmax_cross_entropy};
use crate::neural::{one_hot, Tensor};

/// Rows processed per forward pass when scoring.
const EVAL_CHUNK: usize = 256;

pub struct AepModule {
    config: IntrinsicConfig,
    classes: EventClasses,
    net: ConditionedNet,
    num_actions: usize,
}

impl AepModule {
    pub fn new(
        config: &IntrinsicConfig,
        classes: EventClasses,
        num_actions: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        if num_actions == 0 {
            return Err(config_err("AEP needs at least one action"));
        }
        let net = ConditionedNet::new(
            &config.encoder,
            config.hidden,
            num_actions,
            classes.num_classes(),
            rng,
        )?;
        Ok(Self {
            config: config.clone(),
            classes,
            net,
            num_actions,
        })
    }

    pub fn classes(&self) -> &EventClasses {
        &self.classes
    }

    pub fn net(&self) -> &ConditionedNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut ConditionedNet {
        &mut self.net
    }

    /// Event label of every transition under the frozen classes.
    pub fn labels(&self, batch: &Transitions) -> Vec<usize> {
        (0..batch.len())
            .map(|i| self.classes.label(&batch.textures[i], batch.silent[i]))
            .collect()
    }

    /// Class logits for the frames and actions at `idx`.
    pub fn logits(&self, batch: &Transitions, idx: &[usize]) -> Result<Tensor> {
        let frames = gather_frames(batch.frames, idx);
        let actions: Vec<usize> = idx.iter().map(|&i| batch.actions[i]).collect();
        self.net.forward(&frames, Some(&one_hot(&actions, self.num_actions)))
    }

    /// Cross-entropy `-log p(y)` for each transition, plus argmax hits.
    fn score(&self, batch: &Transitions, labels: &[usize]) -> Result<(Vec<f64>, usize)> {
        let mut losses = Vec::with_capacity(batch.len());
        let mut hits = 0;
        let all: Vec<usize> = (0..batch.len()).collect();
        for idx in all.chunks(EVAL_CHUNK) {
            let logits = self.logits(batch, idx)?;
            for (r, &i) in idx.iter().enumerate() {
                let logp = log_softmax(logits.row(r));
                losses.push(-logp[labels[i]]);
                let best = logp
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(j, _)| j)
                    .unwrap_or(0);
                hits += usize::from(best == labels[i]);
            }
        }
        Ok((losses, hits))
    }

    /// One minibatch gradient step on explicit labels; returns the pre-step mean loss.
    pub fn train_step(&mut self, batch: &Transitions, idx: &[usize], labels: &[usize]) -> Result<f64> {
        let frames = gather_frames(batch.frames, idx);
        let actions: Vec<usize> = idx.iter().map(|&i| batch.actions[i]).collect();
        let extra = one_hot(&actions, self.num_actions);
        let logits = self.net.forward_train(&frames, Some(&extra))?;
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let (losses, grad) = softmax_cross_entropy(&logits, &y)?;
        let grads = self.net.backward(&grad)?;
        self.net.apply(grads, self.config.lr, self.config.max_grad_norm)?;
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }

    /// Minibatched epochs over the batch with the given labels.
    pub fn fit(&mut self, batch: &Transitions, labels: &[usize], rng: &mut ChaCha8Rng) -> Result<()> {
        for _ in 0..self.config.epochs {
            for idx in minibatches(batch.len(), self.config.minibatch, rng) {
                self.train_step(batch, &idx, labels)?;
            }
        }
        Ok(())
    }
}

impl RewardModule for AepModule {
    fn method(&self) -> Method {
        Method::Aep
    }

    fn compute_rewards(&mut self, batch: &Transitions) -> Result<Vec<f64>> {
        batch.validate()?;
        let labels = self.labels(batch);
        Ok(self.score(batch, &labels)?.0)
    }

    fn update(&mut self, batch: &Transitions, rng: &mut ChaCha8Rng) -> Result<ModuleStats> {
        batch.validate()?;
        if batch.is_empty() {
            return Err(config_err("AEP update on an empty batch"));
        }
        let labels = self.labels(batch);
        let (losses, hits) = self.score(batch, &labels)?;
        self.fit(batch, &labels, rng)?;
        Ok(ModuleStats {
            loss: losses.iter().sum::<f64>() / losses.len() as f64,
            accuracy: Some(hits as f64 / batch.len() as f64),
        })
    }

    fn save(&self, prefix: &Path) -> Result<()> {
        self.net.save(prefix, "aep")?;
        let mut p = prefix.as_os_str().to_owned();
        p.push("event_classes.json");
        self.classes.save(Path::new(&p))
    }

    fn has_predictor(&self) -> bool {
        true
    }
}

