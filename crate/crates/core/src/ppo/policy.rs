//! Conv policy with action logits and two value heads sharing one trunk.

use rand::Rng;

use super::PpoConfig;
use crate::envs::FRAME_LEN;
use crate::error::{Error, Result};
use crate::intrinsic::gather_frames;
use crate::neural::loss::log_softmax;
use crate::neural::{Layer, Network, Tensor};

/// Initial scale of the logit rows, so the starting policy is near uniform.
const LOGIT_INIT_SCALE: f64 = 0.01;

/// Output row layout: `[logits (num_actions), v_ext, v_int]`.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub net: Network,
    num_actions: usize,
}

/// Per-sample heads of one evaluation.
#[derive(Debug, Clone)]
pub struct PolicyOutput {
    pub log_probs: Vec<Vec<f64>>,
    pub v_ext: Vec<f64>,
    pub v_int: Vec<f64>,
}

/// Entropy of a distribution given by its log-probabilities.
pub fn entropy(log_probs: &[f64]) -> f64 {
    -log_probs
        .iter()
        .map(|lp| if lp.is_finite() { lp.exp() * lp } else { 0.0 })
        .sum::<f64>()
}

impl PolicyNet {
    pub fn new(config: &PpoConfig, num_actions: usize, rng: &mut impl Rng) -> Result<Self> {
        config.encoder.validate()?;
        let mut net = config
            .encoder
            .builder()
            .dense(config.hidden)
            .relu()
            .dense(num_actions + 2)
            .build(rng)?;
        if let Some(Layer::Dense(d)) = net.layers_mut().last_mut() {
            let inputs = d.inputs;
            d.weight.data_mut()[..num_actions * inputs]
                .iter_mut()
                .for_each(|w| *w *= LOGIT_INIT_SCALE);
        }
        Ok(Self { net, num_actions })
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Splits raw outputs into heads; non-finite logits abort with a dump.
    pub fn split(&self, raw: &Tensor) -> Result<PolicyOutput> {
        let a = self.num_actions;
        let n = raw.batch();
        let mut out = PolicyOutput {
            log_probs: Vec::with_capacity(n),
            v_ext: Vec::with_capacity(n),
            v_int: Vec::with_capacity(n),
        };
        for i in 0..n {
            let row = raw.row(i);
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("policy output row {i}: {row:?}")));
            }
            out.log_probs.push(log_softmax(&row[..a]));
            out.v_ext.push(row[a]);
            out.v_int.push(row[a + 1]);
        }
        Ok(out)
    }

    /// Pure evaluation of a flat pixel buffer holding `frames.len() / FRAME_LEN` frames.
    pub fn evaluate(&self, frames: &[f64]) -> Result<PolicyOutput> {
        let idx: Vec<usize> = (0..frames.len() / FRAME_LEN).collect();
        let raw = self.net.forward(&gather_frames(frames, &idx))?;
        self.split(&raw)
    }

    /// Samples one action per row by inverse CDF on a uniform draw.
    pub fn sample(log_probs: &[f64], rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, lp) in log_probs.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                return i;
            }
        }
        log_probs.len() - 1
    }
}
