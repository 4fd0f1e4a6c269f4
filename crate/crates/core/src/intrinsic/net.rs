//! Image encoder plus a dense head that also sees an extra feature vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{FRAME_LEN, FRAME_SIZE};
use crate::error::{config_err, Result};
use crate::neural::{concat_rows, Gradients, Network, NetworkBuilder, Tensor};

/// Valid-padding conv stack `(out_channels, kernel, stride)`, each followed by ReLU,
/// then a dense ReLU embedding of width `hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub convs: Vec<(usize, usize, usize)>,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            convs: vec![(4, 4, 4), (8, 3, 2), (8, 3, 2)],
        }
    }
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.convs.is_empty() {
            return Err(config_err("encoder needs at least one conv layer"));
        }
        let mut size = FRAME_SIZE;
        for &(c, k, s) in &self.convs {
            if c == 0 || k == 0 || s == 0 || k > size {
                return Err(config_err(format!("conv ({c}, {k}, {s}) does not fit input {size}")));
            }
            size = (size - k) / s + 1;
        }
        Ok(())
    }

    /// Conv stack and flatten over one grayscale frame.
    pub fn builder(&self) -> NetworkBuilder {
        let mut b = NetworkBuilder::new(&[FRAME_SIZE, FRAME_SIZE, 1]);
        for &(c, k, s) in &self.convs {
            b = b.conv2d(c, k, s).relu();
        }
        b.flatten()
    }

    /// Encoder ending in a ReLU embedding of width `hidden`.
    pub fn build(&self, hidden: usize, rng: &mut impl Rng) -> Result<Network> {
        self.validate()?;
        self.builder().dense(hidden).relu().build(rng)
    }
}

/// Frames at `idx` out of a flat pixel buffer, as `[idx.len(), 84, 84, 1]`.
pub fn gather_frames(frames: &[f64], idx: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(idx.len() * FRAME_LEN);
    for &i in idx {
        data.extend_from_slice(&frames[i * FRAME_LEN..(i + 1) * FRAME_LEN]);
    }
    Tensor::new(vec![idx.len(), FRAME_SIZE, FRAME_SIZE, 1], data).expect("frame rows")
}

/// `head(concat(encoder(frame), extra))`, trained end to end.
#[derive(Debug, Clone)]
pub struct ConditionedNet {
    pub encoder: Network,
    pub head: Network,
    extra: usize,
}

impl ConditionedNet {
    /// Two-layer head: dense `hidden` + ReLU, then a linear layer of `outputs`.
    pub fn new(
        spec: &EncoderSpec,
        hidden: usize,
        extra: usize,
        outputs: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let encoder = spec.build(hidden, rng)?;
        let head = NetworkBuilder::new(&[hidden + extra])
            .dense(hidden)
            .relu()
            .dense(outputs)
            .build(rng)?;
        Ok(Self { encoder, head, extra })
    }

    pub fn extra_width(&self) -> usize {
        self.extra
    }

    pub fn output_len(&self) -> usize {
        self.head.output_len()
    }

    fn joined(&self, features: Tensor, extra: Option<&Tensor>) -> Result<Tensor> {
        match (extra, self.extra) {
            (None, 0) => Ok(features),
            (Some(e), w) if w > 0 && e.row_len() == w && e.batch() == features.batch() => {
                Ok(concat_rows(&features, e))
            }
            _ => Err(config_err(format!("conditioned net expects {} extra columns", self.extra))),
        }
    }

    pub fn forward(&self, frames: &Tensor, extra: Option<&Tensor>) -> Result<Tensor> {
        let features = self.encoder.forward(frames)?;
        self.head.forward(&self.joined(features, extra)?)
    }

    pub fn forward_train(&mut self, frames: &Tensor, extra: Option<&Tensor>) -> Result<Tensor> {
        let features = self.encoder.forward_train(frames)?;
        let joined = self.joined(features, extra)?;
        self.head.forward_train(&joined)
    }

    /// Gradients for `(encoder, head)` after [`forward_train`](Self::forward_train).
    pub fn backward(&mut self, grad: &Tensor) -> Result<(Gradients, Gradients)> {
        let head = self.head.backward_with_input(grad)?;
        let input = head.input.as_ref().expect("input gradient requested");
        let width = self.encoder.output_len();
        let feature_grad = crate::neural::take_columns(input, width);
        let encoder = self.encoder.backward(&feature_grad)?;
        Ok((encoder, head))
    }

    /// Clips the joint gradient norm and applies one Adam step to both parts.
    pub fn apply(&mut self, mut grads: (Gradients, Gradients), lr: f64, max_norm: f64) -> Result<f64> {
        let norm = clip_joint(&mut [&mut grads.0, &mut grads.1], max_norm);
        self.encoder.adam_step(&grads.0, lr)?;
        self.head.adam_step(&grads.1, lr)?;
        Ok(norm)
    }

    pub fn copy_params_from(&mut self, other: &ConditionedNet) -> Result<()> {
        self.encoder.copy_params_from(&other.encoder)?;
        self.head.copy_params_from(&other.head)
    }

    pub fn save(&self, prefix: &std::path::Path, name: &str) -> Result<()> {
        let with = |part: &str| {
            let mut p = prefix.as_os_str().to_owned();
            p.push(format!("{name}_{part}"));
            std::path::PathBuf::from(p)
        };
        self.encoder.save(&with("encoder"))?;
        self.head.save(&with("head"))
    }
}

/// Scales several gradient sets together so their joint norm is at most `max_norm`.
///
/// Returns the joint norm before clipping.
pub fn clip_joint(grads: &mut [&mut Gradients], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.global_norm().powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        for g in grads.iter_mut() {
            g.scale(max_norm / norm);
        }
    }
    norm
}
