//! Curiosity from forward-model error in an inverse-dynamics feature space.

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::net::{clip_joint, gather_frames};
use super::{gather_textures, minibatches, IntrinsicConfig, Method, ModuleStats, RewardModule, Transitions};
use crate::audio::TEXTURE_DIM;
use crate::error::{config_err, Result};
use crate::neural::loss::{softmax_cross_entropy, squared_error};
use crate::neural::{concat_rows, one_hot, take_columns, Network, NetworkBuilder, Tensor};

const EVAL_CHUNK: usize = 256;

/// Reward is `0.5 * ‖f(φ(s), a) − φ(s')‖²`. The encoder φ learns only from the
/// inverse model; the forward target is treated as a constant. With
/// `use_audio` the forward model also predicts the next sound texture.
pub struct IcmModule {
    config: IntrinsicConfig,
    pub encoder: Network,
    pub inverse: Network,
    pub forward: Network,
    num_actions: usize,
}

fn split_rows(t: &Tensor, n: usize) -> (Tensor, Tensor) {
    let w = t.row_len();
    let (a, b) = t.data().split_at(n * w);
    (
        Tensor::new(vec![n, w], a.to_vec()).expect("rows"),
        Tensor::new(vec![t.batch() - n, w], b.to_vec()).expect("rows"),
    )
}

fn drop_columns(t: &Tensor, from: usize) -> Tensor {
    let n = t.batch();
    let mut data = Vec::with_capacity(n * (t.row_len() - from));
    for i in 0..n {
        data.extend_from_slice(&t.row(i)[from..]);
    }
    Tensor::new(vec![n, t.row_len() - from], data).expect("rows")
}

impl IcmModule {
    pub fn new(config: &IntrinsicConfig, num_actions: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        if num_actions == 0 {
            return Err(config_err("ICM needs at least one action"));
        }
        let h = config.hidden;
        let target = h + if config.use_audio { TEXTURE_DIM } else { 0 };
        let encoder = config.encoder.build(h, rng)?;
        let inverse = NetworkBuilder::new(&[2 * h]).dense(h).relu().dense(num_actions).build(rng)?;
        let forward = NetworkBuilder::new(&[h + num_actions]).dense(h).relu().dense(target).build(rng)?;
        Ok(Self {
            config: config.clone(),
            encoder,
            inverse,
            forward,
            num_actions,
        })
    }

    fn forward_target(&self, next_features: &Tensor, batch: &Transitions, idx: &[usize]) -> Tensor {
        if self.config.use_audio {
            concat_rows(next_features, &gather_textures(batch.textures, idx))
        } else {
            next_features.clone()
        }
    }

    fn score(&self, batch: &Transitions) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..batch.len()).collect();
        let mut out = Vec::with_capacity(batch.len());
        for idx in all.chunks(EVAL_CHUNK) {
            let phi = self.encoder.forward(&gather_frames(batch.frames, idx))?;
            let phi_next = self.encoder.forward(&gather_frames(batch.next_frames, idx))?;
            let actions: Vec<usize> = idx.iter().map(|&i| batch.actions[i]).collect();
            let pred = self
                .forward
                .forward(&concat_rows(&phi, &one_hot(&actions, self.num_actions)))?;
            let target = self.forward_target(&phi_next, batch, idx);
            out.extend(squared_error(&pred, &target)?.0.into_iter().map(|v| 0.5 * v));
        }
        Ok(out)
    }

    fn train_step(&mut self, batch: &Transitions, idx: &[usize]) -> Result<()> {
        let n = idx.len();
        let mut stacked = gather_frames(batch.frames, idx).into_data();
        stacked.extend(gather_frames(batch.next_frames, idx).into_data());
        let shape = vec![2 * n, crate::envs::FRAME_SIZE, crate::envs::FRAME_SIZE, 1];
        let phi_all = self.encoder.forward_train(&Tensor::new(shape, stacked)?)?;
        let (phi, phi_next) = split_rows(&phi_all, n);
        let h = phi.row_len();
        let beta = self.config.icm_beta;
        let actions: Vec<usize> = idx.iter().map(|&i| batch.actions[i]).collect();

        let logits = self.inverse.forward_train(&concat_rows(&phi, &phi_next))?;
        let (_, mut inv_grad) = softmax_cross_entropy(&logits, &actions)?;
        inv_grad.data_mut().iter_mut().for_each(|g| *g *= 1.0 - beta);
        let mut inv = self.inverse.backward_with_input(&inv_grad)?;
        let d_in = inv.input.take().expect("input gradient requested");
        let mut d_phi = take_columns(&d_in, h).into_data();
        d_phi.extend(drop_columns(&d_in, h).into_data());
        let d_phi = Tensor::new(vec![2 * n, h], d_phi)?;

        let pred = self
            .forward
            .forward_train(&concat_rows(&phi, &one_hot(&actions, self.num_actions)))?;
        let target = self.forward_target(&phi_next, batch, idx);
        let (_, mut fwd_grad) = squared_error(&pred, &target)?;
        fwd_grad.data_mut().iter_mut().for_each(|g| *g *= 0.5 * beta);
        let mut fwd = self.forward.backward(&fwd_grad)?;

        let mut enc = self.encoder.backward(&d_phi)?;
        clip_joint(&mut [&mut enc, &mut inv, &mut fwd], self.config.max_grad_norm);
        let lr = self.config.lr;
        self.encoder.adam_step(&enc, lr)?;
        self.inverse.adam_step(&inv, lr)?;
        self.forward.adam_step(&fwd, lr)?;
        Ok(())
    }
}

impl RewardModule for IcmModule {
    fn method(&self) -> Method {
        Method::Icm
    }

    fn compute_rewards(&mut self, batch: &Transitions) -> Result<Vec<f64>> {
        batch.validate()?;
        self.score(batch)
    }

    fn update(&mut self, batch: &Transitions, rng: &mut ChaCha8Rng) -> Result<ModuleStats> {
        batch.validate()?;
        if batch.is_empty() {
            return Err(config_err("ICM update on an empty batch"));
        }
        let before = self.score(batch)?;
        for _ in 0..self.config.epochs {
            for idx in minibatches(batch.len(), self.config.minibatch, rng) {
                self.train_step(batch, &idx)?;
            }
        }
        Ok(ModuleStats {
            loss: before.iter().sum::<f64>() / before.len() as f64,
            accuracy: None,
        })
    }

    fn save(&self, prefix: &Path) -> Result<()> {
        let with = |part: &str| {
            let mut p = prefix.as_os_str().to_owned();
            p.push(format!("icm_{part}"));
            std::path::PathBuf::from(p)
        };
        self.encoder.save(&with("encoder"))?;
        self.inverse.save(&with("inverse"))?;
        self.forward.save(&with("forward"))
    }

    fn has_predictor(&self) -> bool {
        true
    }
}
