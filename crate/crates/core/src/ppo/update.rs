//! Clipped-surrogate PPO update with two value heads.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{entropy, Advantages, PolicyNet, PolicyOutput, PpoConfig, RolloutBatch};
use crate::error::{config_err, Result};
use crate::intrinsic::gather_frames;
use crate::neural::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub v_ext_loss: f64,
    pub v_int_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    /// Mean of the non-negative estimator `(r - 1) - ln r` of KL(old ‖ new) over the last epoch run.
    pub approx_kl: f64,
    pub epochs_run: usize,
    pub early_stopped: bool,
}

/// `c_ext * A_ext + c_int * A_int`; a zero coefficient drops its stream entirely.
pub fn combined_advantages(adv_ext: &[f64], adv_int: &[f64], c_ext: f64, c_int: f64) -> Vec<f64> {
    (0..adv_ext.len().max(adv_int.len()))
        .map(|i| {
            let mut a = 0.0;
            if c_ext != 0.0 {
                a += c_ext * adv_ext[i];
            }
            if c_int != 0.0 {
                a += c_int * adv_int[i];
            }
            a
        })
        .collect()
}

/// Clipped objective `min(r A, clip(r, 1-ε, 1+ε) A)` and its derivative with
/// respect to `log π_new`, which is `r A` where the unclipped term is active and 0 otherwise.
pub fn surrogate_grad(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    values.iter_mut().for_each(|v| *v = (*v - mean) / (std + 1e-8));
}

/// Loss terms of one minibatch and the gradient of the total loss with
/// respect to the raw network outputs.
pub(crate) struct MinibatchLoss {
    /// Total loss: surrogate + value terms - entropy bonus, averaged over rows.
    #[cfg_attr(not(test), allow(dead_code))]
    pub total: f64,
    pub grad: Tensor,
    /// Row sums of: -objective, value losses (ext, int), entropy, clipped flag, KL estimate.
    pub sums: [f64; 6],
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn minibatch_loss(
    raw: &Tensor,
    out: &PolicyOutput,
    idx: &[usize],
    batch: &RolloutBatch,
    adv: &[f64],
    ext: &Advantages,
    int: &Advantages,
    config: &PpoConfig,
) -> MinibatchLoss {
    let a_count = raw.row_len() - 2;
    let m = idx.len() as f64;
    let mut grad = Tensor::zeros(raw.shape());
    let mut sums = [0.0f64; 6];
    let mut total = 0.0;
    for (r, &i) in idx.iter().enumerate() {
        let logp = &out.log_probs[r];
        let act = batch.actions[i];
        let log_ratio = logp[act] - batch.log_probs[i];
        let ratio = log_ratio.exp();
        let (obj, d_obj) = surrogate_grad(ratio, adv[r], config.clip);
        let h = entropy(logp);
        let g = grad.row_mut(r);
        for j in 0..a_count {
            let p = logp[j].exp();
            let onehot = if j == act { 1.0 } else { 0.0 };
            g[j] = -d_obj / m * (onehot - p) + config.ent_coef / m * p * (logp[j] + h);
        }
        let ve = out.v_ext[r] - ext.returns[i];
        let vi = out.v_int[r] - int.returns[i];
        total += -obj - config.ent_coef * h;
        if config.c_ext > 0.0 {
            g[a_count] = config.vf_coef * ve / m;
            total += config.vf_coef * 0.5 * ve * ve;
        }
        if config.c_int > 0.0 {
            g[a_count + 1] = config.vf_coef * vi / m;
            total += config.vf_coef * 0.5 * vi * vi;
        }
        sums[0] -= obj;
        sums[1] += 0.5 * ve * ve;
        sums[2] += 0.5 * vi * vi;
        sums[3] += h;
        sums[4] += f64::from(u8::from((ratio - 1.0).abs() > config.clip));
        sums[5] += (ratio - 1.0) - log_ratio;
    }
    MinibatchLoss {
        total: total / m,
        grad,
        sums,
    }
}

/// Epochs of shuffled minibatch Adam steps on the clipped surrogate plus
/// value regression and an entropy bonus.
///
/// The extrinsic value head is only trained when `c_ext > 0`, so intrinsic-only
/// runs never push extrinsic reward through any gradient.
pub fn ppo_update(
    policy: &mut PolicyNet,
    batch: &RolloutBatch,
    ext: &Advantages,
    int: &Advantages,
    config: &PpoConfig,
    rng: &mut impl Rng,
) -> Result<PpoStats> {
    let n = batch.len();
    if n == 0 || ext.advantages.len() != n || int.advantages.len() != n {
        return Err(config_err("advantages do not match the rollout"));
    }
    let combined = combined_advantages(&ext.advantages, &int.advantages, config.c_ext, config.c_int);
    let mb_size = n.div_ceil(config.minibatches);
    let mut stats = PpoStats::default();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut sums = [0.0f64; 6];
        let mut count = 0.0;
        for idx in order.chunks(mb_size) {
            let m = idx.len() as f64;
            let raw = policy.net.forward_train(&gather_frames(&batch.frames, idx))?;
            let out = policy.split(&raw)?;
            let mut adv: Vec<f64> = idx.iter().map(|&i| combined[i]).collect();
            if idx.len() > 1 {
                standardize(&mut adv);
            }
            let terms = minibatch_loss(&raw, &out, idx, batch, &adv, ext, int, config);
            for (acc, v) in sums.iter_mut().zip(terms.sums) {
                *acc += v;
            }
            count += m;
            let mut grads = policy.net.backward(&terms.grad)?;
            grads.clip_norm(config.max_grad_norm);
            policy.net.adam_step(&grads, config.lr)?;
        }
        stats = PpoStats {
            policy_loss: sums[0] / count,
            v_ext_loss: sums[1] / count,
            v_int_loss: sums[2] / count,
            entropy: sums[3] / count,
            clip_frac: sums[4] / count,
            approx_kl: sums[5] / count,
            epochs_run: epoch + 1,
            early_stopped: false,
        };
        if stats.approx_kl > config.target_kl {
            log::warn!(
                "approximate KL {:.4} exceeds {:.4}; stopping after epoch {}",
                stats.approx_kl,
                config.target_kl,
                epoch + 1
            );
            stats.early_stopped = epoch + 1 < config.epochs;
            break;
        }
    }
    Ok(stats)
}
