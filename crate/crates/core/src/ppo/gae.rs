//! Generalized advantage estimation over a time-major buffer.

use crate::error::{config_err, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub advantages: Vec<f64>,
    /// `advantages + values`, the value-head regression targets.
    pub returns: Vec<f64>,
}

/// TD(λ) advantages for `n_envs` interleaved streams of length `T`.
///
/// `dones[i]` marks transition `i` as the last of its episode, so the next
/// value is not bootstrapped across it. With `episodic = false` the flags are
/// ignored. `last_values` are the values of the observations after the final step.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_values: &[f64],
    gamma: f64,
    lambda: f64,
    episodic: bool,
) -> Result<Advantages> {
    let n_envs = last_values.len();
    let len = rewards.len();
    if n_envs == 0 || values.len() != len || dones.len() != len || len % n_envs != 0 {
        return Err(config_err(format!(
            "gae lengths disagree: {len} rewards, {} values, {} dones, {n_envs} envs",
            values.len(),
            dones.len()
        )));
    }
    let steps = len / n_envs;
    let mut advantages = vec![0.0; len];
    for e in 0..n_envs {
        let mut next_adv = 0.0;
        let mut next_value = last_values[e];
        for t in (0..steps).rev() {
            let i = t * n_envs + e;
            let keep = if episodic && dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * next_value * keep - values[i];
            next_adv = delta + gamma * lambda * keep * next_adv;
            advantages[i] = next_adv;
            next_value = values[i];
        }
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok(Advantages { advantages, returns })
}
