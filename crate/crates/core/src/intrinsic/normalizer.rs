//! Running scale normalization of intrinsic rewards.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

pub const NORM_EPSILON: f64 = 1e-8;

/// Streaming mean and variance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance; zero until two samples arrive. Never negative.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Divides each reward by the running std of a per-env discounted return proxy.
///
/// The proxy `R <- gamma * R + r` of an i.i.d. stream with std `s` has std
/// `s / sqrt(1 - gamma^2)`, so such a stream comes out with std
/// `sqrt(1 - gamma^2)`: unit at `gamma = 0`, about 0.14 at 0.99.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardNormalizer {
    gamma: f64,
    returns: Vec<f64>,
    stats: Welford,
}

impl RewardNormalizer {
    pub fn new(gamma: f64, n_envs: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) || n_envs == 0 {
            return Err(config_err("normalizer needs gamma in [0, 1) and at least one env"));
        }
        Ok(Self {
            gamma,
            returns: vec![0.0; n_envs],
            stats: Welford::default(),
        })
    }

    pub fn stats(&self) -> &Welford {
        &self.stats
    }

    /// Current divisor; 1 while fewer than two samples were seen.
    pub fn scale(&self) -> f64 {
        if self.stats.count() < 2 {
            1.0
        } else {
            self.stats.std() + NORM_EPSILON
        }
    }

    /// Normalizes one step of rewards, one per env, updating the state first.
    pub fn normalize_step(&mut self, rewards: &[f64]) -> Vec<f64> {
        debug_assert_eq!(rewards.len(), self.returns.len());
        for (ret, r) in self.returns.iter_mut().zip(rewards) {
            *ret = self.gamma * *ret + r;
            self.stats.push(*ret);
        }
        let scale = self.scale();
        rewards.iter().map(|r| r / scale).collect()
    }

    /// Normalizes a time-major batch (`index = t * n_envs + env`).
    pub fn normalize_batch(&mut self, rewards: &[f64]) -> Vec<f64> {
        let n = self.returns.len();
        debug_assert_eq!(rewards.len() % n, 0);
        rewards.chunks(n).flat_map(|row| self.normalize_step(row)).collect()
    }

    /// Single-stream form; the normalizer must have been built for one env.
    pub fn normalize(&mut self, r: f64) -> f64 {
        assert_eq!(self.returns.len(), 1, "normalize() needs a single-env normalizer");
        self.normalize_step(&[r])[0]
    }
}
