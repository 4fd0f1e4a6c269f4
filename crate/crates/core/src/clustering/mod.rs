//! Phase-1 online novelty clustering and the frozen auditory event classes.

mod kmeans;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use kmeans::{
    distinct_count, kmeans, lloyd, nearest, sse, KMeansFit, DEFAULT_RESTARTS, MAX_ITERATIONS,
    TOLERANCE,
};

use crate::audio::euclidean;
use crate::error::{config_err, input_err, state_err, Error, Result};

/// Bounds on the number of event classes.
pub const K_MIN: usize = 4;
pub const K_MAX: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Fixed growth threshold; `None` derives it from the first clips.
    pub tau: Option<f64>,
    /// Multiplier on the median pairwise distance when deriving the threshold.
    pub tau_scale: f64,
    /// Number of non-silent clips used to derive the threshold.
    pub tau_clips: usize,
    /// Steps without growth after which the set counts as saturated.
    pub patience: u64,
    /// Phase-1 interaction budget in environment steps.
    pub budget: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            tau: None,
            tau_scale: 0.5,
            tau_clips: 200,
            patience: 2000,
            budget: 10_000,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tau {
            if !(t.is_finite() && t > 0.0) {
                return Err(config_err(format!("cluster threshold must be positive, got {t}")));
            }
        }
        if !(self.tau_scale.is_finite() && self.tau_scale > 0.0) {
            return Err(config_err("tau_scale must be positive"));
        }
        if self.tau_clips < 2 {
            return Err(config_err("tau_clips must be at least 2"));
        }
        Ok(())
    }
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    values.sort_by(f64::total_cmp);
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Growing set of running-mean centers over non-silent sound textures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineClusterSet {
    config: ClusterConfig,
    centers: Vec<Vec<f64>>,
    counts: Vec<u64>,
    /// Threshold in force; provisional until `tau_frozen`.
    tau: Option<f64>,
    tau_frozen: bool,
    warmup: Vec<Vec<f64>>,
    pair_distances: Vec<f64>,
    last_growth: u64,
}

impl OnlineClusterSet {
    pub fn new(config: ClusterConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            tau: config.tau,
            tau_frozen: config.tau.is_some(),
            config,
            centers: Vec::new(),
            counts: Vec::new(),
            warmup: Vec::new(),
            pair_distances: Vec::new(),
            last_growth: 0,
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn tau_frozen(&self) -> bool {
        self.tau_frozen
    }

    pub fn last_growth(&self) -> u64 {
        self.last_growth
    }

    /// Distance from `phi` to the nearest center.
    ///
    /// With no centers the bonus is the threshold, or `‖phi‖` (the distance to
    /// the silent texture) while no threshold exists yet.
    pub fn novelty_bonus(&self, phi: &[f64]) -> f64 {
        if self.centers.is_empty() {
            return self.tau.unwrap_or_else(|| phi.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        self.centers
            .iter()
            .map(|c| euclidean(c, phi))
            .fold(f64::INFINITY, f64::min)
    }

    /// Folds a clip observed at environment step `step` into the set.
    ///
    /// Silent clips are ignored. Returns whether a new center was created.
    pub fn online_update(&mut self, phi: &[f64], silent: bool, step: u64) -> Result<bool> {
        if silent {
            return Ok(false);
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(input_err("non-finite sound texture"));
        }
        if let Some(c) = self.centers.first() {
            if c.len() != phi.len() {
                return Err(input_err(format!(
                    "texture of dim {} does not match centers of dim {}",
                    phi.len(),
                    c.len()
                )));
            }
        }
        self.track_threshold(phi);
        let nearest = self
            .centers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, euclidean(c, phi)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let grow = match (nearest, self.tau) {
            (None, _) => true,
            (Some((_, d)), Some(tau)) => d > tau,
            // One clip so far and no threshold: keep it as its own center only if distinct.
            (Some((_, d)), None) => d > 0.0,
        };
        if grow {
            self.centers.push(phi.to_vec());
            self.counts.push(1);
            self.last_growth = step;
            return Ok(true);
        }
        let (i, _) = nearest.unwrap();
        self.counts[i] += 1;
        let n = self.counts[i] as f64;
        for (c, v) in self.centers[i].iter_mut().zip(phi) {
            *c += (v - *c) / n;
        }
        Ok(false)
    }

    /// Provisional threshold from the clips seen so far; frozen after `tau_clips`.
    fn track_threshold(&mut self, phi: &[f64]) {
        if self.tau_frozen {
            return;
        }
        for w in &self.warmup {
            self.pair_distances.push(euclidean(w, phi));
        }
        self.warmup.push(phi.to_vec());
        if self.pair_distances.is_empty() {
            return;
        }
        let mut d = self.pair_distances.clone();
        let m = median(&mut d);
        if m > 0.0 {
            self.tau = Some(self.config.tau_scale * m);
        }
        if self.warmup.len() >= self.config.tau_clips {
            self.tau_frozen = self.tau.is_some();
            self.warmup = Vec::new();
            self.pair_distances = Vec::new();
        }
    }

    /// True once growth has stalled for more than `patience` steps or the budget is spent.
    pub fn saturated(&self, step: u64) -> bool {
        step >= self.config.budget || step.saturating_sub(self.last_growth) > self.config.patience
    }
}

/// Frozen k-means centers over non-silent textures plus a reserved silence class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventClasses {
    centers: Vec<Vec<f64>>,
    k_events: usize,
    tau: f64,
    silence_id: usize,
}

impl EventClasses {
    pub fn new(centers: Vec<Vec<f64>>, tau: f64) -> Result<Self> {
        let k = centers.len();
        if !(K_MIN..=K_MAX).contains(&k) {
            return Err(input_err(format!("{k} event classes outside [{K_MIN}, {K_MAX}]")));
        }
        let dim = centers[0].len();
        if centers.iter().any(|c| c.len() != dim || c.iter().any(|v| !v.is_finite())) {
            return Err(input_err("event class centers must be finite and of equal dimension"));
        }
        for i in 0..k {
            for j in i + 1..k {
                if centers[i] == centers[j] {
                    return Err(input_err(format!("event class centers {i} and {j} coincide")));
                }
            }
        }
        Ok(Self {
            centers,
            k_events: k,
            tau,
            silence_id: k,
        })
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn k_events(&self) -> usize {
        self.k_events
    }

    pub fn silence_id(&self) -> usize {
        self.silence_id
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Classes the predictor must output: the events plus silence.
    pub fn num_classes(&self) -> usize {
        self.k_events + 1
    }

    /// Nearest-center id (ties to the lowest id), or the silence id.
    pub fn label(&self, phi: &[f64], silent: bool) -> usize {
        if silent {
            self.silence_id
        } else {
            nearest(&self.centers, phi).0
        }
    }

    /// Mean Euclidean distance over all pairs of centers.
    pub fn mean_pairwise_distance(&self) -> f64 {
        let k = self.centers.len();
        let mut total = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                total += euclidean(&self.centers[i], &self.centers[j]);
            }
        }
        total / (k * (k - 1) / 2) as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw: EventClasses = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let tau = raw.tau;
        let loaded = Self::new(raw.centers, tau)?;
        if loaded.silence_id != raw.silence_id || loaded.k_events != raw.k_events {
            return Err(input_err("event class file has inconsistent class ids"));
        }
        Ok(loaded)
    }
}

/// Runs k-means on the phase-1 corpus and freezes the event classes.
///
/// K is the online cluster count clamped to `[K_MIN, K_MAX]`. Fails with
/// [`Error::TooFewClusters`] when the corpus holds fewer than `K_MIN` distinct textures.
pub fn freeze_event_classes(
    corpus: &[Vec<f64>],
    online_clusters: usize,
    tau: f64,
    seed: u64,
) -> Result<EventClasses> {
    let distinct = distinct_count(corpus);
    if distinct < K_MIN {
        return Err(Error::TooFewClusters {
            found: distinct,
            required: K_MIN,
            report: format!(
                "{} non-silent clips, {distinct} distinct, {online_clusters} online clusters",
                corpus.len()
            ),
        });
    }
    let k = online_clusters.clamp(K_MIN, K_MAX).min(distinct);
    let fit = kmeans(corpus, k, seed, DEFAULT_RESTARTS)?;
    log::info!("froze {k} event classes from {} clips, SSE {:.4}", corpus.len(), fit.sse);
    EventClasses::new(fit.centers, tau)
}

/// Ensures classes exist before use.
pub fn require_classes(classes: Option<&EventClasses>) -> Result<&EventClasses> {
    classes.ok_or_else(|| state_err("event classes are not frozen yet"))
}

#[cfg(test)]
mod tests;
