//! Distance-to-nearest-sound-cluster reward.

use rand_chacha::ChaCha8Rng;

use super::{Method, ModuleStats, RewardModule, Transitions};
use crate::clustering::{ClusterConfig, OnlineClusterSet};
use crate::error::Result;

/// Rewards each sounding step by its novelty bonus, then folds it into the
/// cluster set. Silent steps earn 0 and leave the set untouched.
pub struct ClusterModule {
    set: OnlineClusterSet,
}

impl ClusterModule {
    pub fn new(config: ClusterConfig) -> Result<Self> {
        Ok(Self {
            set: OnlineClusterSet::new(config)?,
        })
    }

    pub fn clusters(&self) -> &OnlineClusterSet {
        &self.set
    }

    pub fn into_clusters(self) -> OnlineClusterSet {
        self.set
    }
}

impl RewardModule for ClusterModule {
    fn method(&self) -> Method {
        Method::Cluster
    }

    fn compute_rewards(&mut self, batch: &Transitions) -> Result<Vec<f64>> {
        batch.validate()?;
        let mut out = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            if batch.silent[i] {
                out.push(0.0);
                continue;
            }
            let phi = &batch.textures[i];
            out.push(self.set.novelty_bonus(phi));
            self.set.online_update(phi, false, batch.steps[i])?;
        }
        Ok(out)
    }

    fn update(&mut self, _batch: &Transitions, _rng: &mut ChaCha8Rng) -> Result<ModuleStats> {
        Ok(ModuleStats::default())
    }

    fn cluster_count(&self) -> Option<usize> {
        Some(self.set.len())
    }

    fn save(&self, prefix: &std::path::Path) -> Result<()> {
        let mut p = prefix.as_os_str().to_owned();
        p.push("clusters.json");
        let json = serde_json::to_string_pretty(&self.set)?;
        std::fs::write(std::path::PathBuf::from(p), json)?;
        Ok(())
    }
}
