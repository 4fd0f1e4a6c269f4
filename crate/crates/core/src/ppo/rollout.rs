//! Fixed-length rollouts from a vectorized environment.

use rand::Rng;

use super::PolicyNet;
use crate::audio::{extract_texture, Waveform, TEXTURE_DIM};
use crate::envs::{EpisodeSummary, Observation, VecEnv, FRAME_LEN};
use crate::error::Result;
use crate::intrinsic::{RewardModule, RewardNormalizer, Transitions};

/// Vectorized envs plus the observation each env is currently in.
pub struct Runner {
    envs: VecEnv,
    obs: Vec<Observation>,
    steps: u64,
}

impl Runner {
    pub fn new(mut envs: VecEnv) -> Self {
        let obs = envs.reset_all();
        Self { envs, obs, steps: 0 }
    }

    /// Environment interactions so far, summed over envs.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn n_envs(&self) -> usize {
        self.envs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.envs.num_actions()
    }

    pub fn envs(&self) -> &VecEnv {
        &self.envs
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    fn frames(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.obs.len() * FRAME_LEN);
        for o in &self.obs {
            out.extend_from_slice(o.frame.pixels());
        }
        out
    }
}

/// Where actions come from during collection.
#[derive(Clone, Copy)]
pub enum ActionSource<'a> {
    Policy(&'a PolicyNet),
    /// Uniform random actions; log-probs are `-ln A` and values 0.
    Uniform,
}

/// One rollout, time-major.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub n_envs: usize,
    pub num_actions: usize,
    pub frames: Vec<f64>,
    /// Frame after each step; the terminal frame when the step ended an episode.
    pub next_frames: Vec<f64>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub v_ext: Vec<f64>,
    pub v_int: Vec<f64>,
    pub r_ext: Vec<f64>,
    /// Module output before normalization.
    pub r_int_raw: Vec<f64>,
    pub r_int: Vec<f64>,
    pub dones: Vec<bool>,
    pub textures: Vec<Vec<f64>>,
    pub silent: Vec<bool>,
    /// Global interaction index of each transition.
    pub steps: Vec<u64>,
    pub new_collisions: Vec<u64>,
    /// Values of the observations after the last step.
    pub last_v_ext: Vec<f64>,
    pub last_v_int: Vec<f64>,
    /// Episodes finished during the rollout with the interaction index of their last step.
    pub episodes: Vec<(u64, EpisodeSummary)>,
    /// Raw audio of each step when requested.
    pub audio: Option<Vec<Waveform>>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn transitions(&self) -> Transitions<'_> {
        Transitions {
            frames: &self.frames,
            next_frames: &self.next_frames,
            actions: &self.actions,
            textures: &self.textures,
            silent: &self.silent,
            steps: &self.steps,
            num_actions: self.num_actions,
        }
    }

    /// Fills raw and normalized intrinsic rewards from the module, in time order.
    pub fn score_intrinsic(
        &mut self,
        module: &mut dyn RewardModule,
        normalizer: &mut RewardNormalizer,
    ) -> Result<()> {
        let raw = module.compute_rewards(&self.transitions())?;
        self.r_int = normalizer.normalize_batch(&raw);
        self.r_int_raw = raw;
        Ok(())
    }
}

/// Steps all envs `len` times. Intrinsic rewards are left at zero; see
/// [`RolloutBatch::score_intrinsic`].
pub fn collect_rollout(
    runner: &mut Runner,
    source: ActionSource,
    len: usize,
    rng: &mut impl Rng,
    keep_audio: bool,
) -> Result<RolloutBatch> {
    let n = runner.n_envs();
    let a = runner.num_actions();
    let total = n * len;
    let mut b = RolloutBatch {
        n_envs: n,
        num_actions: a,
        frames: Vec::with_capacity(total * FRAME_LEN),
        next_frames: Vec::with_capacity(total * FRAME_LEN),
        actions: Vec::with_capacity(total),
        log_probs: Vec::with_capacity(total),
        v_ext: Vec::with_capacity(total),
        v_int: Vec::with_capacity(total),
        r_ext: Vec::with_capacity(total),
        r_int_raw: vec![0.0; total],
        r_int: vec![0.0; total],
        dones: Vec::with_capacity(total),
        textures: Vec::with_capacity(total),
        silent: Vec::with_capacity(total),
        steps: Vec::with_capacity(total),
        new_collisions: Vec::with_capacity(total),
        last_v_ext: vec![0.0; n],
        last_v_int: vec![0.0; n],
        episodes: Vec::new(),
        audio: keep_audio.then(|| Vec::with_capacity(total)),
    };
    for _ in 0..len {
        let frames = runner.frames();
        let actions: Vec<usize> = match source {
            ActionSource::Policy(policy) => {
                let out = policy.evaluate(&frames)?;
                let mut acts = Vec::with_capacity(n);
                for i in 0..n {
                    let act = PolicyNet::sample(&out.log_probs[i], rng);
                    b.log_probs.push(out.log_probs[i][act]);
                    acts.push(act);
                }
                b.v_ext.extend_from_slice(&out.v_ext);
                b.v_int.extend_from_slice(&out.v_int);
                acts
            }
            ActionSource::Uniform => {
                let acts: Vec<usize> = (0..n).map(|_| rng.gen_range(0..a)).collect();
                b.log_probs.extend(std::iter::repeat(-(a as f64).ln()).take(n));
                b.v_ext.extend(std::iter::repeat(0.0).take(n));
                b.v_int.extend(std::iter::repeat(0.0).take(n));
                acts
            }
        };
        b.frames.extend_from_slice(&frames);
        let results = runner.envs.step(&actions)?;
        let mut next_obs = Vec::with_capacity(n);
        for (e, mut res) in results.into_iter().enumerate() {
            let step = runner.steps + e as u64;
            let terminal = res.info.final_observation.take();
            let after = terminal.as_deref().unwrap_or(&res.observation);
            b.next_frames.extend_from_slice(after.frame.pixels());
            let silent = after.audio.is_silent();
            b.textures.push(if silent {
                vec![0.0; TEXTURE_DIM]
            } else {
                extract_texture(&after.audio)?.0
            });
            b.silent.push(silent);
            if let Some(audio) = b.audio.as_mut() {
                audio.push(after.audio.clone());
            }
            b.actions.push(actions[e]);
            b.r_ext.push(res.extrinsic_reward);
            b.dones.push(res.done);
            b.steps.push(step);
            b.new_collisions.push(res.info.new_collisions);
            if let Some(ep) = res.info.episode {
                b.episodes.push((step, ep));
            }
            next_obs.push(res.observation);
        }
        runner.obs = next_obs;
        runner.steps += n as u64;
    }
    if let ActionSource::Policy(policy) = source {
        let out = policy.evaluate(&runner.frames())?;
        b.last_v_ext = out.v_ext;
        b.last_v_int = out.v_int;
    }
    Ok(b)
}
