//! Environments with image and audio observations behind one step contract.
//!
//! Every environment renders an 84×84 grayscale frame and returns the audio
//! produced during the step. Actions are repeated for [`FRAME_SKIP`] internal
//! ticks where the environment has a notion of ticks.

mod billiard;
mod coin;
mod line;
mod render;

use serde::{Deserialize, Serialize};

pub use billiard::{BilliardConfig, BilliardWorld, Body};
pub use coin::{CoinConfig, CoinWorld, Layout};
pub use line::{LineConfig, LineWorld};
pub use render::{Frame, FRAME_LEN, FRAME_SIZE};

use crate::audio::Waveform;
use crate::error::{config_err, Result};
use crate::seeding::derive_seed;

/// Internal ticks per agent step.
pub const FRAME_SKIP: usize = 4;

/// Eight compass moves followed by stop.
pub const COMPASS_ACTIONS: usize = 9;

/// Unit direction of a compass action (`N, NE, E, SE, S, SW, W, NW, stop`), y pointing down.
pub fn compass(action: usize) -> (i32, i32) {
    const DIRS: [(i32, i32); 9] = [
        (0, -1),
        (1, -1),
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
        (-1, 0),
        (-1, -1),
        (0, 0),
    ];
    DIRS[action]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub frame: Frame,
    pub audio: Waveform,
}

/// Sound-producing event classes reported in step info.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    None,
    Collision,
    Footstep,
    Coin,
    Hazard,
    Fanfare,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::None => "none",
            EventKind::Collision => "collision",
            EventKind::Footstep => "footstep",
            EventKind::Coin => "coin",
            EventKind::Hazard => "hazard",
            EventKind::Fanfare => "fanfare",
        }
    }

    /// Higher wins when several events share a step.
    fn salience(self) -> u8 {
        match self {
            EventKind::None => 0,
            EventKind::Footstep => 1,
            EventKind::Collision => 2,
            EventKind::Coin => 3,
            EventKind::Hazard => 4,
            EventKind::Fanfare => 5,
        }
    }

    pub fn most_salient(self, other: EventKind) -> EventKind {
        if other.salience() > self.salience() {
            other
        } else {
            self
        }
    }
}

/// Summary attached to the step that ends an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub extrinsic_return: f64,
    pub length: u64,
    pub collisions: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Collisions so far in this episode; non-decreasing.
    pub collision_count: u64,
    /// Collisions during this step.
    pub new_collisions: u64,
    /// Most salient sound event of the step.
    pub event_kind: EventKind,
    /// Largest collision impulse of the step (relative normal speed, m/s).
    pub impulse: f64,
    /// Set on the final step of an episode.
    pub episode: Option<EpisodeSummary>,
    /// Observation that ended the episode when a vectorized env auto-reset.
    pub final_observation: Option<Box<Observation>>,
}

impl StepInfo {
    pub fn quiet(collision_count: u64) -> Self {
        Self {
            collision_count,
            new_collisions: 0,
            event_kind: EventKind::None,
            impulse: 0.0,
            episode: None,
            final_observation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub extrinsic_reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

pub trait Env: Send {
    fn name(&self) -> &'static str;
    fn num_actions(&self) -> usize;
    /// Samples per step of audio.
    fn clip_len(&self) -> usize;
    /// Deterministic for a given seed; audio is silent.
    fn reset(&mut self, seed: u64) -> Observation;
    /// Errors if the episode is over or the action is out of range.
    fn step(&mut self, action: usize) -> Result<StepResult>;
    /// Best achievable episode return, when known.
    fn optimal_return(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvConfig {
    Billiard(BilliardConfig),
    Coin(CoinConfig),
    Line(LineConfig),
}

impl EnvConfig {
    pub fn id(&self) -> &'static str {
        match self {
            EnvConfig::Billiard(_) => "billiard",
            EnvConfig::Coin(c) if c.sparse => "coin_sparse",
            EnvConfig::Coin(_) => "coin_dense",
            EnvConfig::Line(_) => "line",
        }
    }

    /// Default configuration for an env id.
    pub fn from_id(id: &str) -> Result<Self> {
        Ok(match id {
            "billiard" => EnvConfig::Billiard(BilliardConfig::default()),
            "coin_dense" => EnvConfig::Coin(CoinConfig::default()),
            "coin_sparse" => EnvConfig::Coin(CoinConfig {
                sparse: true,
                ..CoinConfig::default()
            }),
            "line" => EnvConfig::Line(LineConfig::default()),
            other => return Err(config_err(format!("unknown env `{other}`"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::Billiard(c) => c.validate(),
            EnvConfig::Coin(c) => c.validate(),
            EnvConfig::Line(c) => c.validate(),
        }
    }

    /// Builds env number `index` of a run seeded with `run_seed`.
    pub fn build(&self, run_seed: u64) -> Result<Box<dyn Env>> {
        self.validate()?;
        Ok(match self {
            EnvConfig::Billiard(c) => Box::new(BilliardWorld::new(c.clone())?),
            EnvConfig::Coin(c) => Box::new(CoinWorld::new(c.clone(), run_seed)?),
            EnvConfig::Line(c) => Box::new(LineWorld::new(c.clone())?),
        })
    }
}

/// Parallel environments stepped in lockstep, with auto-reset.
pub struct VecEnv {
    envs: Vec<Box<dyn Env>>,
    base_seed: u64,
    episodes: Vec<u64>,
}

impl VecEnv {
    pub fn new(envs: Vec<Box<dyn Env>>, base_seed: u64) -> Result<Self> {
        if envs.is_empty() {
            return Err(config_err("vectorized env needs at least one env"));
        }
        let actions = envs[0].num_actions();
        if envs.iter().any(|e| e.num_actions() != actions) {
            return Err(config_err("vectorized envs must share an action space"));
        }
        let episodes = vec![0; envs.len()];
        Ok(Self {
            envs,
            base_seed,
            episodes,
        })
    }

    pub fn from_config(config: &EnvConfig, n: usize, run_seed: u64) -> Result<Self> {
        let envs = (0..n).map(|_| config.build(run_seed)).collect::<Result<Vec<_>>>()?;
        Self::new(envs, run_seed)
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn num_actions(&self) -> usize {
        self.envs[0].num_actions()
    }

    pub fn clip_len(&self) -> usize {
        self.envs[0].clip_len()
    }

    pub fn envs(&self) -> &[Box<dyn Env>] {
        &self.envs
    }

    /// Seed of episode `episode` in slot `index`.
    pub fn episode_seed(base_seed: u64, index: usize, episode: u64) -> u64 {
        derive_seed(base_seed, index as u64, episode)
    }

    pub fn reset_all(&mut self) -> Vec<Observation> {
        let base = self.base_seed;
        self.episodes.iter_mut().for_each(|e| *e = 0);
        self.envs
            .iter_mut()
            .enumerate()
            .map(|(i, env)| env.reset(Self::episode_seed(base, i, 0)))
            .collect()
    }

    /// Steps every env; finished envs are reset and the terminal observation
    /// moves to `info.final_observation`.
    pub fn step(&mut self, actions: &[usize]) -> Result<Vec<StepResult>> {
        if actions.len() != self.envs.len() {
            return Err(config_err(format!(
                "{} actions for {} envs",
                actions.len(),
                self.envs.len()
            )));
        }
        let base = self.base_seed;
        let mut results = Vec::with_capacity(self.envs.len());
        for (i, (env, a)) in self.envs.iter_mut().zip(actions).enumerate() {
            let mut r = env.step(*a)?;
            if r.done {
                self.episodes[i] += 1;
                let fresh = env.reset(Self::episode_seed(base, i, self.episodes[i]));
                let last = std::mem::replace(&mut r.observation, fresh);
                r.info.final_observation = Some(Box::new(last));
            }
            results.push(r);
        }
        Ok(results)
    }
}
