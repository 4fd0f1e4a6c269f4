//! Silent one-dimensional corridor: walk right to the goal.

use serde::{Deserialize, Serialize};

use super::render::{Frame, FRAME_SIZE};
use super::{Env, EpisodeSummary, Observation, StepInfo, StepResult};
use crate::audio::{Waveform, ARCADE_CLIP_LEN};
use crate::error::{config_err, input_err, state_err, Result};

const GOAL_GRAY: f64 = 0.5;
const AGENT_GRAY: f64 = 1.0;
const BAND: (usize, usize) = (36, 48);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineConfig {
    pub length: usize,
    pub max_steps: u64,
    pub step_penalty: f64,
    pub goal_reward: f64,
}

impl Default for LineConfig {
    fn default() -> Self {
        Self {
            length: 10,
            max_steps: 100,
            step_penalty: 0.01,
            goal_reward: 1.0,
        }
    }
}

impl LineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 || self.length > FRAME_SIZE {
            return Err(config_err(format!("line length {} outside [2, {FRAME_SIZE}]", self.length)));
        }
        if self.max_steps < self.length as u64 {
            return Err(config_err("line max_steps cannot reach the goal"));
        }
        Ok(())
    }
}

/// Actions: 0 left, 1 stay, 2 right. Start at cell 0, goal at the last cell.
pub struct LineWorld {
    config: LineConfig,
    pos: usize,
    steps: u64,
    episode_return: f64,
    done: bool,
    started: bool,
}

impl LineWorld {
    pub fn new(config: LineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            pos: 0,
            steps: 0,
            episode_return: 0.0,
            done: false,
            started: false,
        })
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn render(&self) -> Frame {
        let mut frame = Frame::filled(0.0);
        let cell = FRAME_SIZE / self.config.length;
        let goal = self.config.length - 1;
        frame.fill_rect(BAND.0, BAND.1, goal * cell, (goal + 1) * cell, GOAL_GRAY);
        frame.fill_rect(BAND.0, BAND.1, self.pos * cell, (self.pos + 1) * cell, AGENT_GRAY);
        frame
    }

    fn observe(&self) -> Observation {
        Observation {
            frame: self.render(),
            audio: Waveform::silence(ARCADE_CLIP_LEN),
        }
    }
}

impl Env for LineWorld {
    fn name(&self) -> &'static str {
        "line"
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn clip_len(&self) -> usize {
        ARCADE_CLIP_LEN
    }

    /// Straight walk: every step but the last pays the penalty.
    fn optimal_return(&self) -> Option<f64> {
        Some(self.config.goal_reward - self.config.step_penalty * (self.config.length - 2) as f64)
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        self.pos = 0;
        self.steps = 0;
        self.episode_return = 0.0;
        self.done = false;
        self.started = true;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if !self.started || self.done {
            return Err(state_err("line world step called on a finished or unreset episode"));
        }
        self.pos = match action {
            0 => self.pos.saturating_sub(1),
            1 => self.pos,
            2 => (self.pos + 1).min(self.config.length - 1),
            _ => return Err(input_err(format!("action {action} out of range"))),
        };
        self.steps += 1;
        let at_goal = self.pos == self.config.length - 1;
        let reward = if at_goal {
            self.config.goal_reward
        } else {
            -self.config.step_penalty
        };
        self.episode_return += reward;
        self.done = at_goal || self.steps >= self.config.max_steps;
        let mut info = StepInfo::quiet(0);
        info.episode = self.done.then_some(EpisodeSummary {
            extrinsic_return: self.episode_return,
            length: self.steps,
            collisions: 0,
        });
        Ok(StepResult {
            observation: self.observe(),
            extrinsic_reward: reward,
            done: self.done,
            info,
        })
    }
}
