//! Grid arcade: collect coins, avoid hazards; every event has its own jingle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{Frame, FRAME_SIZE};
use super::{compass, Env, EpisodeSummary, EventKind, Observation, StepInfo, StepResult};
use super::{COMPASS_ACTIONS, FRAME_SKIP};
use crate::audio::{synth_event_jingle, JingleKind, Waveform, ARCADE_CLIP_LEN};
use crate::error::{config_err, input_err, state_err, Result};
use crate::seeding::derive_seed;

const BACKGROUND: f64 = 0.0;
const HAZARD_GRAY: f64 = 0.35;
const COIN_GRAY: f64 = 0.7;
const AGENT_GRAY: f64 = 1.0;
const TICK_SAMPLES: usize = ARCADE_CLIP_LEN / FRAME_SKIP;
/// Ticks on which the agent advances one cell.
const MOVE_TICKS: [usize; 1] = [0];
const FOOTSTEP_LEN: usize = 2 * TICK_SAMPLES;

pub const COIN_REWARD: f64 = 1.0;
pub const HAZARD_REWARD: f64 = -1.0;
pub const FANFARE_REWARD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinConfig {
    pub grid: usize,
    pub coins: usize,
    pub hazards: usize,
    /// Only the fanfare pays when sparse.
    pub sparse: bool,
    pub max_steps: u64,
    /// Same layout every episode (derived from the run seed) when true.
    pub fixed_layout: bool,
}

impl Default for CoinConfig {
    fn default() -> Self {
        Self {
            grid: 12,
            coins: 4,
            hazards: 2,
            sparse: false,
            max_steps: 500,
            fixed_layout: true,
        }
    }
}

impl CoinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid < 3 || self.grid > FRAME_SIZE {
            return Err(config_err(format!("coin grid {} outside [3, {FRAME_SIZE}]", self.grid)));
        }
        if self.coins == 0 || self.coins + self.hazards + 1 > self.grid * self.grid {
            return Err(config_err("coin world needs at least one coin and room for all items"));
        }
        let near = (self.grid / 2) * (self.grid / 2);
        if self.sparse && self.coins > self.grid * self.grid - near {
            return Err(config_err("sparse coin world has too few cells far from the start"));
        }
        if self.max_steps == 0 {
            return Err(config_err("coin max_steps must be positive"));
        }
        Ok(())
    }
}

/// Cell positions as `(x, y)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub start: (usize, usize),
    pub coins: Vec<(usize, usize)>,
    pub hazards: Vec<(usize, usize)>,
}

impl Layout {
    /// Dense layouts are uniform over cells. Sparse layouts start in a corner
    /// with every coin at least half the grid away, so a random walk rarely
    /// collects all of them before the episode cap.
    pub fn random(config: &CoinConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut cells: Vec<(usize, usize)> = (0..config.grid)
            .flat_map(|y| (0..config.grid).map(move |x| (x, y)))
            .collect();
        cells.shuffle(rng);
        if !config.sparse {
            let start = cells[0];
            let coins = cells[1..1 + config.coins].to_vec();
            let hazards = cells[1 + config.coins..1 + config.coins + config.hazards].to_vec();
            return Self { start, coins, hazards };
        }
        let last = config.grid - 1;
        let corners = [(0, 0), (last, 0), (0, last), (last, last)];
        let start = corners[rng.gen_range(0..corners.len())];
        let far = |c: &(usize, usize)| c.0.abs_diff(start.0).max(c.1.abs_diff(start.1)) >= config.grid / 2;
        let coins: Vec<_> = cells.iter().copied().filter(far).take(config.coins).collect();
        let hazards = cells
            .iter()
            .copied()
            .filter(|c| *c != start && !coins.contains(c))
            .take(config.hazards)
            .collect();
        Self { start, coins, hazards }
    }
}

pub struct CoinWorld {
    config: CoinConfig,
    fixed: Option<Layout>,
    layout: Layout,
    agent: (usize, usize),
    collected: Vec<bool>,
    rng: ChaCha8Rng,
    steps: u64,
    episode_return: f64,
    done: bool,
    started: bool,
}

impl CoinWorld {
    pub fn new(config: CoinConfig, run_seed: u64) -> Result<Self> {
        config.validate()?;
        let fixed = config.fixed_layout.then(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(run_seed, 0xc011, 0));
            Layout::random(&config, &mut rng)
        });
        let placeholder = Layout {
            start: (0, 0),
            coins: Vec::new(),
            hazards: Vec::new(),
        };
        Ok(Self {
            config,
            fixed,
            layout: placeholder,
            agent: (0, 0),
            collected: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            steps: 0,
            episode_return: 0.0,
            done: false,
            started: false,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn agent(&self) -> (usize, usize) {
        self.agent
    }

    /// Overrides the layout for the next reset; used by scripted tests.
    pub fn set_layout(&mut self, layout: Layout) {
        self.fixed = Some(layout);
    }

    pub fn render(&self) -> Frame {
        let mut frame = Frame::filled(BACKGROUND);
        let cell = FRAME_SIZE / self.config.grid;
        let margin = (FRAME_SIZE - cell * self.config.grid) / 2;
        let rect = |frame: &mut Frame, (x, y): (usize, usize), inset: usize, gray: f64| {
            let (r, c) = (margin + y * cell, margin + x * cell);
            frame.fill_rect(r + inset, r + cell - inset, c + inset, c + cell - inset, gray);
        };
        for h in &self.layout.hazards {
            rect(&mut frame, *h, 0, HAZARD_GRAY);
        }
        for (c, taken) in self.layout.coins.iter().zip(&self.collected) {
            if !taken {
                rect(&mut frame, *c, cell / 4, COIN_GRAY);
            }
        }
        rect(&mut frame, self.agent, 0, AGENT_GRAY);
        frame
    }

    fn jingle(&mut self, kind: JingleKind) -> Waveform {
        synth_event_jingle(kind, self.rng.gen(), ARCADE_CLIP_LEN)
    }
}

impl Env for CoinWorld {
    fn name(&self) -> &'static str {
        if self.config.sparse {
            "coin_sparse"
        } else {
            "coin_dense"
        }
    }

    fn num_actions(&self) -> usize {
        COMPASS_ACTIONS
    }

    fn clip_len(&self) -> usize {
        ARCADE_CLIP_LEN
    }

    fn optimal_return(&self) -> Option<f64> {
        let coins = self.config.coins as f64;
        Some(if self.config.sparse {
            FANFARE_REWARD
        } else {
            coins * COIN_REWARD + FANFARE_REWARD
        })
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.layout = match &self.fixed {
            Some(l) => l.clone(),
            None => Layout::random(&self.config, &mut self.rng),
        };
        self.agent = self.layout.start;
        self.collected = vec![false; self.layout.coins.len()];
        self.steps = 0;
        self.episode_return = 0.0;
        self.done = false;
        self.started = true;
        Observation {
            frame: self.render(),
            audio: Waveform::silence(ARCADE_CLIP_LEN),
        }
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if !self.started || self.done {
            return Err(state_err("coin world step called on a finished or unreset episode"));
        }
        if action >= COMPASS_ACTIONS {
            return Err(input_err(format!("action {action} out of range")));
        }
        let (dx, dy) = compass(action);
        let grid = self.config.grid as i64;
        let mut audio = Waveform::silence(ARCADE_CLIP_LEN);
        let mut reward = 0.0;
        let mut event = EventKind::None;
        let mut terminal = false;
        for tick in MOVE_TICKS {
            if (dx, dy) == (0, 0) || terminal {
                break;
            }
            let (nx, ny) = (self.agent.0 as i64 + dx as i64, self.agent.1 as i64 + dy as i64);
            if nx < 0 || ny < 0 || nx >= grid || ny >= grid {
                break;
            }
            self.agent = (nx as usize, ny as usize);
            let step_sound = synth_event_jingle(JingleKind::Footstep, 0, FOOTSTEP_LEN);
            audio.mix(&step_sound, tick * TICK_SAMPLES, 1.0);
            event = event.most_salient(EventKind::Footstep);

            if let Some(i) = self.layout.coins.iter().position(|c| *c == self.agent) {
                if !self.collected[i] {
                    self.collected[i] = true;
                    let j = self.jingle(JingleKind::Coin);
                    audio.mix(&j, 0, 1.0);
                    event = event.most_salient(EventKind::Coin);
                    if !self.config.sparse {
                        reward += COIN_REWARD;
                    }
                    if self.collected.iter().all(|c| *c) {
                        let j = self.jingle(JingleKind::Fanfare);
                        audio.mix(&j, 0, 1.0);
                        event = event.most_salient(EventKind::Fanfare);
                        reward += FANFARE_REWARD;
                        terminal = true;
                    }
                }
            }
            if !terminal && self.layout.hazards.contains(&self.agent) {
                let j = self.jingle(JingleKind::Hazard);
                audio.mix(&j, 0, 1.0);
                event = event.most_salient(EventKind::Hazard);
                if !self.config.sparse {
                    reward += HAZARD_REWARD;
                }
                terminal = true;
            }
        }
        audio.clip();
        self.steps += 1;
        self.episode_return += reward;
        self.done = terminal || self.steps >= self.config.max_steps;
        let mut info = StepInfo::quiet(0);
        info.event_kind = event;
        info.episode = self.done.then_some(EpisodeSummary {
            extrinsic_return: self.episode_return,
            length: self.steps,
            collisions: 0,
        });
        Ok(StepResult {
            observation: Observation {
                frame: self.render(),
                audio,
            },
            extrinsic_reward: reward,
            done: self.done,
            info,
        })
    }
}
