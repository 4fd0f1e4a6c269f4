//! Top-down billiard table with a rolling agent and resonant balls.
//!
//! Circles collide elastically (scaled by the restitution coefficient) with
//! each other and with the cushions. Every contact whose relative normal speed
//! exceeds the impulse threshold counts as a collision and sounds the modal
//! response of the struck materials; cushions sound like wood.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{Frame, FRAME_SIZE};
use super::{compass, Env, EpisodeSummary, EventKind, Observation, StepInfo, StepResult};
use super::{COMPASS_ACTIONS, FRAME_SKIP};
use crate::audio::{modal_shape, Material, Waveform, PHYSICS_CLIP_LEN};
use crate::error::{config_err, input_err, state_err, Result};

const BACKGROUND: f64 = 0.1;
const AGENT_GRAY: f64 = 1.0;
/// Samples of audio per tick.
const TICK_SAMPLES: usize = PHYSICS_CLIP_LEN / FRAME_SKIP;
/// Maximum positional-correction passes per tick.
const CORRECTION_PASSES: usize = 8;
/// Bodies closer than this (m) are in resting contact; re-impacts while
/// touching are silent and not counted.
const CONTACT_MARGIN: f64 = 0.005;

pub fn material_gray(m: Material) -> f64 {
    match m {
        Material::Wood => 0.4,
        Material::Metal => 0.6,
        Material::Glass => 0.8,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilliardConfig {
    pub n_balls: usize,
    /// Side of the square table (m).
    pub table_size: f64,
    pub agent_radius: f64,
    pub ball_radius: f64,
    pub agent_mass: f64,
    pub ball_mass: f64,
    pub restitution: f64,
    /// Fraction of velocity lost per tick.
    pub drag: f64,
    /// Seconds per tick.
    pub dt: f64,
    /// Cruise speed the agent steers toward (m/s).
    pub agent_speed: f64,
    /// Fraction of the gap to the commanded velocity closed per tick.
    pub agent_response: f64,
    pub v_max: f64,
    pub max_steps: u64,
    /// Contacts slower than this (m/s) are silent and not counted.
    pub impulse_threshold: f64,
    /// Audio amplitude per unit impulse.
    pub loudness: f64,
    /// Initial ball speed (m/s) in a random direction.
    pub initial_ball_speed: f64,
    /// When false, actions are ignored and the agent coasts.
    pub agent_control: bool,
}

impl Default for BilliardConfig {
    fn default() -> Self {
        Self {
            n_balls: 6,
            table_size: 2.0,
            agent_radius: 0.08,
            ball_radius: 0.07,
            agent_mass: 2.0,
            ball_mass: 1.0,
            restitution: 0.9,
            drag: 0.02,
            dt: 0.0125,
            agent_speed: 1.0,
            agent_response: 0.5,
            v_max: 4.0,
            max_steps: 1000,
            impulse_threshold: 0.05,
            loudness: 0.5,
            initial_ball_speed: 0.0,
            agent_control: true,
        }
    }
}

impl BilliardConfig {
    /// Restitution 1, no drag, coasting agent: kinetic energy is conserved.
    pub fn conservative() -> Self {
        Self {
            restitution: 1.0,
            drag: 0.0,
            agent_control: false,
            initial_ball_speed: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("table_size", self.table_size),
            ("agent_radius", self.agent_radius),
            ("ball_radius", self.ball_radius),
            ("agent_mass", self.agent_mass),
            ("ball_mass", self.ball_mass),
            ("dt", self.dt),
            ("v_max", self.v_max),
            ("loudness", self.loudness),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(format!("billiard {name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.restitution) || !(0.0..1.0).contains(&self.drag) {
            return Err(config_err("billiard restitution must be in [0, 1] and drag in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.agent_response) || self.agent_speed < 0.0 {
            return Err(config_err("billiard agent response must be in [0, 1], speed >= 0"));
        }
        if self.max_steps == 0 || self.impulse_threshold < 0.0 || self.initial_ball_speed < 0.0 {
            return Err(config_err("billiard max_steps, impulse_threshold or initial speed invalid"));
        }
        let area = self.table_size * self.table_size;
        let occupied = std::f64::consts::PI
            * (4.0 * self.agent_radius.powi(2) + 4.0 * self.n_balls as f64 * self.ball_radius.powi(2));
        if occupied > 0.5 * area {
            return Err(config_err("billiard table too crowded to place the balls"));
        }
        Ok(())
    }
}

/// A circle on the table. Index 0 is the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub radius: f64,
    pub mass: f64,
    /// `None` for the agent.
    pub material: Option<Material>,
}

impl Body {
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * (self.vel[0].powi(2) + self.vel[1].powi(2))
    }

    pub fn speed(&self) -> f64 {
        self.vel[0].hypot(self.vel[1])
    }
}

/// One audible contact during a tick.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Contact {
    tick: usize,
    impulse: f64,
    /// Materials that ring; each gets an equal share of the impulse.
    first: Option<Material>,
    second: Option<Material>,
}

pub struct BilliardWorld {
    config: BilliardConfig,
    bodies: Vec<Body>,
    rng: ChaCha8Rng,
    steps: u64,
    collisions: u64,
    done: bool,
    started: bool,
    /// Unit modal responses per material, indexed like `Material::ALL`.
    shapes: Vec<Vec<f64>>,
    /// Row-major `[i * n + j]` pair contact flags from the previous tick.
    touching: Vec<bool>,
    touching_wall: Vec<bool>,
}

impl BilliardWorld {
    pub fn new(config: BilliardConfig) -> Result<Self> {
        config.validate()?;
        let shapes = Material::ALL
            .iter()
            .map(|m| {
                let p = m.profile();
                modal_shape(&p, PHYSICS_CLIP_LEN).into_iter().map(|s| p.gain * s).collect()
            })
            .collect();
        Ok(Self {
            config,
            bodies: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            steps: 0,
            collisions: 0,
            done: false,
            started: false,
            shapes,
            touching: Vec::new(),
            touching_wall: Vec::new(),
        })
    }

    pub fn config(&self) -> &BilliardConfig {
        &self.config
    }

    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    /// Replaces the table state; used by scripted tests.
    pub fn set_bodies(&mut self, bodies: Vec<Body>) -> Result<()> {
        if bodies.first().is_some_and(|b| b.material.is_some()) {
            return Err(input_err("body 0 must be the agent"));
        }
        self.bodies = bodies;
        self.started = true;
        self.done = false;
        self.refresh_contacts();
        Ok(())
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.bodies.iter().map(Body::kinetic_energy).sum()
    }

    pub fn collision_count(&self) -> u64 {
        self.collisions
    }

    fn place(&mut self) {
        let c = &self.config;
        let mut bodies: Vec<Body> = Vec::with_capacity(c.n_balls + 1);
        let gap = 0.25 * c.ball_radius;
        let specs: Vec<(f64, f64, Option<Material>)> = std::iter::once((c.agent_radius, c.agent_mass, None))
            .chain((0..c.n_balls).map(|i| (c.ball_radius, c.ball_mass, Some(Material::ALL[i % 3]))))
            .collect();
        for (radius, mass, material) in specs {
            let pos = loop {
                let lo = radius + gap;
                let hi = c.table_size - radius - gap;
                let p = [self.rng.gen_range(lo..hi), self.rng.gen_range(lo..hi)];
                let clear = bodies.iter().all(|b| {
                    let d = (b.pos[0] - p[0]).hypot(b.pos[1] - p[1]);
                    d >= b.radius + radius + gap
                });
                if clear {
                    break p;
                }
            };
            let vel = if material.is_some() && c.initial_ball_speed > 0.0 {
                let a = self.rng.gen_range(0.0..std::f64::consts::TAU);
                [c.initial_ball_speed * a.cos(), c.initial_ball_speed * a.sin()]
            } else {
                [0.0, 0.0]
            };
            bodies.push(Body {
                pos,
                vel,
                radius,
                mass,
                material,
            });
        }
        self.bodies = bodies;
    }

    pub fn render(&self) -> Frame {
        let mut frame = Frame::filled(BACKGROUND);
        let scale = FRAME_SIZE as f64 / self.config.table_size;
        for b in self.bodies.iter().skip(1).chain(self.bodies.first()) {
            let gray = b.material.map_or(AGENT_GRAY, material_gray);
            frame.fill_disk(b.pos[0] * scale, b.pos[1] * scale, b.radius * scale, gray);
        }
        frame
    }

    fn steer(&mut self, action: usize) {
        if !self.config.agent_control {
            return;
        }
        let (dx, dy) = compass(action);
        let norm = ((dx * dx + dy * dy) as f64).sqrt().max(1.0);
        let target = [
            self.config.agent_speed * dx as f64 / norm,
            self.config.agent_speed * dy as f64 / norm,
        ];
        let k = self.config.agent_response;
        let agent = &mut self.bodies[0];
        for d in 0..2 {
            agent.vel[d] += k * (target[d] - agent.vel[d]);
        }
    }

    /// Advances one tick and appends audible contacts.
    fn tick(&mut self, tick: usize, contacts: &mut Vec<Contact>) {
        let c = self.config.clone();
        for b in &mut self.bodies {
            for v in &mut b.vel {
                *v *= 1.0 - c.drag;
            }
            let s = b.speed();
            if s > c.v_max {
                b.vel.iter_mut().for_each(|v| *v *= c.v_max / s);
            }
            for d in 0..2 {
                b.pos[d] += b.vel[d] * c.dt;
            }
        }
        let n = self.bodies.len();
        // Velocity impulses for approaching pairs, then cushions.
        for i in 0..n {
            for j in i + 1..n {
                if let Some(impulse) = self.collide_pair(i, j) {
                    if impulse > c.impulse_threshold && !self.touching[i * n + j] {
                        contacts.push(Contact {
                            tick,
                            impulse,
                            first: self.bodies[i].material,
                            second: self.bodies[j].material,
                        });
                    }
                }
            }
        }
        for i in 0..n {
            let impulse = self.collide_walls(i);
            if impulse > c.impulse_threshold && !self.touching_wall[i] {
                contacts.push(Contact {
                    tick,
                    impulse,
                    first: Some(Material::Wood),
                    second: self.bodies[i].material,
                });
            }
        }
        for _ in 0..CORRECTION_PASSES {
            if !self.separate() {
                break;
            }
        }
        self.refresh_contacts();
    }

    fn refresh_contacts(&mut self) {
        let n = self.bodies.len();
        let size = self.config.table_size;
        self.touching = vec![false; n * n];
        self.touching_wall = vec![false; n];
        for i in 0..n {
            let a = &self.bodies[i];
            self.touching_wall[i] = (0..2).any(|d| {
                a.pos[d] - a.radius < CONTACT_MARGIN || size - a.pos[d] - a.radius < CONTACT_MARGIN
            });
            for j in i + 1..n {
                let b = &self.bodies[j];
                let gap = (b.pos[0] - a.pos[0]).hypot(b.pos[1] - a.pos[1]) - a.radius - b.radius;
                self.touching[i * n + j] = gap < CONTACT_MARGIN;
            }
        }
    }

    /// Applies the restitution impulse if bodies overlap and approach; returns the approach speed.
    fn collide_pair(&mut self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = (&self.bodies[i], &self.bodies[j]);
        let delta = [b.pos[0] - a.pos[0], b.pos[1] - a.pos[1]];
        let dist = delta[0].hypot(delta[1]);
        if dist >= a.radius + b.radius || dist == 0.0 {
            return None;
        }
        let normal = [delta[0] / dist, delta[1] / dist];
        let vn = (b.vel[0] - a.vel[0]) * normal[0] + (b.vel[1] - a.vel[1]) * normal[1];
        if vn >= 0.0 {
            return None;
        }
        let (ia, ib) = (1.0 / a.mass, 1.0 / b.mass);
        let j_mag = -(1.0 + self.config.restitution) * vn / (ia + ib);
        for d in 0..2 {
            self.bodies[i].vel[d] -= j_mag * ia * normal[d];
            self.bodies[j].vel[d] += j_mag * ib * normal[d];
        }
        Some(-vn)
    }

    /// Reflects velocity off any cushion being pushed into; returns the largest normal speed.
    fn collide_walls(&mut self, i: usize) -> f64 {
        let size = self.config.table_size;
        let e = self.config.restitution;
        let b = &mut self.bodies[i];
        let mut hit: f64 = 0.0;
        for d in 0..2 {
            if b.pos[d] - b.radius < 0.0 && b.vel[d] < 0.0 {
                hit = hit.max(-b.vel[d]);
                b.vel[d] = -e * b.vel[d];
            } else if b.pos[d] + b.radius > size && b.vel[d] > 0.0 {
                hit = hit.max(b.vel[d]);
                b.vel[d] = -e * b.vel[d];
            }
        }
        hit
    }

    /// One positional-correction pass; returns whether any overlap remained.
    fn separate(&mut self) -> bool {
        let size = self.config.table_size;
        let n = self.bodies.len();
        let mut any = false;
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&self.bodies[i], &self.bodies[j]);
                let delta = [b.pos[0] - a.pos[0], b.pos[1] - a.pos[1]];
                let dist = delta[0].hypot(delta[1]);
                let overlap = a.radius + b.radius - dist;
                if overlap <= 0.0 {
                    continue;
                }
                any = true;
                let normal = if dist > 0.0 {
                    [delta[0] / dist, delta[1] / dist]
                } else {
                    [1.0, 0.0]
                };
                let (ia, ib) = (1.0 / a.mass, 1.0 / b.mass);
                let push = (overlap + 1e-9) / (ia + ib);
                for d in 0..2 {
                    self.bodies[i].pos[d] -= push * ia * normal[d];
                    self.bodies[j].pos[d] += push * ib * normal[d];
                }
            }
        }
        for b in &mut self.bodies {
            for d in 0..2 {
                let clamped = b.pos[d].clamp(b.radius, size - b.radius);
                if clamped != b.pos[d] {
                    b.pos[d] = clamped;
                }
            }
        }
        any
    }

    fn mix_contacts(&self, contacts: &[Contact]) -> Waveform {
        let mut samples = vec![0.0; PHYSICS_CLIP_LEN];
        for c in contacts {
            let offset = c.tick * TICK_SAMPLES;
            let sounding: Vec<Material> = [c.first, c.second].into_iter().flatten().collect();
            let weight = self.config.loudness * c.impulse / sounding.len() as f64;
            for m in sounding {
                let shape = &self.shapes[m as usize];
                for (dst, src) in samples[offset..].iter_mut().zip(shape) {
                    *dst += weight * src;
                }
            }
        }
        Waveform::from_samples(samples)
    }
}

impl Env for BilliardWorld {
    fn name(&self) -> &'static str {
        "billiard"
    }

    fn num_actions(&self) -> usize {
        COMPASS_ACTIONS
    }

    fn clip_len(&self) -> usize {
        PHYSICS_CLIP_LEN
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.place();
        self.refresh_contacts();
        self.steps = 0;
        self.collisions = 0;
        self.done = false;
        self.started = true;
        Observation {
            frame: self.render(),
            audio: Waveform::silence(PHYSICS_CLIP_LEN),
        }
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if !self.started || self.done || self.bodies.is_empty() {
            return Err(state_err("billiard step called on a finished or unreset episode"));
        }
        if action >= COMPASS_ACTIONS {
            return Err(input_err(format!("action {action} out of range")));
        }
        let mut contacts = Vec::new();
        for tick in 0..FRAME_SKIP {
            self.steer(action);
            self.tick(tick, &mut contacts);
        }
        self.steps += 1;
        self.collisions += contacts.len() as u64;
        self.done = self.steps >= self.config.max_steps;
        let impulse = contacts.iter().map(|c| c.impulse).fold(0.0, f64::max);
        let info = StepInfo {
            collision_count: self.collisions,
            new_collisions: contacts.len() as u64,
            event_kind: if contacts.is_empty() {
                EventKind::None
            } else {
                EventKind::Collision
            },
            impulse,
            episode: self.done.then_some(EpisodeSummary {
                extrinsic_return: 0.0,
                length: self.steps,
                collisions: self.collisions,
            }),
            final_observation: None,
        };
        Ok(StepResult {
            observation: Observation {
                frame: self.render(),
                audio: self.mix_contacts(&contacts),
            },
            extrinsic_reward: 0.0,
            done: self.done,
            info,
        })
    }
}
