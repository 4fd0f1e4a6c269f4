use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Waveform, SAMPLE_RATE};
use crate::error::{config_err, Error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    Wood,
    Metal,
    Glass,
}

impl Material {
    pub const ALL: [Material; 3] = [Material::Wood, Material::Metal, Material::Glass];

    pub fn profile(self) -> MaterialProfile {
        MaterialProfile::preset(self)
    }

    pub fn name(self) -> &'static str {
        match self {
            Material::Wood => "wood",
            Material::Metal => "metal",
            Material::Glass => "glass",
        }
    }
}

/// Relative amplitude of the three resonant modes.
const MODE_WEIGHTS: [f64; 3] = [1.0, 0.6, 0.35];

/// Resonance description used for modal impact synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialProfile {
    pub material: Material,
    /// Modal frequencies in Hz; all below Nyquist.
    pub frequencies: [f64; 3],
    /// Exponential decay rates in 1/s; all positive.
    pub decays: [f64; 3],
    pub gain: f64,
}

impl MaterialProfile {
    pub fn preset(material: Material) -> Self {
        match material {
            Material::Wood => Self {
                material,
                frequencies: [350.0, 820.0, 1530.0],
                decays: [45.0, 60.0, 80.0],
                gain: 0.6,
            },
            Material::Metal => Self {
                material,
                frequencies: [1180.0, 2950.0, 4720.0],
                decays: [6.0, 9.0, 13.0],
                gain: 0.5,
            },
            Material::Glass => Self {
                material,
                frequencies: [2300.0, 4850.0, 7100.0],
                decays: [18.0, 25.0, 35.0],
                gain: 0.4,
            },
        }
    }
}

/// Unscaled modal response: weighted damped sinusoids at the profile's modes.
pub fn modal_shape(profile: &MaterialProfile, len: usize) -> Vec<f64> {
    let dt = 1.0 / SAMPLE_RATE as f64;
    (0..len)
        .map(|i| {
            let t = i as f64 * dt;
            profile
                .frequencies
                .iter()
                .zip(&profile.decays)
                .zip(MODE_WEIGHTS)
                .map(|((f, d), w)| w * (-d * t).exp() * (2.0 * PI * f * t).sin())
                .sum()
        })
        .collect()
}

/// Sum of exponentially damped sinusoids at the profile's modes.
///
/// Amplitude is `gain * impulse` (impulse clamped at zero); samples are
/// clipped to `[-1, 1]`.
pub fn synth_impact(profile: &MaterialProfile, impulse: f64, len: usize) -> Waveform {
    let amp = profile.gain * impulse.max(0.0);
    if amp == 0.0 || !amp.is_finite() {
        return Waveform::silence(len);
    }
    let samples = modal_shape(profile, len).into_iter().map(|s| amp * s).collect();
    Waveform::from_samples(samples)
}

/// Game events that emit a characteristic jingle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JingleKind {
    Coin,
    Hazard,
    Fanfare,
    Footstep,
    Silence,
}

impl JingleKind {
    pub const ALL: [JingleKind; 5] = [
        JingleKind::Coin,
        JingleKind::Hazard,
        JingleKind::Fanfare,
        JingleKind::Footstep,
        JingleKind::Silence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            JingleKind::Coin => "coin",
            JingleKind::Hazard => "hazard",
            JingleKind::Fanfare => "fanfare",
            JingleKind::Footstep => "footstep",
            JingleKind::Silence => "silence",
        }
    }
}

impl fmt::Display for JingleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JingleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JingleKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| config_err(format!("unknown event kind `{s}`")))
    }
}

/// Attack/release envelope in [0, 1].
fn envelope(i: usize, len: usize, attack: usize, release: usize) -> f64 {
    let a = if attack > 0 { (i as f64 / attack as f64).min(1.0) } else { 1.0 };
    let tail = len.saturating_sub(i + 1);
    let r = if release > 0 { (tail as f64 / release as f64).min(1.0) } else { 1.0 };
    a * r
}

/// Deterministic event sound; `seed` adds small per-instance variation.
/// Footsteps ignore `seed`: they are one fixed sample, as in arcade games.
pub fn synth_event_jingle(kind: JingleKind, seed: u64, len: usize) -> Waveform {
    let seed = if kind == JingleKind::Footstep { 0 } else { seed };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c908);
    let detune = 1.0 + rng.gen_range(-0.01..0.01);
    let level = 1.0 + rng.gen_range(-0.05..0.05);
    let sr = SAMPLE_RATE as f64;
    let tone = |f: f64, t: f64| (2.0 * PI * f * detune * t).sin();
    let samples: Vec<f64> = match kind {
        JingleKind::Silence => vec![0.0; len],
        JingleKind::Coin => (0..len)
            .map(|i| {
                let t = i as f64 / sr;
                let f = if i < len / 2 { 988.0 } else { 1319.0 };
                let s = tone(f, t) + 0.3 * tone(3.0 * f, t);
                0.45 * level * envelope(i, len, 16, 64) * s
            })
            .collect(),
        JingleKind::Hazard => (0..len)
            .map(|i| {
                let t = i as f64 / sr;
                let saw: f64 = (1..=12).map(|k| tone(140.0 * k as f64, t) / k as f64).sum();
                let wobble = 0.6 + 0.4 * (2.0 * PI * 30.0 * t).sin();
                0.35 * level * wobble * envelope(i, len, 16, 32) * saw
            })
            .collect(),
        JingleKind::Fanfare => (0..len)
            .map(|i| {
                let t = i as f64 / sr;
                let chord: f64 = [523.25, 659.25, 783.99, 1046.5]
                    .iter()
                    .map(|f| tone(*f, t))
                    .sum();
                0.2 * level * envelope(i, len, 48, 48) * chord
            })
            .collect(),
        JingleKind::Footstep => {
            let mut lp = 0.0;
            (0..len)
                .map(|i| {
                    let t = i as f64 / sr;
                    lp += 0.15 * (rng.gen_range(-1.0..1.0) - lp);
                    2.0 * level * (-60.0 * t).exp() * lp
                })
                .collect()
        }
    };
    let mut w = Waveform::from_samples(samples);
    w.clip();
    w
}
