//! Causal sound effects for the environments and the texture features computed from them.

mod synth;
mod texture;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use synth::{modal_shape, synth_event_jingle, synth_impact, JingleKind, Material, MaterialProfile};
pub use texture::{
    band_edges, band_weight, euclidean, extract_texture, hz_to_mel, mel_to_hz, SoundTexture,
    TextureExtractor, BANDS, ENVELOPE_WINDOW, MIN_CLIP_LEN, TEXTURE_DIM,
};

use crate::error::Result;

pub const SAMPLE_RATE: u32 = 16_000;
/// 50 ms per step in the physics environment.
pub const PHYSICS_CLIP_LEN: usize = 800;
/// 60 ms per step in the arcade environments.
pub const ARCADE_CLIP_LEN: usize = 960;
/// Clips with RMS below this are silent.
pub const SILENCE_RMS: f64 = 1e-4;

/// Mono 16 kHz clip with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<f64>,
}

impl Waveform {
    pub fn silence(len: usize) -> Self {
        Self {
            samples: vec![0.0; len],
        }
    }

    /// Wraps samples, replacing non-finite values with 0 and clipping to `[-1, 1]`.
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let mut w = Self { samples };
        w.clip();
        w
    }

    /// Wraps samples without clipping; call [`clip`](Self::clip) before use.
    pub fn unclipped(samples: Vec<f64>) -> Self {
        Self { samples }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn is_silent(&self) -> bool {
        self.rms() < SILENCE_RMS
    }

    /// Adds `other * gain` starting at `offset`, truncating at the end of this clip.
    pub fn mix(&mut self, other: &Waveform, offset: usize, gain: f64) {
        for (dst, src) in self.samples.iter_mut().skip(offset).zip(&other.samples) {
            *dst += gain * src;
        }
    }

    pub fn clip(&mut self) {
        for s in &mut self.samples {
            *s = if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 };
        }
    }

    pub fn scaled(&self, factor: f64) -> Waveform {
        Self {
            samples: self.samples.iter().map(|s| s * factor).collect(),
        }
    }

    /// Writes the clip as 16-bit PCM WAV.
    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: SAMPLE_RATE,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for s in &self.samples {
            writer.write_sample((s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16)?;
        }
        writer.finalize()?;
        Ok(())
    }
}
