//! Subband envelope statistics ("sound texture") of a short clip.
//!
//! Pipeline: FFT, eight mel-spaced triangular bands between 100 Hz and 8 kHz
//! applied to the spectrum and inverted back to subband signals, a rectified
//! 2 ms moving-average envelope per band, then per-envelope mean, standard
//! deviation and skewness plus the Pearson correlation of adjacent envelopes.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{Waveform, SAMPLE_RATE};
use crate::error::{input_err, Result};

pub const BANDS: usize = 8;
pub const TEXTURE_DIM: usize = 3 * BANDS + (BANDS - 1);
pub const MIN_CLIP_LEN: usize = 256;
pub const LOW_HZ: f64 = 100.0;
pub const HIGH_HZ: f64 = 8000.0;
/// Envelope smoothing window: 2 ms.
pub const ENVELOPE_WINDOW: usize = (SAMPLE_RATE as usize * 2) / 1000;
/// Envelopes whose standard deviation falls below this are treated as silent.
const FLAT_STD: f64 = 1e-10;

/// Fixed-length texture vector: `[means; 8] ++ [stds; 8] ++ [skews; 8] ++ [adjacent corrs; 7]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundTexture(pub Vec<f64>);

impl SoundTexture {
    pub fn zeros() -> Self {
        Self(vec![0.0; TEXTURE_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn means(&self) -> &[f64] {
        &self.0[..BANDS]
    }

    pub fn stds(&self) -> &[f64] {
        &self.0[BANDS..2 * BANDS]
    }

    pub fn skews(&self) -> &[f64] {
        &self.0[2 * BANDS..3 * BANDS]
    }

    pub fn correlations(&self) -> &[f64] {
        &self.0[3 * BANDS..]
    }

    pub fn distance(&self, other: &SoundTexture) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Band edge frequencies: band `b` rises from `edges[b]`, peaks at
/// `edges[b + 1]` and falls to zero at `edges[b + 2]`.
pub fn band_edges() -> [f64; BANDS + 2] {
    let (lo, hi) = (hz_to_mel(LOW_HZ), hz_to_mel(HIGH_HZ));
    let mut edges = [0.0; BANDS + 2];
    for (i, e) in edges.iter_mut().enumerate() {
        *e = mel_to_hz(lo + (hi - lo) * i as f64 / (BANDS + 1) as f64);
    }
    edges
}

/// Triangular weight of band `band` at frequency `hz`.
pub fn band_weight(band: usize, hz: f64) -> f64 {
    let e = band_edges();
    let (lo, mid, hi) = (e[band], e[band + 1], e[band + 2]);
    if hz <= lo || hz >= hi {
        0.0
    } else if hz <= mid {
        (hz - lo) / (mid - lo)
    } else {
        (hi - hz) / (hi - mid)
    }
}

/// Reusable texture extractor for one clip length.
pub struct TextureExtractor {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `[band][bin]` spectral weights, mirrored for negative frequencies.
    weights: Vec<Vec<f64>>,
}

impl TextureExtractor {
    pub fn new(len: usize) -> Result<Self> {
        if len < MIN_CLIP_LEN {
            return Err(input_err(format!(
                "clip of {len} samples is shorter than {MIN_CLIP_LEN}"
            )));
        }
        let mut planner = FftPlanner::new();
        let weights = (0..BANDS)
            .map(|b| {
                (0..len)
                    .map(|j| {
                        let k = j.min(len - j);
                        band_weight(b, k as f64 * SAMPLE_RATE as f64 / len as f64)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            weights,
        })
    }

    /// Rectified, smoothed envelope of every subband.
    pub fn envelopes(&self, samples: &[f64]) -> Vec<Vec<f64>> {
        let mut spectrum: Vec<Complex<f64>> =
            samples.iter().map(|s| Complex::new(*s, 0.0)).collect();
        self.forward.process(&mut spectrum);
        let scale = 1.0 / self.len as f64;
        self.weights
            .iter()
            .map(|w| {
                let mut band: Vec<Complex<f64>> =
                    spectrum.iter().zip(w).map(|(x, g)| x * (g * scale)).collect();
                self.inverse.process(&mut band);
                let rectified: Vec<f64> = band.iter().map(|c| c.re.abs()).collect();
                moving_average(&rectified, ENVELOPE_WINDOW)
            })
            .collect()
    }

    pub fn extract(&self, w: &Waveform) -> Result<SoundTexture> {
        if w.len() != self.len {
            return Err(input_err(format!(
                "extractor built for {} samples, clip has {}",
                self.len,
                w.len()
            )));
        }
        if w.samples().iter().all(|s| *s == 0.0) {
            return Ok(SoundTexture::zeros());
        }
        let envs = self.envelopes(w.samples());
        let mut out = vec![0.0; TEXTURE_DIM];
        let mut stats = Vec::with_capacity(BANDS);
        for (b, env) in envs.iter().enumerate() {
            let s = moments(env);
            out[b] = s.mean;
            out[BANDS + b] = s.std;
            out[2 * BANDS + b] = s.skew;
            stats.push(s);
        }
        for b in 0..BANDS - 1 {
            out[3 * BANDS + b] = pearson(&envs[b], &stats[b], &envs[b + 1], &stats[b + 1]);
        }
        Ok(SoundTexture(out))
    }
}

/// Valid-mode moving average (output length `len - window + 1`).
fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let window = window.clamp(1, x.len());
    let mut out = Vec::with_capacity(x.len() - window + 1);
    let mut acc: f64 = x[..window].iter().sum();
    out.push(acc / window as f64);
    for i in window..x.len() {
        acc += x[i] - x[i - window];
        out.push(acc / window as f64);
    }
    out
}

struct Moments {
    mean: f64,
    std: f64,
    skew: f64,
}

fn moments(x: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let skew = if std > FLAT_STD {
        x.iter().map(|v| ((v - mean) / std).powi(3)).sum::<f64>() / n
    } else {
        0.0
    };
    Moments { mean, std, skew }
}

fn pearson(a: &[f64], sa: &Moments, b: &[f64], sb: &Moments) -> f64 {
    if sa.std <= FLAT_STD || sb.std <= FLAT_STD {
        return 0.0;
    }
    let n = a.len() as f64;
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - sa.mean) * (y - sb.mean))
        .sum::<f64>()
        / n;
    (cov / (sa.std * sb.std)).clamp(-1.0, 1.0)
}

thread_local! {
    static EXTRACTORS: RefCell<HashMap<usize, Arc<TextureExtractor>>> = RefCell::new(HashMap::new());
}

/// Texture of a clip, reusing a per-thread extractor for its length.
pub fn extract_texture(w: &Waveform) -> Result<SoundTexture> {
    let extractor = EXTRACTORS.with(|cache| -> Result<Arc<TextureExtractor>> {
        if let Some(e) = cache.borrow().get(&w.len()) {
            return Ok(e.clone());
        }
        let e = Arc::new(TextureExtractor::new(w.len())?);
        cache.borrow_mut().insert(w.len(), e.clone());
        Ok(e)
    })?;
    extractor.extract(w)
}
