//! Synthetic test videos: a static background with one textured rectangle
//! moving across it. The object wraps around the frame edges and replaces
//! the background under its support.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ForegroundMask;
use crate::tensor::DenseTensor;
use crate::tv::VideoVolume;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundKind {
    SmoothGradient,
    /// Random spatial pattern of the given rank.
    LowRank { rank: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectSpec {
    /// Rectangle `(rows, cols)`.
    pub size: [usize; 2],
    /// Top-left corner in frame 0.
    pub start: [usize; 2],
    /// Displacement per frame `(rows, cols)`.
    pub velocity: [i64; 2],
    pub intensity: [f64; 2],
}

impl Default for ObjectSpec {
    fn default() -> Self {
        Self { size: [10, 12], start: [20, 4], velocity: [1, 2], intensity: [200.0, 255.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub background: BackgroundKind,
    /// `None` produces a pure background video.
    pub object: Option<ObjectSpec>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            frames: 32,
            background: BackgroundKind::SmoothGradient,
            object: Some(ObjectSpec::default()),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub volume: VideoVolume,
    pub background: VideoVolume,
    pub mask: ForegroundMask,
}

const BG_LOW: f64 = 30.0;
const BG_HIGH: f64 = 170.0;

fn uniform(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

impl SynthSpec {
    pub fn dims(&self) -> [usize; 3] {
        [self.height, self.width, self.frames]
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.frames == 0 {
            return Err(Error::InvalidParameter("video dimensions must be positive".into()));
        }
        if let BackgroundKind::LowRank { rank } = self.background {
            if rank == 0 || rank > self.height.min(self.width) {
                return Err(Error::RankOutOfRange { rank, max: self.height.min(self.width) });
            }
        }
        if let Some(o) = &self.object {
            if o.size[0] == 0 || o.size[1] == 0 || o.size[0] > self.height || o.size[1] > self.width {
                return Err(Error::InvalidParameter(format!(
                    "object {}x{} does not fit a {}x{} frame",
                    o.size[0], o.size[1], self.height, self.width
                )));
            }
            let [lo, hi] = o.intensity;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter(format!("bad intensity range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

fn background_frame(spec: &SynthSpec, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let (h, w) = (spec.height, spec.width);
    let mut frame = vec![0.0; h * w];
    match spec.background {
        BackgroundKind::SmoothGradient => {
            let (sh, sw) = ((h.max(2) - 1) as f64, (w.max(2) - 1) as f64);
            for j in 0..w {
                for i in 0..h {
                    let (u, v) = (i as f64 / sh, j as f64 / sw);
                    let g = 0.45 * u + 0.35 * v + 0.2 * (0.5 + 0.5 * (std::f64::consts::PI * (u + 2.0 * v)).sin());
                    frame[i + h * j] = g;
                }
            }
        }
        BackgroundKind::LowRank { rank } => {
            for _ in 0..rank {
                let a: Vec<f64> = (0..h).map(|_| uniform(rng)).collect();
                let b: Vec<f64> = (0..w).map(|_| uniform(rng)).collect();
                for j in 0..w {
                    for i in 0..h {
                        frame[i + h * j] += a[i] * b[j];
                    }
                }
            }
        }
    }
    let lo = frame.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = frame.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    frame.iter().map(|v| BG_LOW + (BG_HIGH - BG_LOW) * (v - lo) / span).collect()
}

/// Builds the video, its background and the foreground support.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthVideo> {
    spec.validate()?;
    let dims = spec.dims();
    let [h, w, d] = dims;
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&spec.seed.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    let frame = background_frame(spec, &mut rng);
    let mut bg = Vec::with_capacity(h * w * d);
    for _ in 0..d {
        bg.extend_from_slice(&frame);
    }
    let mut video = bg.clone();
    let mut mask = ForegroundMask::empty(dims);
    if let Some(o) = &spec.object {
        let [oh, ow] = o.size;
        let [lo, hi] = o.intensity;
        let texture: Vec<f64> = (0..oh * ow).map(|_| lo + (hi - lo) * uniform(&mut rng)).collect();
        for k in 0..d {
            let r0 = (o.start[0] as i64 + o.velocity[0] * k as i64).rem_euclid(h as i64) as usize;
            let c0 = (o.start[1] as i64 + o.velocity[1] * k as i64).rem_euclid(w as i64) as usize;
            for b in 0..ow {
                for a in 0..oh {
                    let at = (r0 + a) % h + h * ((c0 + b) % w + w * k);
                    video[at] = texture[a + oh * b];
                    mask.data[at] = true;
                }
            }
        }
    }
    Ok(SynthVideo {
        volume: DenseTensor::from_vec(&dims, video)?,
        background: DenseTensor::from_vec(&dims, bg)?,
        mask,
    })
}
