//! Deterministic synthetic luma clips.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frame::Frame;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Static ramp `(x + y) / (w + h - 2)`.
    Gradient,
    /// 8-pixel checkerboard drifting one pixel per frame diagonally.
    Checker,
    /// Bright band with a seeded sinusoidal texture, shifting right one pixel per frame.
    MovingEdge,
    /// Smoothed seeded noise drifting one pixel per frame diagonally.
    NoiseTexture,
}

impl SynthKind {
    pub const ALL: [SynthKind; 4] =
        [SynthKind::Gradient, SynthKind::Checker, SynthKind::MovingEdge, SynthKind::NoiseTexture];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Gradient => "gradient",
            SynthKind::Checker => "checker",
            SynthKind::MovingEdge => "moving_edge",
            SynthKind::NoiseTexture => "noise_texture",
        }
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SynthKind::ALL.into_iter().find(|k| k.name() == s || k.name().replace('_', "-") == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown clip kind {s:?}; expected one of gradient, checker, moving_edge, noise_texture"
            ))
        })
    }
}

pub fn synth_clip(kind: SynthKind, frames: usize, width: usize, height: usize, seed: u64) -> Result<Vec<Frame>> {
    if width == 0 || height == 0 || width % 8 != 0 || height % 8 != 0 {
        return Err(Error::Contract(format!(
            "synthetic clips need dimensions that are positive multiples of 8, got {width}x{height}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = match kind {
        SynthKind::Gradient => {
            let denom = (width + height - 2).max(1) as f64;
            (0..width * height).map(|i| ((i % width) + (i / width)) as f64 / denom).collect()
        }
        SynthKind::Checker => {
            (0..width * height).map(|i| if ((i % width) / 8 + (i / width) / 8) % 2 == 0 { 0.2 } else { 0.8 }).collect()
        }
        SynthKind::MovingEdge => {
            let fx = rng.gen_range(1..4) as f64;
            let fy = rng.gen_range(1..4) as f64;
            let phase = rng.gen_range(0.0..2.0 * PI);
            (0..width * height)
                .map(|i| {
                    let (x, y) = ((i % width) as f64, (i / width) as f64);
                    let band = if (width / 4..3 * width / 4).contains(&(i % width)) { 0.45 } else { 0.0 };
                    let tex = 0.1 * (2.0 * PI * (fx * x / width as f64 + fy * y / height as f64) + phase).sin();
                    0.25 + band + tex
                })
                .collect()
        }
        SynthKind::NoiseTexture => {
            let mut v: Vec<f64> = (0..width * height).map(|_| rng.gen::<f64>()).collect();
            for _ in 0..2 {
                v = box_wrap(&v, width, height);
            }
            let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
            let span = (hi - lo).max(1e-12);
            v.iter().map(|x| 0.1 + 0.8 * (x - lo) / span).collect()
        }
    };
    let (dx, dy) = match kind {
        SynthKind::Gradient => (0, 0),
        SynthKind::MovingEdge => (1, 0),
        SynthKind::Checker | SynthKind::NoiseTexture => (1, 1),
    };
    (0..frames)
        .map(|t| {
            let data = (0..width * height)
                .map(|i| {
                    let x = (i % width + width * frames - (dx * t) % width) % width;
                    let y = (i / width + height * frames - (dy * t) % height) % height;
                    base[y * width + x]
                })
                .collect();
            Frame::mono(width, height, data)
        })
        .collect()
}

fn box_wrap(v: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in [h - 1, 0, 1] {
                for dx in [w - 1, 0, 1] {
                    s += v[((y + dy) % h) * w + (x + dx) % w];
                }
            }
            out[y * w + x] = s / 9.0;
        }
    }
    out
}
