//! Optimization loop: random aligned crops, dihedral augmentation,
//! Charbonnier loss, Adam with cosine-annealed learning rate.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{charbonnier_loss, enhance_frames, frame_planes, window_indices, Network, SPATIAL_MULTIPLE};
use crate::codec::{ClipScores, DegradedClip};
use crate::engine::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_init: f64,
    /// Cosine floor; `lr_init / 100` when unset.
    pub lr_min: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch: usize,
    pub crop: usize,
    pub augment: bool,
    pub charbonnier_eps: f64,
    pub steps: usize,
    pub seed: u64,
    /// Validation period in steps; 0 validates only after the last step.
    pub val_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_init: 4e-4,
            lr_min: None,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch: 8,
            crop: 96,
            augment: true,
            charbonnier_eps: 1e-3,
            steps: 1000,
            seed: 0,
            val_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn lr_floor(&self) -> f64 {
        self.lr_min.unwrap_or(self.lr_init / 100.0)
    }

    /// Cosine annealing from `lr_init` at step 0 to the floor at the last step.
    pub fn lr_at(&self, step: usize) -> f64 {
        let (hi, lo) = (self.lr_init, self.lr_floor());
        if self.steps <= 1 {
            return hi;
        }
        let phase = step as f64 / (self.steps - 1) as f64;
        lo + 0.5 * (hi - lo) * (1.0 + (std::f64::consts::PI * phase).cos())
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if self.crop == 0 || self.crop % SPATIAL_MULTIPLE != 0 {
            return Err(Error::Config(format!(
                "crop must be a positive multiple of {SPATIAL_MULTIPLE}, got {}",
                self.crop
            )));
        }
        if !(self.lr_init > 0.0 && self.lr_floor() >= 0.0 && self.charbonnier_eps > 0.0) {
            return Err(Error::Config("learning rates and eps must be positive".into()));
        }
        Ok(())
    }
}

/// Adam moments for every trainable tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        Adam { m: zeros.clone(), v: zeros, t: 0 }
    }

    /// Applies accumulated gradients; frozen tensors are untouched.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let p = store.get_mut(id);
            if !p.requires_grad() {
                continue;
            }
            let Some(g) = p.grad().map(<[f64]>::to_vec) else { continue };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                *w -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.adam_eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub val_dpsnr: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub const HEADER: &'static str = "step,lr,loss,val_dpsnr";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::HEADER);
        for r in &self.rows {
            let val = r.val_dpsnr.map(|v| format!("{v:?}")).unwrap_or_default();
            writeln!(s, "{},{:?},{:?},{}", r.step, r.lr, r.loss, val).unwrap();
        }
        s
    }

    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }

    pub fn last_val(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.val_dpsnr)
    }
}

/// Maps `(y, x)` of a square `n x n` crop through dihedral transform `k` in 0..8.
#[inline]
pub fn dihedral(k: u8, y: usize, x: usize, n: usize) -> (usize, usize) {
    let (mut y, mut x) = (y, x);
    if k & 4 != 0 {
        std::mem::swap(&mut y, &mut x);
    }
    if k & 1 != 0 {
        x = n - 1 - x;
    }
    if k & 2 != 0 {
        y = n - 1 - y;
    }
    (y, x)
}

struct Sample {
    input: Vec<f64>,
    target: Vec<f64>,
}

fn sample(net: &Network, clip: &DegradedClip, center: usize, oy: usize, ox: usize, k: u8, n: usize) -> Result<Sample> {
    let p = net.cfg.planes;
    let w = clip.source[0].width;
    let gather = |planes: &[f64], out: &mut Vec<f64>| {
        for pi in 0..p {
            let base = pi * w * clip.source[0].height;
            for y in 0..n {
                for x in 0..n {
                    let (sy, sx) = dihedral(k, y, x, n);
                    out.push(planes[base + (oy + sy) * w + ox + sx]);
                }
            }
        }
    };
    let mut input = Vec::with_capacity(net.cfg.temporal_window * p * n * n);
    for i in window_indices(center, net.cfg.temporal_window, clip.degraded.len()) {
        gather(&frame_planes(&clip.degraded[i], p)?, &mut input);
    }
    let mut target = Vec::with_capacity(p * n * n);
    gather(&frame_planes(&clip.source[center], p)?, &mut target);
    Ok(Sample { input, target })
}

/// Mean ΔPSNR of the network over every frame of `clip`.
pub fn evaluate(net: &Network, store: &ParamStore, clip: &DegradedClip) -> Result<f64> {
    let enhanced = enhance_frames(net, store, &clip.degraded)?;
    Ok(ClipScores::compute(&clip.source, &clip.degraded, &enhanced)?.mean_delta())
}

pub fn train(net: &Network, store: &mut ParamStore, clips: &[DegradedClip], tc: &TrainConfig) -> Result<TrainLog> {
    train_with(net, store, clips, tc, |_| {})
}

/// Trains in place, calling `hook` after every logged step.
pub fn train_with(
    net: &Network,
    store: &mut ParamStore,
    clips: &[DegradedClip],
    tc: &TrainConfig,
    mut hook: impl FnMut(&LogRow),
) -> Result<TrainLog> {
    tc.validate()?;
    if clips.is_empty() || clips.iter().any(|c| c.source.is_empty()) {
        return Err(Error::Contract("training needs at least one non-empty clip".into()));
    }
    for (i, c) in clips.iter().enumerate() {
        let f = &c.source[0];
        if f.width < tc.crop || f.height < tc.crop {
            return Err(Error::Config(format!("crop {} exceeds clip {i} frames of {}x{}", tc.crop, f.width, f.height)));
        }
    }
    let (n, p, tw) = (tc.crop, net.cfg.planes, net.cfg.temporal_window);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut adam = Adam::new(store);
    let mut log = TrainLog::default();
    for step in 0..tc.steps {
        let mut input = Vec::with_capacity(tc.batch * tw * p * n * n);
        let mut target = Vec::with_capacity(tc.batch * p * n * n);
        for _ in 0..tc.batch {
            let clip = &clips[rng.gen_range(0..clips.len())];
            let center = rng.gen_range(0..clip.source.len());
            let f = &clip.source[0];
            let oy = 8 * rng.gen_range(0..=(f.height - n) / 8);
            let ox = 8 * rng.gen_range(0..=(f.width - n) / 8);
            let k = if tc.augment { rng.gen_range(0..8u8) } else { 0 };
            let s = sample(net, clip, center, oy, ox, k, n)?;
            input.extend(s.input);
            target.extend(s.target);
        }
        let mut t = net.tape();
        let x = t.constant(Tensor::new(vec![tc.batch, tw, p, n, n], input)?);
        let y = t.constant(Tensor::new(vec![tc.batch, p, n, n], target)?);
        let pred = net.forward(&mut t, store, x)?;
        let loss = charbonnier_loss(&mut t, pred, y, tc.charbonnier_eps)?;
        let loss_value = t.value(loss).data()[0];
        if !loss_value.is_finite() {
            return Err(Error::Domain(format!("loss diverged at step {step}")));
        }
        let grads = t.backward(loss)?;
        store.zero_grad();
        grads.accumulate_into(store);
        let lr = tc.lr_at(step);
        adam.step(store, lr, tc);

        let last = step + 1 == tc.steps;
        let validate = last || (tc.val_every > 0 && (step + 1) % tc.val_every == 0);
        let val_dpsnr = if validate { Some(evaluate(net, store, &clips[0])?) } else { None };
        let row = LogRow { step, lr, loss: loss_value, val_dpsnr };
        hook(&row);
        log.rows.push(row);
    }
    store.zero_grad();
    Ok(log)
}
