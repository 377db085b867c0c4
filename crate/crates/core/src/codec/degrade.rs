//! Block-DCT quantization with full ground truth.
//!
//! Each 8x8 block of every plane is transformed, quantized with a uniform
//! round-to-nearest quantizer and inverse transformed. Values live in [0, 1],
//! so the coefficient step is the 8-bit HEVC step divided by 255.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frame::{Frame, Plane};
use crate::dct::{forward8, inverse8, qp_step, QuantPrior, QP_MAX};
use crate::error::{Error, Result};

/// Per-block QP variation standing in for rate control.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jitter {
    /// Block QPs are drawn uniformly from `qp ± amplitude`, then clipped to the legal range.
    pub amplitude: i32,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegradeConfig {
    pub qp: i32,
    pub luma_table: [f64; 64],
    pub chroma_table: [f64; 64],
    pub jitter: Option<Jitter>,
}

impl DegradeConfig {
    /// Constant QP with flat tables.
    pub fn cqp(qp: i32) -> Self {
        DegradeConfig { qp, luma_table: [16.0; 64], chroma_table: [16.0; 64], jitter: None }
    }

    pub fn from_priors(luma: &QuantPrior, chroma: &QuantPrior) -> Self {
        DegradeConfig { qp: luma.qp, luma_table: luma.t_base, chroma_table: chroma.t_base, jitter: None }
    }

    pub fn with_jitter(mut self, jitter: Option<Jitter>) -> Self {
        self.jitter = jitter.filter(|j| j.amplitude > 0);
        self
    }
}

/// Coefficient step in [0, 1] sample units.
pub fn coef_step(qp: i32, table_entry: f64) -> Result<f64> {
    Ok(qp_step(qp)? * table_entry / 16.0 / 255.0)
}

/// Ground truth for one plane. Coefficient arrays are block-major:
/// entry `b * 64 + u * 8 + v` for block `b = by * blocks_w + bx`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneTruth {
    pub blocks_w: usize,
    pub blocks_h: usize,
    pub block_qp: Vec<i32>,
    /// Step per coefficient, same layout as `theta`.
    pub step: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_q: Vec<f64>,
    pub xi: Vec<f64>,
    pub delta: Vec<f64>,
    /// Blockwise inverse of `theta_q` before clamping.
    pub pre_clamp: Plane,
}

impl PlaneTruth {
    pub fn block_count(&self) -> usize {
        self.blocks_w * self.blocks_h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameTruth {
    pub planes: Vec<PlaneTruth>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegradedClip {
    pub qp: i32,
    pub source: Vec<Frame>,
    pub degraded: Vec<Frame>,
    pub truth: Vec<FrameTruth>,
}

/// Copies block `(bx, by)` of `p` into 64 row-major samples.
pub fn extract_block(p: &Plane, bx: usize, by: usize) -> [f64; 64] {
    let mut b = [0.0; 64];
    for r in 0..8 {
        let row = (by * 8 + r) * p.width + bx * 8;
        b[r * 8..r * 8 + 8].copy_from_slice(&p.data[row..row + 8]);
    }
    b
}

fn store_block(p: &mut Plane, bx: usize, by: usize, b: &[f64]) {
    for r in 0..8 {
        let row = (by * 8 + r) * p.width + bx * 8;
        p.data[row..row + 8].copy_from_slice(&b[r * 8..r * 8 + 8]);
    }
}

fn degrade_plane(p: &Plane, table: &[f64; 64], qp_of_block: impl Fn(usize) -> i32) -> Result<PlaneTruth> {
    let (bw, bh) = (p.width / 8, p.height / 8);
    let n = bw * bh * 64;
    let mut t = PlaneTruth {
        blocks_w: bw,
        blocks_h: bh,
        block_qp: Vec::with_capacity(bw * bh),
        step: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
        theta_q: Vec::with_capacity(n),
        xi: Vec::with_capacity(n),
        delta: Vec::with_capacity(n),
        pre_clamp: Plane::zeros(p.width, p.height),
    };
    for by in 0..bh {
        for bx in 0..bw {
            let qp = qp_of_block(by * bw + bx);
            t.block_qp.push(qp);
            let theta = forward8(&extract_block(p, bx, by));
            let mut tq = [0.0; 64];
            for k in 0..64 {
                let s = coef_step(qp, table[k])?;
                let q = theta[k] / s;
                // f64::round ties away from zero
                let level = q.round();
                tq[k] = level * s;
                t.step.push(s);
                t.theta.push(theta[k]);
                t.theta_q.push(tq[k]);
                t.xi.push(theta[k] - tq[k]);
                t.delta.push(q - level);
            }
            store_block(&mut t.pre_clamp, bx, by, &inverse8(&tq));
        }
    }
    Ok(t)
}

/// Quantizes every frame. Plane dimensions must be multiples of 8.
pub fn degrade(frames: &[Frame], cfg: &DegradeConfig) -> Result<DegradedClip> {
    if !(0..=QP_MAX).contains(&cfg.qp) {
        return Err(Error::Domain(format!("qp must lie in [0, {QP_MAX}], got {}", cfg.qp)));
    }
    let mut rng = cfg.jitter.map(|j| ChaCha8Rng::seed_from_u64(j.seed));
    let mut degraded = Vec::with_capacity(frames.len());
    let mut truth = Vec::with_capacity(frames.len());
    for (fi, f) in frames.iter().enumerate() {
        let m = f.layout.block_multiple();
        if f.width % m != 0 || f.height % m != 0 {
            return Err(Error::Contract(format!(
                "frame {fi} is {}x{}; {:?} frames must be padded to a multiple of {m} in each dimension",
                f.width, f.height, f.layout
            )));
        }
        let mut planes = Vec::with_capacity(f.planes.len());
        for (pi, p) in f.planes.iter().enumerate() {
            let table = if pi == 0 { &cfg.luma_table } else { &cfg.chroma_table };
            let blocks = (p.width / 8) * (p.height / 8);
            let qps: Vec<i32> = match (&mut rng, cfg.jitter) {
                (Some(rng), Some(j)) => {
                    (0..blocks).map(|_| (cfg.qp + rng.gen_range(-j.amplitude..=j.amplitude)).clamp(0, QP_MAX)).collect()
                }
                _ => vec![cfg.qp; blocks],
            };
            planes.push(degrade_plane(p, table, |b| qps[b])?);
        }
        let out = Frame::new(f.layout, f.width, f.height, planes.iter().map(|t| t.pre_clamp.clamped()).collect())?;
        degraded.push(out);
        truth.push(FrameTruth { planes });
    }
    Ok(DegradedClip { qp: cfg.qp, source: frames.to_vec(), degraded, truth })
}
