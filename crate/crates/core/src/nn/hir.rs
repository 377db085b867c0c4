//! Hierarchical and iterative refinement.
//!
//! Features are projected into a detail stream at full resolution and a
//! smooth stream at half resolution. Each iteration refines the detail
//! stream locally, the smooth stream with global attention, and exchanges
//! information between them across scales.

use super::layers::{Attention, Conv, Init, ParamBuilder};
use crate::engine::{AttentionSpan, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// `(x - box_filter3(x), avg_pool2(x))`.
pub fn freq_split(t: &mut Tape, x: Var) -> Result<(Var, Var)> {
    let blur = t.box_filter3(x)?;
    let detail = t.sub(x, blur)?;
    let smooth = t.avg_pool2(x)?;
    Ok((detail, smooth))
}

/// `F' = d + SA(conv1(d))`, `out = d + conv2(F' + dw(F'))`.
#[derive(Clone, Debug)]
pub struct Refine {
    pub pre: Conv,
    pub attn: Attention,
    pub dw: Conv,
    pub post: Conv,
}

impl Refine {
    pub fn new(pb: &mut ParamBuilder, name: &str, c: usize, span: AttentionSpan) -> Self {
        Refine {
            pre: Conv::new(pb, &format!("{name}.pre"), c, c, 1, Init::FanIn),
            attn: Attention::new(pb, &format!("{name}.attn"), c, span),
            dw: Conv::grouped(pb, &format!("{name}.dw"), c, c, 3, 1, c, Init::FanIn),
            post: Conv::new(pb, &format!("{name}.post"), c, c, 1, Init::Zero),
        }
    }

    pub fn forward(&self, t: &mut Tape, s: &ParamStore, d: Var) -> Result<Var> {
        let h = self.pre.forward(t, s, d)?;
        let h = self.attn.forward(t, s, h)?;
        let f1 = t.add(d, h)?;
        let g = self.dw.forward(t, s, f1)?;
        let g = t.add(f1, g)?;
        let f2 = self.post.forward(t, s, g)?;
        t.add(d, f2)
    }
}

/// One detail/smooth exchange round.
#[derive(Clone, Debug)]
pub struct HirIteration {
    /// Smooth to detail: conv to 4·Cb then pixel shuffle.
    pub l_to_d: Conv,
    /// Detail to smooth: conv then average pooling.
    pub d_to_l: Conv,
    pub dr: Refine,
    pub nr: Refine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HirConfig {
    pub channels: usize,
    pub iterations: usize,
    /// Attention span of the detail stream; the smooth stream attends globally.
    pub detail_span: AttentionSpan,
}

#[derive(Clone, Debug)]
pub struct Hir {
    pub cfg: HirConfig,
    pub split_proj: Conv,
    pub iters: Vec<HirIteration>,
    pub up: Conv,
    pub merge: Conv,
}

impl Hir {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: HirConfig) -> Result<Self> {
        let c = cfg.channels;
        if c % 2 != 0 || c == 0 {
            return Err(Error::Config(format!("HIR needs an even channel count, got {c}")));
        }
        if cfg.iterations == 0 {
            return Err(Error::Config("HIR needs at least one iteration".into()));
        }
        let cb = c / 2;
        let iters = (0..cfg.iterations)
            .map(|i| {
                let n = format!("{name}.iter{i}");
                HirIteration {
                    l_to_d: Conv::new(pb, &format!("{n}.l_to_d"), cb, 4 * cb, 3, Init::FanIn),
                    d_to_l: Conv::new(pb, &format!("{n}.d_to_l"), cb, cb, 3, Init::FanIn),
                    dr: Refine::new(pb, &format!("{n}.dr"), cb, cfg.detail_span),
                    nr: Refine::new(pb, &format!("{n}.nr"), cb, AttentionSpan::Global),
                }
            })
            .collect();
        Ok(Hir {
            cfg,
            split_proj: Conv::new(pb, &format!("{name}.split_proj"), c, c, 1, Init::FanIn),
            iters,
            up: Conv::new(pb, &format!("{name}.up"), cb, 4 * cb, 3, Init::FanIn),
            merge: Conv::new(pb, &format!("{name}.merge"), c, c, 1, Init::Zero),
        })
    }

    /// Detail and smooth streams after all iterations.
    pub fn streams(&self, t: &mut Tape, s: &ParamStore, x: Var) -> Result<(Var, Var)> {
        let cb = self.cfg.channels / 2;
        let shape = t.shape(x).to_vec();
        if shape.len() != 4 || shape[1] != self.cfg.channels || shape[2] % 2 != 0 || shape[3] % 2 != 0 {
            return Err(Error::shape(
                "hir",
                format!("expected [B,{},H,W] with even H and W, got {shape:?}", self.cfg.channels),
            ));
        }
        let p = self.split_proj.forward(t, s, x)?;
        let a = t.slice_channels(p, 0, cb)?;
        let b = t.slice_channels(p, cb, cb)?;
        let (mut d, _) = freq_split(t, a)?;
        let (_, mut l) = freq_split(t, b)?;
        for it in &self.iters {
            let up = it.l_to_d.forward(t, s, l)?;
            let up = t.depth_to_space(up, 2)?;
            let din = t.add(d, up)?;
            d = it.dr.forward(t, s, din)?;
            let down = it.d_to_l.forward(t, s, d)?;
            let down = t.avg_pool2(down)?;
            let lin = t.add(l, down)?;
            l = it.nr.forward(t, s, lin)?;
        }
        Ok((d, l))
    }

    /// `x + merge(concat(D, upsample(L)))`.
    pub fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var) -> Result<Var> {
        let (d, l) = self.streams(t, s, x)?;
        let up = self.up.forward(t, s, l)?;
        let up = t.depth_to_space(up, 2)?;
        let cat = t.concat_channels(&[d, up])?;
        let m = self.merge.forward(t, s, cat)?;
        t.add(x, m)
    }
}
