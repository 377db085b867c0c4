//! Implicit frequency upsampling.
//!
//! Transformer features feed a pixel-domain branch (convolution plus pixel
//! shuffle) and a DCT-domain branch. The DCT branch predicts the relative
//! quantization loss δ per 8x8 block, scales it by a learnable affine of the
//! quantization table and reconstructs pixels through a fixed inverse DCT
//! sampled on a grid `factor` times finer than the block.

use serde::{Deserialize, Serialize};

use super::layers::{run_stack, tf_stack, upsample_nearest2, Conv, Init, ParamBuilder, TfBlock};
use crate::dct::{idct8, make_quant_prior, ChannelKind, QuantPrior, TableSource};
use crate::engine::{AttentionSpan, Padding, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Spatial upsampling strategy of a stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsampler {
    /// Pixel branch plus DCT branch.
    ImpFreqUp,
    /// Pixel branch only (convolution and pixel shuffle).
    SubPixel,
    /// Convolution followed by nearest-neighbour replication.
    Nearest,
}

/// Where the table scaling of the x2 DCT branch is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableScaling {
    /// 256 fine samples scaled by the duplicated table after the inverse transform.
    AfterIdct,
    /// 64 coefficients scaled by the base table before the inverse transform.
    BeforeIdct,
}

/// Quantization priors for the luma and chroma sub-branches.
#[derive(Clone, Debug, PartialEq)]
pub struct Priors {
    pub luma: QuantPrior,
    pub chroma: QuantPrior,
}

impl Priors {
    pub fn flat(qp: i32) -> Result<Self> {
        Ok(Priors {
            luma: make_quant_prior(qp, ChannelKind::Luma, &TableSource::Flat)?,
            chroma: make_quant_prior(qp, ChannelKind::Chroma, &TableSource::Flat)?,
        })
    }
}

/// Learnable `α ⊙ table + β`. α starts at 1/16 so a flat table of 16 maps to unit scale.
#[derive(Clone, Debug)]
pub struct LearnableAffine {
    pub scale: ParamId,
    pub shift: ParamId,
    pub len: usize,
}

impl LearnableAffine {
    pub fn new(pb: &mut ParamBuilder, name: &str, len: usize) -> Self {
        LearnableAffine {
            scale: pb.filled(format!("{name}.alpha"), vec![len], 1.0 / 16.0),
            shift: pb.filled(format!("{name}.beta"), vec![len], 0.0),
            len,
        }
    }

    pub fn apply(&self, t: &mut Tape, s: &ParamStore, table: &[f64]) -> Result<Var> {
        if table.len() != self.len {
            return Err(Error::Config(format!(
                "affine of length {} cannot scale a table of {} entries",
                self.len,
                table.len()
            )));
        }
        let a = t.param(s, self.scale);
        let b = t.param(s, self.shift);
        let tab = t.constant(Tensor::new(vec![self.len], table.to_vec())?);
        let at = t.mul(a, tab)?;
        t.add(at, b)
    }
}

/// Registers the fixed inverse-transform weights `[(8f)², 64, 1, 1]`.
pub fn irm_weights(pb: &mut ParamBuilder, name: &str, factor: usize) -> Result<ParamId> {
    let m = &idct8(factor)?.matrix;
    Ok(pb.frozen(format!("{name}.irm"), Tensor::new(vec![m.rows, m.cols, 1, 1], m.data.clone())?))
}

/// `0.5 · tanh(space_to_depth(conv(x), 8))`: one 64-channel δ group per conv output channel.
pub fn estimate_delta(t: &mut Tape, s: &ParamStore, conv: &Conv, x: Var) -> Result<Var> {
    let (h, w) = match *t.shape(x) {
        [_, _, h, w] => (h, w),
        ref other => return Err(Error::shape("estimate_delta", format!("expected [B,C,H,W], got {other:?}"))),
    };
    if h % 8 != 0 || w % 8 != 0 {
        return Err(Error::shape("estimate_delta", format!("{h}x{w} features are not 8-aligned")));
    }
    let y = conv.forward(t, s, x)?;
    let y = t.space_to_depth(y, 8)?;
    let y = t.tanh(y);
    Ok(t.scale(y, 0.5))
}

/// Scales δ by the quantization prior and reconstructs pixels with the fixed IRM weights.
///
/// Returns `[B, 1, 8f·h, 8f·w]` for `delta` of shape `[B, 64, h, w]`.
#[allow(clippy::too_many_arguments)]
pub fn qam_irm_apply(
    t: &mut Tape,
    s: &ParamStore,
    delta: Var,
    prior: &QuantPrior,
    affine: &LearnableAffine,
    irm: Var,
    factor: usize,
    scaling: TableScaling,
) -> Result<Var> {
    let rows = t.shape(irm)[0];
    if rows != 64 * factor * factor {
        return Err(Error::Config(format!("IRM with {rows} rows does not realize factor {factor}")));
    }
    let after = factor == 2 && scaling == TableScaling::AfterIdct;
    let want = if after { 256 } else { 64 };
    if affine.len != want {
        return Err(Error::Config(format!(
            "factor {factor} with {scaling:?} needs an affine of length {want}, got {}",
            affine.len
        )));
    }
    let pixels = if after {
        let y = t.conv2d(delta, irm, None, 1, Padding::Zero(0), 1)?;
        let sv = affine.apply(t, s, &prior.t_up)?;
        t.mul_channels(y, sv)?
    } else {
        let sv = affine.apply(t, s, &prior.t_base)?;
        let xi = t.mul_channels(delta, sv)?;
        t.conv2d(xi, irm, None, 1, Padding::Zero(0), 1)?
    };
    t.depth_to_space(pixels, 8 * factor)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImpFreqUpConfig {
    pub channels: usize,
    pub n1: usize,
    pub n2: usize,
    pub factor: usize,
    pub span: AttentionSpan,
    pub upsampler: Upsampler,
    pub scaling: TableScaling,
}

/// DCT-domain restoration branch.
#[derive(Clone, Debug)]
pub struct DctBranch {
    pub delta_luma: Conv,
    pub delta_chroma: Conv,
    pub qam_luma: LearnableAffine,
    pub qam_chroma: LearnableAffine,
    pub irm: ParamId,
    pub fuse: Conv,
}

#[derive(Clone, Debug)]
pub struct ImpFreqUp {
    pub cfg: ImpFreqUpConfig,
    pub tf_pre: Vec<TfBlock>,
    pub tf_pixel: Vec<TfBlock>,
    pub pixel_proj: Conv,
    pub dct: Option<DctBranch>,
}

impl ImpFreqUp {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: ImpFreqUpConfig) -> Result<Self> {
        let c = cfg.channels;
        if cfg.factor != 1 && cfg.factor != 2 {
            return Err(Error::Config(format!("upsampling factor must be 1 or 2, got {}", cfg.factor)));
        }
        let tf_pre = tf_stack(pb, &format!("{name}.tf_pre"), cfg.n1, c, cfg.span);
        let tf_pixel = tf_stack(pb, &format!("{name}.tf_pixel"), cfg.n2, c, cfg.span);
        let proj_out = match (cfg.factor, cfg.upsampler) {
            (2, Upsampler::ImpFreqUp | Upsampler::SubPixel) => 4 * c,
            _ => c,
        };
        let init = if proj_out == 4 * c { Init::Icnr(2) } else { Init::FanIn };
        let pixel_proj = Conv::new(pb, &format!("{name}.pixel_proj"), c, proj_out, 3, init);
        let dct = if cfg.upsampler == Upsampler::ImpFreqUp {
            let len = if cfg.factor == 2 && cfg.scaling == TableScaling::AfterIdct { 256 } else { 64 };
            Some(DctBranch {
                delta_luma: Conv::new(pb, &format!("{name}.delta_luma"), c, 1, 3, Init::FanIn),
                delta_chroma: Conv::new(pb, &format!("{name}.delta_chroma"), c, 2, 3, Init::FanIn),
                qam_luma: LearnableAffine::new(pb, &format!("{name}.qam_luma"), len),
                qam_chroma: LearnableAffine::new(pb, &format!("{name}.qam_chroma"), len),
                irm: irm_weights(pb, name, cfg.factor)?,
                fuse: Conv::new(pb, &format!("{name}.fuse"), 3, c, 3, Init::Zero),
            })
        } else {
            None
        };
        Ok(ImpFreqUp { cfg, tf_pre, tf_pixel, pixel_proj, dct })
    }

    /// Pixel branch plus the fused DCT branch; spatial dims scale by the factor.
    pub fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var, priors: &Priors) -> Result<Var> {
        let f0 = run_stack(&self.tf_pre, t, s, x)?;
        let p = run_stack(&self.tf_pixel, t, s, f0)?;
        let p = self.pixel_proj.forward(t, s, p)?;
        let pixel = match (self.cfg.factor, self.cfg.upsampler) {
            (1, _) => p,
            (_, Upsampler::Nearest) => upsample_nearest2(t, p)?,
            _ => t.depth_to_space(p, 2)?,
        };
        let Some(d) = &self.dct else { return Ok(pixel) };
        let dct = self.dct_branch(d, t, s, f0, priors)?;
        let fused = d.fuse.forward(t, s, dct)?;
        t.add(pixel, fused)
    }

    /// Three reconstructed planes (luma, two chroma) at the output resolution.
    pub fn dct_branch(&self, d: &DctBranch, t: &mut Tape, s: &ParamStore, f0: Var, priors: &Priors) -> Result<Var> {
        let irm = t.param(s, d.irm);
        let (f, sc) = (self.cfg.factor, self.cfg.scaling);
        let dl = estimate_delta(t, s, &d.delta_luma, f0)?;
        let luma = qam_irm_apply(t, s, dl, &priors.luma, &d.qam_luma, irm, f, sc)?;
        let dc = estimate_delta(t, s, &d.delta_chroma, f0)?;
        let mut planes = vec![luma];
        for k in 0..2 {
            let dk = t.slice_channels(dc, 64 * k, 64)?;
            planes.push(qam_irm_apply(t, s, dk, &priors.chroma, &d.qam_chroma, irm, f, sc)?);
        }
        t.concat_channels(&planes)
    }
}
