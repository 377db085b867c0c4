//! The full multi-scale restoration network.
//!
//! ```text
//! frames ─ temporal fuse ─ f0 ─ stride 2 ─ f1 ─ stride 2 ─ f2
//! f2 ─ up x2 ─ HIR ─ + skip(f1) ─ up x2 ─ HIR ─ + skip(f0) ─ up x1 ─ HIR ─ conv ─ + center frame
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::hir::{Hir, HirConfig};
use super::impfrequp::{ImpFreqUp, ImpFreqUpConfig, Priors, TableScaling, Upsampler};
use super::layers::{Conv, Init, ParamBuilder};
use crate::codec::{Frame, Layout, Plane};
use crate::dct::{make_quant_prior, ChannelKind, TableSource};
use crate::engine::{AttentionSpan, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Spatial dims seen by the network must be multiples of this.
pub const SPATIAL_MULTIPLE: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub channels: usize,
    pub n1: usize,
    pub n2: usize,
    /// Width of each HIR stream; must equal `channels / 2` when set.
    pub hir_branch_channels: Option<usize>,
    pub hir_iterations: usize,
    /// Odd number of input frames centred on the frame being restored.
    pub temporal_window: usize,
    /// 1 for luma-only, 3 for full-resolution Y, Cb, Cr.
    pub planes: usize,
    /// Side of the square attention windows in transformer blocks and detail refinement.
    pub attention_window: usize,
    pub max_tokens: usize,
    pub upsampler: Upsampler,
    pub use_hir: bool,
    pub table_scaling: TableScaling,
    pub prior_qp: i32,
    pub luma_table: Option<PathBuf>,
    pub chroma_table: Option<PathBuf>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            channels: 64,
            n1: 4,
            n2: 4,
            hir_branch_channels: None,
            hir_iterations: 2,
            temporal_window: 5,
            planes: 1,
            attention_window: 8,
            max_tokens: crate::engine::DEFAULT_MAX_TOKENS,
            upsampler: Upsampler::ImpFreqUp,
            use_hir: true,
            table_scaling: TableScaling::AfterIdct,
            prior_qp: 37,
            luma_table: None,
            chroma_table: None,
        }
    }
}

impl NetworkConfig {
    /// Full-size configuration.
    pub fn paper() -> Self {
        Self::default()
    }

    /// Small configuration for tests and desk-scale training.
    pub fn test_profile() -> Self {
        NetworkConfig { channels: 16, n1: 1, n2: 1, temporal_window: 3, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels;
        if c == 0 || c % 2 != 0 {
            return Err(Error::Config(format!("channels must be even and positive, got {c}")));
        }
        if let Some(cb) = self.hir_branch_channels {
            if cb * 2 != c {
                return Err(Error::Config(format!("hir_branch_channels must be channels/2 = {}, got {cb}", c / 2)));
            }
        }
        if self.n1 == 0 || self.n2 == 0 || self.hir_iterations == 0 {
            return Err(Error::Config("n1, n2 and hir_iterations must be at least 1".into()));
        }
        if self.temporal_window % 2 == 0 {
            return Err(Error::Config(format!("temporal_window must be odd, got {}", self.temporal_window)));
        }
        if self.planes != 1 && self.planes != 3 {
            return Err(Error::Config(format!("planes must be 1 or 3, got {}", self.planes)));
        }
        if self.attention_window == 0 || 8 % self.attention_window != 0 {
            return Err(Error::Config(format!("attention_window must divide 8, got {}", self.attention_window)));
        }
        Ok(())
    }

    pub fn priors(&self) -> Result<Priors> {
        let src = |p: &Option<PathBuf>| p.clone().map(TableSource::File).unwrap_or(TableSource::Flat);
        Ok(Priors {
            luma: make_quant_prior(self.prior_qp, ChannelKind::Luma, &src(&self.luma_table))?,
            chroma: make_quant_prior(self.prior_qp, ChannelKind::Chroma, &src(&self.chroma_table))?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Stage {
    pub up: ImpFreqUp,
    pub hir: Option<Hir>,
}

impl Stage {
    fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var, priors: &Priors) -> Result<Var> {
        let y = self.up.forward(t, s, x, priors)?;
        match &self.hir {
            Some(h) => h.forward(t, s, y),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    pub cfg: NetworkConfig,
    pub priors: Priors,
    pub fuse1: Conv,
    pub fuse2: Conv,
    pub enc1: Conv,
    pub enc2: Conv,
    pub skip1: Conv,
    pub skip0: Conv,
    /// Coarse to fine: x2 at H/4, x2 at H/2, x1 at H.
    pub stages: [Stage; 3],
    pub out: Conv,
}

/// Builds the network and its freshly initialized parameters.
pub fn init_params(cfg: &NetworkConfig, seed: u64) -> Result<(Network, ParamStore)> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut pb = ParamBuilder::new(&mut store, seed);
    let c = cfg.channels;
    let tp = cfg.temporal_window * cfg.planes;
    let span = AttentionSpan::Window(cfg.attention_window);
    let stage = |pb: &mut ParamBuilder, name: &str, factor: usize| -> Result<Stage> {
        let up = ImpFreqUp::new(
            pb,
            &format!("{name}.up"),
            ImpFreqUpConfig {
                channels: c,
                n1: cfg.n1,
                n2: cfg.n2,
                factor,
                span,
                upsampler: cfg.upsampler,
                scaling: cfg.table_scaling,
            },
        )?;
        let hir = if cfg.use_hir {
            let hc = HirConfig { channels: c, iterations: cfg.hir_iterations, detail_span: span };
            Some(Hir::new(pb, &format!("{name}.hir"), hc)?)
        } else {
            None
        };
        Ok(Stage { up, hir })
    };
    let net = Network {
        cfg: cfg.clone(),
        priors: cfg.priors()?,
        fuse1: Conv::new(&mut pb, "fuse1", tp, c, 3, Init::FanIn),
        fuse2: Conv::new(&mut pb, "fuse2", c, c, 3, Init::FanIn),
        enc1: Conv::grouped(&mut pb, "enc1", c, c, 3, 2, 1, Init::FanIn),
        enc2: Conv::grouped(&mut pb, "enc2", c, c, 3, 2, 1, Init::FanIn),
        skip1: Conv::new(&mut pb, "skip1", c, c, 3, Init::FanIn),
        skip0: Conv::new(&mut pb, "skip0", c, c, 3, Init::FanIn),
        stages: [stage(&mut pb, "scale2", 2)?, stage(&mut pb, "scale1", 2)?, stage(&mut pb, "scale0", 1)?],
        out: Conv::new(&mut pb, "out", c, cfg.planes, 3, Init::Zero),
    };
    Ok((net, store))
}

impl Network {
    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let (t, p) = (self.cfg.temporal_window, self.cfg.planes);
        match *shape {
            [_, tt, pp, h, w] => {
                if tt != t || pp != p {
                    return Err(Error::Config(format!("network expects {t} frames of {p} planes, got {tt} of {pp}")));
                }
                if h % SPATIAL_MULTIPLE != 0 || w % SPATIAL_MULTIPLE != 0 || h == 0 || w == 0 {
                    return Err(Error::Contract(format!(
                        "input is {h}x{w}; pad frames to a multiple of {SPATIAL_MULTIPLE}"
                    )));
                }
                Ok(())
            }
            _ => Err(Error::shape("network", format!("expected [B,T,P,H,W], got {shape:?}"))),
        }
    }

    /// `[B, T, P, H, W]` frames to `[B, C, H, W]` features.
    pub fn temporal_fuse(&self, t: &mut Tape, s: &ParamStore, frames: Var) -> Result<Var> {
        self.check_input(t.shape(frames))?;
        let sh = t.shape(frames).to_vec();
        let x = t.reshape(frames, &[sh[0], sh[1] * sh[2], sh[3], sh[4]])?;
        let h = self.fuse1.forward(t, s, x)?;
        let h = t.silu(h)?;
        let h = self.fuse2.forward(t, s, h)?;
        t.silu(h)
    }

    /// Restored centre frame `[B, P, H, W]`, not clamped.
    pub fn forward(&self, t: &mut Tape, s: &ParamStore, frames: Var) -> Result<Var> {
        let f0 = self.temporal_fuse(t, s, frames)?;
        let sh = t.shape(frames).to_vec();
        let p = self.cfg.planes;
        let flat = t.reshape(frames, &[sh[0], sh[1] * p, sh[3], sh[4]])?;
        let center = t.slice_channels(flat, (sh[1] / 2) * p, p)?;

        let f1 = self.enc1.forward(t, s, f0)?;
        let f1 = t.silu(f1)?;
        let f2 = self.enc2.forward(t, s, f1)?;
        let f2 = t.silu(f2)?;

        let h = self.stages[0].forward(t, s, f2, &self.priors)?;
        let k = self.skip1.forward(t, s, f1)?;
        let h = t.add(h, k)?;
        let h = self.stages[1].forward(t, s, h, &self.priors)?;
        let k = self.skip0.forward(t, s, f0)?;
        let h = t.add(h, k)?;
        let h = self.stages[2].forward(t, s, h, &self.priors)?;
        let r = self.out.forward(t, s, h)?;
        t.add(center, r)
    }

    pub fn tape(&self) -> Tape {
        Tape::with_token_limit(self.cfg.max_tokens)
    }
}

/// `mean(sqrt((pred - target)² + eps²))`.
pub fn charbonnier_loss(t: &mut Tape, pred: Var, target: Var, eps: f64) -> Result<Var> {
    let d = t.sub(pred, target)?;
    let sq = t.mul(d, d)?;
    let sq = t.affine(sq, 1.0, eps * eps);
    let r = t.sqrt(sq)?;
    Ok(t.mean(r))
}

/// Planes of a frame as `[P, H, W]` samples.
pub fn frame_planes(f: &Frame, planes: usize) -> Result<Vec<f64>> {
    match (f.layout, planes) {
        (Layout::Mono, 1) | (Layout::Yuv444, 3) => Ok(f.planes.iter().flat_map(|p| p.data.iter().copied()).collect()),
        (Layout::Yuv444, 1) => Ok(f.luma().data.clone()),
        (l, p) => Err(Error::Config(format!("a {p}-plane network cannot process {l:?} frames"))),
    }
}

/// Window of frame indices around `center`, repeating the clip ends.
pub fn window_indices(center: usize, window: usize, len: usize) -> Vec<usize> {
    let r = (window / 2) as isize;
    (-r..=r).map(|o| (center as isize + o).clamp(0, len as isize - 1) as usize).collect()
}

fn padded_len(n: usize) -> usize {
    n.div_ceil(SPATIAL_MULTIPLE) * SPATIAL_MULTIPLE
}

/// Restores every frame of a degraded clip; outputs are clamped to [0, 1].
pub fn enhance_frames(net: &Network, store: &ParamStore, frames: &[Frame]) -> Result<Vec<Frame>> {
    let cfg = &net.cfg;
    let Some(first) = frames.first() else { return Ok(Vec::new()) };
    if frames.iter().any(|f| !f.same_geometry(first)) {
        return Err(Error::Contract("all frames of a clip must share one geometry".into()));
    }
    let (w, h, p) = (first.width, first.height, cfg.planes);
    let (pw, ph) = (padded_len(w), padded_len(h));
    if pw > 2 * w || ph > 2 * h {
        return Err(Error::Contract(format!(
            "{w}x{h} frames are too small to pad to a multiple of {SPATIAL_MULTIPLE}"
        )));
    }
    let planes: Vec<Vec<f64>> = frames.iter().map(|f| frame_planes(f, p)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(frames.len());
    for c in 0..frames.len() {
        let mut data = Vec::with_capacity(cfg.temporal_window * p * pw * ph);
        for i in window_indices(c, cfg.temporal_window, frames.len()) {
            for pi in 0..p {
                let src = &planes[i][pi * w * h..(pi + 1) * w * h];
                for y in 0..ph {
                    let sy = mirror(y, h);
                    for x in 0..pw {
                        data.push(src[sy * w + mirror(x, w)]);
                    }
                }
            }
        }
        let mut t = net.tape();
        let x = t.constant(Tensor::new(vec![1, cfg.temporal_window, p, ph, pw], data)?);
        let y = net.forward(&mut t, store, x)?;
        let y = t.value(y).data();
        let restored: Vec<Plane> = (0..p)
            .map(|pi| {
                let d = (0..h)
                    .flat_map(|yy| (0..w).map(move |xx| (yy, xx)))
                    .map(|(yy, xx)| y[(pi * ph + yy) * pw + xx].clamp(0.0, 1.0))
                    .collect();
                Plane::new(w, h, d)
            })
            .collect::<Result<_>>()?;
        let mut f = frames[c].clone();
        for (dst, src) in f.planes.iter_mut().zip(restored) {
            *dst = src;
        }
        out.push(f);
    }
    Ok(out)
}

/// Half-sample symmetric index for `i < 2n`.
fn mirror(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else {
        2 * n - 1 - i
    }
}

/// Reflect-padding helper exposed for callers assembling their own batches.
pub fn padding_for(n: usize) -> usize {
    padded_len(n) - n
}
