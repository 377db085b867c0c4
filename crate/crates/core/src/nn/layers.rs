//! Parameterized building blocks shared by the network modules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{AttentionSpan, Padding, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Weight initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Uniform in `±sqrt(3 / fan_in)`, unit-variance preserving.
    FanIn,
    /// Fan-in uniform kernel shared by each group of `r²` consecutive output
    /// channels, so a following pixel shuffle starts as nearest upsampling.
    Icnr(usize),
    Zero,
}

/// Registers named parameters, drawing initial values from one seeded stream.
pub struct ParamBuilder<'a> {
    pub store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        ParamBuilder { store, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn weight(&mut self, name: String, shape: Vec<usize>, fan_in: usize, init: Init) -> ParamId {
        let t = match init {
            Init::Zero => Tensor::zeros(shape),
            Init::FanIn => {
                let a = (3.0 / fan_in as f64).sqrt();
                let rng = &mut self.rng;
                Tensor::from_fn(shape, |_| rng.gen_range(-a..a))
            }
            Init::Icnr(r) => {
                let a = (3.0 / fan_in as f64).sqrt();
                let group = r * r;
                let per_out: usize = shape[1..].iter().product();
                let base: Vec<f64> = (0..shape[0] / group * per_out).map(|_| self.rng.gen_range(-a..a)).collect();
                Tensor::from_fn(shape, |i| base[(i / per_out / group) * per_out + i % per_out])
            }
        };
        self.store.add(name, t)
    }

    pub fn filled(&mut self, name: String, shape: Vec<usize>, value: f64) -> ParamId {
        self.store.add(name, Tensor::full(shape, value))
    }

    pub fn frozen(&mut self, name: String, t: Tensor) -> ParamId {
        self.store.add_frozen(name, t)
    }
}

/// 2-D convolution with bias. 3x3 kernels use mirror padding, 1x1 none.
#[derive(Clone, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub groups: usize,
    pub padding: Padding,
}

impl Conv {
    pub fn new(pb: &mut ParamBuilder, name: &str, cin: usize, cout: usize, k: usize, init: Init) -> Conv {
        Conv::grouped(pb, name, cin, cout, k, 1, 1, init)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn grouped(
        pb: &mut ParamBuilder,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        groups: usize,
        init: Init,
    ) -> Conv {
        let cin_g = cin / groups;
        let w = pb.weight(format!("{name}.weight"), vec![cout, cin_g, k, k], cin_g * k * k, init);
        let b = pb.filled(format!("{name}.bias"), vec![cout], 0.0);
        let padding = if k > 1 { Padding::Reflect(k / 2) } else { Padding::Zero(0) };
        Conv { w, b, stride, groups, padding }
    }

    pub fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var) -> Result<Var> {
        let (w, b) = (t.param(s, self.w), t.param(s, self.b));
        t.conv2d(x, w, Some(b), self.stride, self.padding, self.groups)
    }
}

/// Channel normalization at every spatial position.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(pb: &mut ParamBuilder, name: &str, c: usize) -> Self {
        LayerNorm {
            gamma: pb.filled(format!("{name}.gamma"), vec![c], 1.0),
            beta: pb.filled(format!("{name}.beta"), vec![c], 0.0),
        }
    }

    pub fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var) -> Result<Var> {
        let (g, b) = (t.param(s, self.gamma), t.param(s, self.beta));
        t.layer_norm(x, g, b, Self::EPS)
    }
}

/// Single-head self-attention projections, without output projection.
#[derive(Clone, Debug)]
pub struct Attention {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub span: AttentionSpan,
}

impl Attention {
    pub fn new(pb: &mut ParamBuilder, name: &str, c: usize, span: AttentionSpan) -> Self {
        Attention {
            wq: pb.weight(format!("{name}.wq"), vec![c, c], c, Init::FanIn),
            wk: pb.weight(format!("{name}.wk"), vec![c, c], c, Init::FanIn),
            wv: pb.weight(format!("{name}.wv"), vec![c, c], c, Init::FanIn),
            span,
        }
    }

    pub fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var) -> Result<Var> {
        let (q, k, v) = (t.param(s, self.wq), t.param(s, self.wk), t.param(s, self.wv));
        t.self_attention(x, q, k, v, self.span)
    }
}

/// Pre-norm transformer block: `x + Wo·SA(LN(x))`, then `+ MLP(LN(·))` with a 2x hidden width.
#[derive(Clone, Debug)]
pub struct TfBlock {
    pub norm1: LayerNorm,
    pub attn: Attention,
    pub wo: Conv,
    pub norm2: LayerNorm,
    pub fc1: Conv,
    pub fc2: Conv,
}

impl TfBlock {
    pub fn new(pb: &mut ParamBuilder, name: &str, c: usize, span: AttentionSpan) -> Self {
        TfBlock {
            norm1: LayerNorm::new(pb, &format!("{name}.norm1"), c),
            attn: Attention::new(pb, &format!("{name}.attn"), c, span),
            wo: Conv::new(pb, &format!("{name}.wo"), c, c, 1, Init::Zero),
            norm2: LayerNorm::new(pb, &format!("{name}.norm2"), c),
            fc1: Conv::new(pb, &format!("{name}.fc1"), c, 2 * c, 1, Init::FanIn),
            fc2: Conv::new(pb, &format!("{name}.fc2"), 2 * c, c, 1, Init::Zero),
        }
    }

    pub fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var) -> Result<Var> {
        let h = self.norm1.forward(t, s, x)?;
        let h = self.attn.forward(t, s, h)?;
        let h = self.wo.forward(t, s, h)?;
        let x = t.add(x, h)?;
        let h = self.norm2.forward(t, s, x)?;
        let h = self.fc1.forward(t, s, h)?;
        let h = t.silu(h)?;
        let h = self.fc2.forward(t, s, h)?;
        t.add(x, h)
    }
}

pub fn tf_stack(pb: &mut ParamBuilder, name: &str, n: usize, c: usize, span: AttentionSpan) -> Vec<TfBlock> {
    (0..n).map(|i| TfBlock::new(pb, &format!("{name}.{i}"), c, span)).collect()
}

pub fn run_stack(blocks: &[TfBlock], t: &mut Tape, s: &ParamStore, mut x: Var) -> Result<Var> {
    for b in blocks {
        x = b.forward(t, s, x)?;
    }
    Ok(x)
}

/// Nearest-neighbour x2 upsampling via a fixed replication matrix and pixel shuffle.
pub fn upsample_nearest2(t: &mut Tape, x: Var) -> Result<Var> {
    let c = t.shape(x)[1];
    let mut w = Tensor::zeros(vec![4 * c, c, 1, 1]);
    for ci in 0..c {
        for k in 0..4 {
            w.data_mut()[(ci * 4 + k) * c + ci] = 1.0;
        }
    }
    let w = t.constant(w);
    let r = t.conv2d(x, w, None, 1, Padding::Zero(0), 1)?;
    t.depth_to_space(r, 2)
}
