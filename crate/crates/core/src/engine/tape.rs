//! Reverse-mode differentiation over a flat, single-use operation tape.
//!
//! Every op appends one node holding its value and enough saved state to
//! replay its adjoint. [`Tape::backward`] consumes the tape, walks nodes in
//! reverse order, and returns the adjoints of all leaves.

use std::collections::HashMap;

use super::attention::{self, AttentionSpan, AttnGeom, AttnSaved};
use super::conv::{self, ConvGeom, Padding};
use super::gemm::{gemm, Mat};
use super::params::{ParamId, ParamStore};
use super::spatial::{self, LayerNormSaved};
use super::tensor::{dims4, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Default ceiling on tokens per attention window.
pub const DEFAULT_MAX_TOKENS: usize = 4096;

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f64 },
    Tanh(Var),
    Sqrt(Var),
    MulChannels { x: Var, v: Var },
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Concat { inputs: Vec<Var>, widths: Vec<usize> },
    Slice { x: Var, start: usize },
    Conv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    DepthToSpace { x: Var, r: usize },
    SpaceToDepth { x: Var, r: usize },
    AvgPool2(Var),
    BoxFilter3(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, saved: LayerNormSaved },
    Attention { x: Var, wq: Var, wk: Var, wv: Var, geom: AttnGeom, saved: AttnSaved },
    Matmul { a: Var, b: Var, m: usize, k: usize, n: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Operation record for one forward pass.
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    max_tokens: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), params: HashMap::new(), max_tokens: DEFAULT_MAX_TOKENS }
    }

    pub fn with_token_limit(max_tokens: usize) -> Self {
        Tape { max_tokens, ..Self::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        debug_assert!(value.grad().is_none());
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        let needs = inputs.iter().any(|&v| self.needs(v));
        let value = Tensor::new(shape, data).expect("op produced inconsistent shape");
        self.push(value, op, needs)
    }

    /// Records a leaf; it is differentiated iff `t.requires_grad()`.
    pub fn leaf(&mut self, mut t: Tensor) -> Var {
        let needs = t.requires_grad();
        t.zero_grad();
        t.set_requires_grad(false);
        self.push(t, Op::Leaf, needs)
    }

    /// Records a value that never receives gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let mut t = t;
        t.set_requires_grad(false);
        t.zero_grad();
        self.push(t, Op::Leaf, false)
    }

    /// Records parameter `id`, once per tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.get(id);
        let needs = p.requires_grad();
        let value = Tensor::new(p.shape().to_vec(), p.data().to_vec()).expect("param shape");
        let v = self.push(value, Op::Leaf, needs);
        self.params.insert(id, v);
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, format!("operands differ: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> (Vec<usize>, Vec<f64>) {
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        (self.shape(a).to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (s, d) = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push_op(s, d, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let (s, d) = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push_op(s, d, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (s, d) = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push_op(s, d, Op::Mul(a, b), &[a, b]))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let d = self.data(x).iter().map(|v| scale * v + shift).collect();
        let s = self.shape(x).to_vec();
        self.push_op(s, d, Op::Affine { x, scale }, &[x])
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.affine(x, k, 0.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let d = self.data(x).iter().map(|v| v.tanh()).collect();
        let s = self.shape(x).to_vec();
        self.push_op(s, d, Op::Tanh(x), &[x])
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.data(x).iter().find(|v| **v < 0.0) {
            return Err(Error::Domain(format!("sqrt of negative value {bad}")));
        }
        let d = self.data(x).iter().map(|v| v.sqrt()).collect();
        let s = self.shape(x).to_vec();
        Ok(self.push_op(s, d, Op::Sqrt(x), &[x]))
    }

    /// Scales channel `c` of a `[B, C, H, W]` map by `v[c]`.
    pub fn mul_channels(&mut self, x: Var, v: Var) -> Result<Var> {
        let [b, c, h, w] = dims4(self.shape(x), "mul_channels")?;
        if self.shape(v) != [c] {
            return Err(Error::shape(
                "mul_channels",
                format!("scale vector {:?} does not match channel axis {c}", self.shape(v)),
            ));
        }
        let (xd, vd) = (self.data(x), self.data(v));
        let hw = h * w;
        let mut d = vec![0.0; xd.len()];
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * hw;
                for i in off..off + hw {
                    d[i] = xd[i] * vd[ci];
                }
            }
        }
        let s = self.shape(x).to_vec();
        Ok(self.push_op(s, d, Op::MulChannels { x, v }, &[x, v]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.data(x).iter().sum();
        self.push_op(vec![], vec![s], Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.data(x).len() as f64;
        let s: f64 = self.data(x).iter().sum::<f64>() / n;
        self.push_op(vec![], vec![s], Op::Mean(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.data(x).len() {
            return Err(Error::shape("reshape", format!("cannot view {:?} as {:?}", self.shape(x), shape)));
        }
        let d = self.data(x).to_vec();
        Ok(self.push_op(shape.to_vec(), d, Op::Reshape(x), &[x]))
    }

    /// Concatenates `[B, C_i, H, W]` maps along the channel axis.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let [b, _, h, w] = dims4(self.shape(first), "concat")?;
        let mut widths = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let [bb, c, hh, ww] = dims4(self.shape(v), "concat")?;
            if (bb, hh, ww) != (b, h, w) {
                return Err(Error::shape(
                    "concat",
                    format!("batch/height/width mismatch: {:?} vs {:?}", self.shape(first), self.shape(v)),
                ));
            }
            widths.push(c);
        }
        let ctot: usize = widths.iter().sum();
        let hw = h * w;
        let mut d = vec![0.0; b * ctot * hw];
        for bi in 0..b {
            let mut c0 = 0;
            for (&v, &c) in inputs.iter().zip(&widths) {
                let src = &self.data(v)[bi * c * hw..(bi + 1) * c * hw];
                d[(bi * ctot + c0) * hw..(bi * ctot + c0 + c) * hw].copy_from_slice(src);
                c0 += c;
            }
        }
        Ok(self.push_op(vec![b, ctot, h, w], d, Op::Concat { inputs: inputs.to_vec(), widths }, inputs))
    }

    /// Channels `start..start+len` of a `[B, C, H, W]` map.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let [b, c, h, w] = dims4(self.shape(x), "slice")?;
        if start + len > c || len == 0 {
            return Err(Error::shape("slice", format!("channel range {start}..{} outside axis of {c}", start + len)));
        }
        let hw = h * w;
        let mut d = Vec::with_capacity(b * len * hw);
        for bi in 0..b {
            d.extend_from_slice(&self.data(x)[(bi * c + start) * hw..(bi * c + start + len) * hw]);
        }
        Ok(self.push_op(vec![b, len, h, w], d, Op::Slice { x, start }, &[x]))
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: Padding,
        groups: usize,
    ) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(x), self.shape(w), stride, padding, groups)?;
        if let Some(b) = b {
            if self.shape(b) != [geom.out_channels] {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias {:?} does not match {} output channels", self.shape(b), geom.out_channels),
                ));
            }
        }
        let out = conv::conv2d_forward(&geom, self.data(x), self.data(w), b.map(|b| self.data(b)));
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push_op(geom.out_shape(), out, Op::Conv { x, w, b, geom }, &inputs))
    }

    pub fn depth_to_space(&mut self, x: Var, r: usize) -> Result<Var> {
        let [b, c, h, w] = dims4(self.shape(x), "depth_to_space")?;
        if r == 0 || c % (r * r) != 0 {
            return Err(Error::Config(format!("depth_to_space: {c} channels not divisible by r^2 = {}", r * r)));
        }
        let d = spatial::depth_to_space(self.data(x), [b, c, h, w], r);
        Ok(self.push_op(vec![b, c / (r * r), h * r, w * r], d, Op::DepthToSpace { x, r }, &[x]))
    }

    pub fn space_to_depth(&mut self, x: Var, r: usize) -> Result<Var> {
        let [b, c, h, w] = dims4(self.shape(x), "space_to_depth")?;
        if r == 0 || h % r != 0 || w % r != 0 {
            return Err(Error::shape("space_to_depth", format!("height {h} and width {w} must be divisible by {r}")));
        }
        let d = spatial::space_to_depth(self.data(x), [b, c, h, w], r);
        Ok(self.push_op(vec![b, c * r * r, h / r, w / r], d, Op::SpaceToDepth { x, r }, &[x]))
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let [b, c, h, w] = dims4(self.shape(x), "avg_pool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape("avg_pool2", format!("height {h} and width {w} must be even")));
        }
        let d = spatial::avg_pool2(self.data(x), [b, c, h, w]);
        Ok(self.push_op(vec![b, c, h / 2, w / 2], d, Op::AvgPool2(x), &[x]))
    }

    pub fn box_filter3(&mut self, x: Var) -> Result<Var> {
        let dims = dims4(self.shape(x), "box_filter3")?;
        if dims[2] < 2 || dims[3] < 2 {
            return Err(Error::shape(
                "box_filter3",
                format!("height and width must be >= 2, got {}x{}", dims[2], dims[3]),
            ));
        }
        let d = spatial::box_filter3(self.data(x), dims);
        Ok(self.push_op(dims.to_vec(), d, Op::BoxFilter3(x), &[x]))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let dims = dims4(self.shape(x), "layer_norm")?;
        let c = dims[1];
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape(
                "layer_norm",
                format!("gamma {:?} / beta {:?} must match channel axis {c}", self.shape(gamma), self.shape(beta)),
            ));
        }
        let (d, saved) = spatial::layer_norm(self.data(x), dims, self.data(gamma), self.data(beta), eps);
        Ok(self.push_op(dims.to_vec(), d, Op::LayerNorm { x, gamma, beta, saved }, &[x, gamma, beta]))
    }

    /// `softmax(Q Kᵀ / sqrt(C)) V` with `Q = X Wq` etc. over spatial tokens.
    pub fn self_attention(&mut self, x: Var, wq: Var, wk: Var, wv: Var, span: AttentionSpan) -> Result<Var> {
        let [b, c, h, w] = dims4(self.shape(x), "self_attention")?;
        for (name, m) in [("Wq", wq), ("Wk", wk), ("Wv", wv)] {
            if self.shape(m) != [c, c] {
                return Err(Error::shape(
                    "self_attention",
                    format!("{name} is {:?}, expected [{c}, {c}]", self.shape(m)),
                ));
            }
        }
        let (win_h, win_w) = match span {
            AttentionSpan::Global => (h, w),
            AttentionSpan::Window(n) => {
                if n == 0 || h % n != 0 || w % n != 0 {
                    return Err(Error::shape(
                        "self_attention",
                        format!("{h}x{w} map cannot be tiled by {n}x{n} windows"),
                    ));
                }
                (n, n)
            }
        };
        let tokens = win_h * win_w;
        if tokens > self.max_tokens {
            return Err(Error::Resource(format!(
                "self_attention over {tokens} tokens exceeds the limit of {}; tile the map into windows",
                self.max_tokens
            )));
        }
        let geom = AttnGeom { b, c, h, w, win_h, win_w };
        let (d, saved) = attention::forward(&geom, self.data(x), self.data(wq), self.data(wk), self.data(wv));
        Ok(self.push_op(vec![b, c, h, w], d, Op::Attention { x, wq, wk, wv, geom, saved }, &[x, wq, wk, wv]))
    }

    /// Attention matrices recorded by an attention node.
    pub fn attention_probabilities(&self, v: Var) -> Option<&[Vec<f64>]> {
        match &self.nodes[v.0].op {
            Op::Attention { saved, .. } => Some(saved.probabilities()),
            _ => None,
        }
    }

    /// 2-D matrix product `[M, K] x [K, N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k, n) = match (self.shape(a), self.shape(b)) {
            (&[m, k], &[k2, n]) if k == k2 => (m, k, n),
            (sa, sb) => return Err(Error::shape("matmul", format!("cannot multiply {sa:?} by {sb:?}"))),
        };
        let mut d = vec![0.0; m * n];
        gemm(Mat::new(self.data(a), m, k), Mat::new(self.data(b), k, n), &mut d, 0.0);
        Ok(self.push_op(vec![m, n], d, Op::Matmul { a, b, m, k, n }, &[a, b]))
    }

    /// `x * sigmoid(x)`, written as `x * (1 + tanh(x/2)) / 2`.
    pub fn silu(&mut self, x: Var) -> Result<Var> {
        let t = self.affine(x, 0.5, 0.0);
        let t = self.tanh(t);
        let gate = self.affine(t, 0.5, 0.5);
        self.mul(x, gate)
    }

    /// Runs the reverse pass from scalar `loss` and frees the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).shape().is_empty() && self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss))));
        }
        let Tape { nodes, params, .. } = self;
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        grads[loss.0] = Some(vec![1.0]);

        let mut nodes = nodes;
        for i in (0..=loss.0).rev() {
            if !nodes[i].needs_grad {
                continue;
            }
            if matches!(nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &nodes[i];
            backprop(&nodes, node, &g, &mut grads);
            // values of interior nodes are no longer needed
            nodes[i].value = Tensor::scalar(0.0);
        }

        let mut leaves = HashMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.needs_grad {
                let g = grads[i].take().unwrap_or_else(|| vec![0.0; node.value.numel()]);
                leaves.insert(i, g);
            }
        }
        Ok(Gradients { leaves, params })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(buf) => buf.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

fn accumulate_with(grads: &mut [Option<Vec<f64>>], v: Var, n: usize, f: impl Fn(usize) -> f64) {
    match &mut grads[v.0] {
        Some(buf) => buf.iter_mut().enumerate().for_each(|(i, a)| *a += f(i)),
        slot @ None => *slot = Some((0..n).map(f).collect()),
    }
}

fn backprop(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let needs = |v: Var| nodes[v.0].needs_grad;
    let val = |v: Var| nodes[v.0].value.data();
    let n = g.len();
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if needs(*a) {
                accumulate(grads, *a, g.to_vec());
            }
            if needs(*b) {
                accumulate(grads, *b, g.to_vec());
            }
        }
        Op::Sub(a, b) => {
            if needs(*a) {
                accumulate(grads, *a, g.to_vec());
            }
            if needs(*b) {
                accumulate_with(grads, *b, n, |i| -g[i]);
            }
        }
        Op::Mul(a, b) => {
            if needs(*a) {
                let bv = val(*b);
                accumulate_with(grads, *a, n, |i| g[i] * bv[i]);
            }
            if needs(*b) {
                let av = val(*a);
                accumulate_with(grads, *b, n, |i| g[i] * av[i]);
            }
        }
        Op::Affine { x, scale } => accumulate_with(grads, *x, n, |i| g[i] * scale),
        Op::Tanh(x) => {
            let y = node.value.data();
            accumulate_with(grads, *x, n, |i| g[i] * (1.0 - y[i] * y[i]));
        }
        Op::Sqrt(x) => {
            let y = node.value.data();
            accumulate_with(grads, *x, n, |i| if y[i] > 0.0 { g[i] * 0.5 / y[i] } else { 0.0 });
        }
        Op::MulChannels { x, v } => {
            let [b, c, h, w] = dims4(nodes[x.0].value.shape(), "mul_channels").unwrap();
            let hw = h * w;
            if needs(*x) {
                let vd = val(*v);
                accumulate_with(grads, *x, n, |i| g[i] * vd[(i / hw) % c]);
            }
            if needs(*v) {
                let xd = val(*x);
                let mut dv = vec![0.0; c];
                for bi in 0..b {
                    for (ci, acc) in dv.iter_mut().enumerate() {
                        let off = (bi * c + ci) * hw;
                        *acc += (off..off + hw).map(|i| g[i] * xd[i]).sum::<f64>();
                    }
                }
                accumulate(grads, *v, dv);
            }
        }
        Op::Sum(x) => {
            let m = nodes[x.0].value.numel();
            accumulate_with(grads, *x, m, |_| g[0]);
        }
        Op::Mean(x) => {
            let m = nodes[x.0].value.numel();
            let s = g[0] / m as f64;
            accumulate_with(grads, *x, m, |_| s);
        }
        Op::Reshape(x) => accumulate(grads, *x, g.to_vec()),
        Op::Concat { inputs, widths } => {
            let [b, ctot, h, w] = dims4(node.value.shape(), "concat").unwrap();
            let hw = h * w;
            let mut c0 = 0;
            for (&v, &c) in inputs.iter().zip(widths) {
                if needs(v) {
                    let mut part = Vec::with_capacity(b * c * hw);
                    for bi in 0..b {
                        part.extend_from_slice(&g[(bi * ctot + c0) * hw..(bi * ctot + c0 + c) * hw]);
                    }
                    accumulate(grads, v, part);
                }
                c0 += c;
            }
        }
        Op::Slice { x, start } => {
            let [b, c, h, w] = dims4(nodes[x.0].value.shape(), "slice").unwrap();
            let len = node.value.shape()[1];
            let hw = h * w;
            let mut full = vec![0.0; b * c * hw];
            for bi in 0..b {
                full[(bi * c + start) * hw..(bi * c + start + len) * hw]
                    .copy_from_slice(&g[bi * len * hw..(bi + 1) * len * hw]);
            }
            accumulate(grads, *x, full);
        }
        Op::Conv { x, w, b, geom } => {
            let want = (needs(*x), needs(*w), b.map(needs).unwrap_or(false));
            let cg = conv::conv2d_backward(geom, val(*x), val(*w), g, want);
            if let Some(dx) = cg.dx {
                accumulate(grads, *x, dx);
            }
            if let Some(dw) = cg.dw {
                accumulate(grads, *w, dw);
            }
            if let (Some(b), Some(db)) = (b, cg.db) {
                accumulate(grads, *b, db);
            }
        }
        Op::DepthToSpace { x, r } => {
            let d = dims4(node.value.shape(), "depth_to_space").unwrap();
            accumulate(grads, *x, spatial::space_to_depth(g, d, *r));
        }
        Op::SpaceToDepth { x, r } => {
            let d = dims4(node.value.shape(), "space_to_depth").unwrap();
            accumulate(grads, *x, spatial::depth_to_space(g, d, *r));
        }
        Op::AvgPool2(x) => {
            let d = dims4(nodes[x.0].value.shape(), "avg_pool2").unwrap();
            accumulate(grads, *x, spatial::avg_pool2_backward(g, d));
        }
        Op::BoxFilter3(x) => {
            let d = dims4(nodes[x.0].value.shape(), "box_filter3").unwrap();
            accumulate(grads, *x, spatial::box_filter3_backward(g, d));
        }
        Op::LayerNorm { x, gamma, beta, saved } => {
            let d = dims4(node.value.shape(), "layer_norm").unwrap();
            let (dx, dg, db) = spatial::layer_norm_backward(g, d, val(*gamma), saved);
            if needs(*x) {
                accumulate(grads, *x, dx);
            }
            if needs(*gamma) {
                accumulate(grads, *gamma, dg);
            }
            if needs(*beta) {
                accumulate(grads, *beta, db);
            }
        }
        Op::Attention { x, wq, wk, wv, geom, saved } => {
            let ag = attention::backward(geom, g, val(*wq), val(*wk), val(*wv), saved);
            for (v, d) in [(*x, ag.dx), (*wq, ag.dwq), (*wk, ag.dwk), (*wv, ag.dwv)] {
                if needs(v) {
                    accumulate(grads, v, d);
                }
            }
        }
        Op::Matmul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            if needs(*a) {
                let mut da = vec![0.0; m * k];
                gemm(Mat::new(g, m, n), Mat::new(val(*b), k, n).t(), &mut da, 0.0);
                accumulate(grads, *a, da);
            }
            if needs(*b) {
                let mut db = vec![0.0; k * n];
                gemm(Mat::new(val(*a), m, k).t(), Mat::new(g, m, n), &mut db, 0.0);
                accumulate(grads, *b, db);
            }
        }
    }
}

/// Adjoints of every gradient-tracked leaf of a consumed tape.
pub struct Gradients {
    leaves: HashMap<usize, Vec<f64>>,
    params: HashMap<ParamId, Var>,
}

impl Gradients {
    /// Gradient of the loss with respect to leaf `v`.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.leaves.get(&v.0).map(Vec::as_slice)
    }

    /// Adds every parameter gradient into the store's grad buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        let mut ids: Vec<_> = self.params.iter().collect();
        ids.sort_by_key(|(id, _)| **id);
        for (&id, &v) in ids {
            if let Some(g) = self.leaves.get(&v.0) {
                store.get_mut(id).accumulate_grad(g);
            }
        }
    }
}
