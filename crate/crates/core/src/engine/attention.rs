//! Single-head scaled dot-product self-attention over spatial tokens.
//!
//! Tokens are the spatial positions of a `[B, C, H, W]` map. With a window
//! the map is tiled into non-overlapping `n x n` squares and attention runs
//! independently inside each square; otherwise all `H*W` tokens attend to
//! each other.

use super::gemm::{gemm, Mat};

/// Which tokens attend to each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionSpan {
    Global,
    Window(usize),
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct AttnGeom {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub win_h: usize,
    pub win_w: usize,
}

impl AttnGeom {
    pub fn tokens(&self) -> usize {
        self.win_h * self.win_w
    }

    fn windows_per_item(&self) -> usize {
        (self.h / self.win_h) * (self.w / self.win_w)
    }

    /// Flat spatial offsets of the tokens of window `k`.
    fn token_offsets(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let per_row = self.w / self.win_w;
        let (wy, wx) = (k / per_row, k % per_row);
        (0..self.win_h)
            .flat_map(move |i| (0..self.win_w).map(move |j| (wy * self.win_h + i) * self.w + wx * self.win_w + j))
    }
}

/// Buffers kept from the forward pass, one entry per (batch item, window).
pub(crate) struct AttnSaved {
    x: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
}

impl AttnSaved {
    /// Attention matrices, row-stochastic, `[tokens, tokens]` each.
    pub fn probabilities(&self) -> &[Vec<f64>] {
        &self.p
    }
}

fn gather(g: &AttnGeom, x: &[f64], bi: usize, k: usize) -> Vec<f64> {
    let hw = g.h * g.w;
    let t = g.tokens();
    let mut out = vec![0.0; t * g.c];
    for (ti, off) in g.token_offsets(k).enumerate() {
        for ci in 0..g.c {
            out[ti * g.c + ci] = x[(bi * g.c + ci) * hw + off];
        }
    }
    out
}

fn scatter_add(g: &AttnGeom, src: &[f64], bi: usize, k: usize, dst: &mut [f64]) {
    let hw = g.h * g.w;
    for (ti, off) in g.token_offsets(k).enumerate() {
        for ci in 0..g.c {
            dst[(bi * g.c + ci) * hw + off] += src[ti * g.c + ci];
        }
    }
}

fn softmax_rows(s: &mut [f64], t: usize) {
    for row in s.chunks_mut(t) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
}

pub(crate) fn forward(g: &AttnGeom, x: &[f64], wq: &[f64], wk: &[f64], wv: &[f64]) -> (Vec<f64>, AttnSaved) {
    let t = g.tokens();
    let c = g.c;
    let scale = 1.0 / (c as f64).sqrt();
    let mut out = vec![0.0; x.len()];
    let mut saved = AttnSaved { x: Vec::new(), q: Vec::new(), k: Vec::new(), v: Vec::new(), p: Vec::new() };
    for bi in 0..g.b {
        for win in 0..g.windows_per_item() {
            let xw = gather(g, x, bi, win);
            let mut q = vec![0.0; t * c];
            let mut k = vec![0.0; t * c];
            let mut v = vec![0.0; t * c];
            gemm(Mat::new(&xw, t, c), Mat::new(wq, c, c), &mut q, 0.0);
            gemm(Mat::new(&xw, t, c), Mat::new(wk, c, c), &mut k, 0.0);
            gemm(Mat::new(&xw, t, c), Mat::new(wv, c, c), &mut v, 0.0);
            let mut p = vec![0.0; t * t];
            gemm(Mat::new(&q, t, c), Mat::new(&k, t, c).t(), &mut p, 0.0);
            p.iter_mut().for_each(|s| *s *= scale);
            softmax_rows(&mut p, t);
            let mut o = vec![0.0; t * c];
            gemm(Mat::new(&p, t, t), Mat::new(&v, t, c), &mut o, 0.0);
            scatter_add(g, &o, bi, win, &mut out);
            saved.x.push(xw);
            saved.q.push(q);
            saved.k.push(k);
            saved.v.push(v);
            saved.p.push(p);
        }
    }
    (out, saved)
}

pub(crate) struct AttnGrads {
    pub dx: Vec<f64>,
    pub dwq: Vec<f64>,
    pub dwk: Vec<f64>,
    pub dwv: Vec<f64>,
}

pub(crate) fn backward(g: &AttnGeom, dy: &[f64], wq: &[f64], wk: &[f64], wv: &[f64], saved: &AttnSaved) -> AttnGrads {
    let t = g.tokens();
    let c = g.c;
    let scale = 1.0 / (c as f64).sqrt();
    let mut grads =
        AttnGrads { dx: vec![0.0; dy.len()], dwq: vec![0.0; c * c], dwk: vec![0.0; c * c], dwv: vec![0.0; c * c] };
    let mut idx = 0;
    let mut dp = vec![0.0; t * t];
    for bi in 0..g.b {
        for win in 0..g.windows_per_item() {
            let (xw, q, k, v, p) = (&saved.x[idx], &saved.q[idx], &saved.k[idx], &saved.v[idx], &saved.p[idx]);
            idx += 1;
            let d_o = gather(g, dy, bi, win);
            let mut dv = vec![0.0; t * c];
            gemm(Mat::new(p, t, t).t(), Mat::new(&d_o, t, c), &mut dv, 0.0);
            gemm(Mat::new(&d_o, t, c), Mat::new(v, t, c).t(), &mut dp, 0.0);
            // softmax adjoint, folded with the logit scale
            for (prow, dprow) in p.chunks(t).zip(dp.chunks_mut(t)) {
                let dot: f64 = prow.iter().zip(dprow.iter()).map(|(a, b)| a * b).sum();
                for (d, &pv) in dprow.iter_mut().zip(prow) {
                    *d = pv * (*d - dot) * scale;
                }
            }
            let mut dq = vec![0.0; t * c];
            let mut dk = vec![0.0; t * c];
            gemm(Mat::new(&dp, t, t), Mat::new(k, t, c), &mut dq, 0.0);
            gemm(Mat::new(&dp, t, t).t(), Mat::new(q, t, c), &mut dk, 0.0);

            gemm(Mat::new(xw, t, c).t(), Mat::new(&dq, t, c), &mut grads.dwq, 1.0);
            gemm(Mat::new(xw, t, c).t(), Mat::new(&dk, t, c), &mut grads.dwk, 1.0);
            gemm(Mat::new(xw, t, c).t(), Mat::new(&dv, t, c), &mut grads.dwv, 1.0);

            let mut dxw = vec![0.0; t * c];
            gemm(Mat::new(&dq, t, c), Mat::new(wq, c, c).t(), &mut dxw, 0.0);
            gemm(Mat::new(&dk, t, c), Mat::new(wk, c, c).t(), &mut dxw, 1.0);
            gemm(Mat::new(&dv, t, c), Mat::new(wv, c, c).t(), &mut dxw, 1.0);
            scatter_add(g, &dxw, bi, win, &mut grads.dx);
        }
    }
    grads
}
