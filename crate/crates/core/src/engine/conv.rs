//! 2-D cross-correlation via im2col and GEMM.

use super::gemm::{gemm, Mat};
use crate::error::{Error, Result};

/// Border handling for convolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Implicit zeros around the input.
    Zero(usize),
    /// Half-sample symmetric mirror, edge sample repeated (`-1 -> 0`, `n -> n-1`).
    Reflect(usize),
}

impl Padding {
    pub fn amount(self) -> usize {
        match self {
            Padding::Zero(p) | Padding::Reflect(p) => p,
        }
    }

    /// Maps a padded coordinate to a source index, `None` for zero padding.
    #[inline]
    pub(crate) fn source(self, i: isize, n: usize) -> Option<usize> {
        if i >= 0 && (i as usize) < n {
            return Some(i as usize);
        }
        match self {
            Padding::Zero(_) => None,
            Padding::Reflect(_) => Some(reflect_index(i, n)),
        }
    }
}

#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let j = i.rem_euclid(period);
    (if j >= n { period - 1 - j } else { j }) as usize
}

/// Static description of one convolution call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: Padding,
    pub groups: usize,
}

impl ConvGeom {
    pub fn new(x_shape: &[usize], w_shape: &[usize], stride: usize, padding: Padding, groups: usize) -> Result<Self> {
        let [batch, in_channels, height, width] = super::tensor::dims4(x_shape, "conv2d")?;
        let [out_channels, cin_g, kernel_h, kernel_w] = match w_shape {
            &[a, b, c, d] => [a, b, c, d],
            _ => {
                return Err(Error::shape("conv2d", format!("weight must be [out, in/groups, kh, kw], got {w_shape:?}")))
            }
        };
        if groups == 0 || stride == 0 {
            return Err(Error::Config("conv2d: groups and stride must be >= 1".into()));
        }
        if in_channels % groups != 0 || out_channels % groups != 0 {
            return Err(Error::shape(
                "conv2d",
                format!("channels (in {in_channels}, out {out_channels}) not divisible by groups {groups}"),
            ));
        }
        if cin_g != in_channels / groups {
            return Err(Error::shape(
                "conv2d",
                format!("weight axis 1 is {cin_g} but input channels/groups is {}", in_channels / groups),
            ));
        }
        let p = padding.amount();
        if let Padding::Reflect(_) = padding {
            if p > height || p > width {
                return Err(Error::shape(
                    "conv2d",
                    format!("reflect padding {p} needs height and width >= {p}, got {height}x{width}"),
                ));
            }
        }
        if height + 2 * p < kernel_h || width + 2 * p < kernel_w {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {kernel_h}x{kernel_w} larger than padded input {}x{}", height + 2 * p, width + 2 * p),
            ));
        }
        Ok(ConvGeom { batch, in_channels, height, width, out_channels, kernel_h, kernel_w, stride, padding, groups })
    }

    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.padding.amount() - self.kernel_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.padding.amount() - self.kernel_w) / self.stride + 1
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_channels, self.out_h(), self.out_w()]
    }

    fn col_rows(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride == 1 && self.padding.amount() == 0
    }
}

/// Unfolds one batch item `[C, H, W]` into `[C*kh*kw, Ho*Wo]`.
fn im2col(g: &ConvGeom, x: &[f64], col: &mut [f64]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let p = g.padding.amount() as isize;
    let n = ho * wo;
    for c in 0..g.in_channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let dst = &mut col[row * n..(row + 1) * n];
                for oh in 0..ho {
                    let ih = (oh * g.stride + ki) as isize - p;
                    let src_h = g.padding.source(ih, g.height);
                    let out_row = &mut dst[oh * wo..(oh + 1) * wo];
                    match src_h {
                        None => out_row.iter_mut().for_each(|v| *v = 0.0),
                        Some(sh) => {
                            let src = &plane[sh * g.width..(sh + 1) * g.width];
                            for (ow, v) in out_row.iter_mut().enumerate() {
                                let iw = (ow * g.stride + kj) as isize - p;
                                *v = match g.padding.source(iw, g.width) {
                                    Some(sw) => src[sw],
                                    None => 0.0,
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of `im2col`: scatters `[C*kh*kw, Ho*Wo]` back onto `[C, H, W]`.
fn col2im(g: &ConvGeom, col: &[f64], dx: &mut [f64]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let p = g.padding.amount() as isize;
    let n = ho * wo;
    for c in 0..g.in_channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let src = &col[row * n..(row + 1) * n];
                for oh in 0..ho {
                    let ih = (oh * g.stride + ki) as isize - p;
                    let Some(sh) = g.padding.source(ih, g.height) else {
                        continue;
                    };
                    for ow in 0..wo {
                        let iw = (ow * g.stride + kj) as isize - p;
                        if let Some(sw) = g.padding.source(iw, g.width) {
                            plane[sh * g.width + sw] += src[oh * wo + ow];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(g: &ConvGeom, x: &[f64], w: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let (ho, wo) = (g.out_h(), g.out_w());
    let n = ho * wo;
    let cin_g = g.in_channels / g.groups;
    let cout_g = g.out_channels / g.groups;
    let k = cin_g * g.kernel_h * g.kernel_w;
    let in_item = g.in_channels * g.height * g.width;
    let out_item = g.out_channels * n;
    let mut out = vec![0.0; g.batch * out_item];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![0.0; g.col_rows() * n] };
    for b in 0..g.batch {
        let xb = &x[b * in_item..(b + 1) * in_item];
        let colb: &[f64] = if g.is_pointwise() {
            xb
        } else {
            im2col(g, xb, &mut col);
            &col
        };
        let ob = &mut out[b * out_item..(b + 1) * out_item];
        for grp in 0..g.groups {
            let wg = &w[grp * cout_g * k..(grp + 1) * cout_g * k];
            let cg = &colb[grp * k * n..(grp + 1) * k * n];
            let og = &mut ob[grp * cout_g * n..(grp + 1) * cout_g * n];
            gemm(Mat::new(wg, cout_g, k), Mat::new(cg, k, n), og, 0.0);
        }
        if let Some(bias) = bias {
            for (co, &bv) in bias.iter().enumerate() {
                ob[co * n..(co + 1) * n].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    out
}

/// Gradients of a convolution; each output is computed only when requested.
pub(crate) struct ConvGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
}

pub(crate) fn conv2d_backward(g: &ConvGeom, x: &[f64], w: &[f64], dy: &[f64], want: (bool, bool, bool)) -> ConvGrads {
    let (ho, wo) = (g.out_h(), g.out_w());
    let n = ho * wo;
    let cin_g = g.in_channels / g.groups;
    let cout_g = g.out_channels / g.groups;
    let k = cin_g * g.kernel_h * g.kernel_w;
    let in_item = g.in_channels * g.height * g.width;
    let out_item = g.out_channels * n;

    let mut dx = want.0.then(|| vec![0.0; x.len()]);
    let mut dw = want.1.then(|| vec![0.0; w.len()]);
    let db = want.2.then(|| {
        let mut db = vec![0.0; g.out_channels];
        for b in 0..g.batch {
            for (co, acc) in db.iter_mut().enumerate() {
                let off = b * out_item + co * n;
                *acc += dy[off..off + n].iter().sum::<f64>();
            }
        }
        db
    });
    if dx.is_none() && dw.is_none() {
        return ConvGrads { dx, dw, db };
    }

    let pointwise = g.is_pointwise();
    let mut col = vec![0.0; if pointwise { 0 } else { g.col_rows() * n }];
    let mut dcol = vec![0.0; g.col_rows() * n];
    for b in 0..g.batch {
        let xb = &x[b * in_item..(b + 1) * in_item];
        let dyb = &dy[b * out_item..(b + 1) * out_item];
        let colb: &[f64] = if pointwise {
            xb
        } else {
            if dw.is_some() {
                im2col(g, xb, &mut col);
            }
            &col
        };
        for grp in 0..g.groups {
            let dyg = &dyb[grp * cout_g * n..(grp + 1) * cout_g * n];
            if let Some(dw) = dw.as_mut() {
                let cg = &colb[grp * k * n..(grp + 1) * k * n];
                let dwg = &mut dw[grp * cout_g * k..(grp + 1) * cout_g * k];
                gemm(Mat::new(dyg, cout_g, n), Mat::new(cg, k, n).t(), dwg, 1.0);
            }
            if dx.is_some() {
                let wg = &w[grp * cout_g * k..(grp + 1) * cout_g * k];
                let dcg = &mut dcol[grp * k * n..(grp + 1) * k * n];
                gemm(Mat::new(wg, cout_g, k).t(), Mat::new(dyg, cout_g, n), dcg, 0.0);
            }
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx[b * in_item..(b + 1) * in_item];
            if pointwise {
                dxb.iter_mut().zip(&dcol).for_each(|(a, v)| *a += v);
            } else {
                col2im(g, &dcol, dxb);
            }
        }
    }
    ConvGrads { dx, dw, db }
}
