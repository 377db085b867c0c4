//! Rearrangement and local averaging kernels on `[B, C, H, W]` buffers.

use super::conv::reflect_index;

/// `out(b, c, r*h+i, r*w+j) = in(b, c*r*r + i*r + j, h, w)`.
pub(crate) fn depth_to_space(x: &[f64], [b, c, h, w]: [usize; 4], r: usize) -> Vec<f64> {
    let co = c / (r * r);
    let (ho, wo) = (h * r, w * r);
    let mut out = vec![0.0; x.len()];
    for bi in 0..b {
        for ci in 0..co {
            for i in 0..r {
                for j in 0..r {
                    let src_c = ci * r * r + i * r + j;
                    let src = &x[((bi * c + src_c) * h) * w..((bi * c + src_c + 1) * h) * w];
                    let dst_base = (bi * co + ci) * ho * wo;
                    for hh in 0..h {
                        let row = dst_base + (r * hh + i) * wo + j;
                        for ww in 0..w {
                            out[row + r * ww] = src[hh * w + ww];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Exact inverse of [`depth_to_space`]; input extents are the spatial ones.
pub(crate) fn space_to_depth(x: &[f64], [b, c, h, w]: [usize; 4], r: usize) -> Vec<f64> {
    let (ho, wo) = (h / r, w / r);
    let co = c * r * r;
    let mut out = vec![0.0; x.len()];
    for bi in 0..b {
        for ci in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let dst_c = ci * r * r + i * r + j;
                    let dst_base = ((bi * co + dst_c) * ho) * wo;
                    let src_base = (bi * c + ci) * h * w;
                    for hh in 0..ho {
                        let row = src_base + (r * hh + i) * w + j;
                        for ww in 0..wo {
                            out[dst_base + hh * wo + ww] = x[row + r * ww];
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn avg_pool2(x: &[f64], [b, c, h, w]: [usize; 4]) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; b * c * ho * wo];
    for p in 0..b * c {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for i in 0..ho {
            for j in 0..wo {
                let s = src[2 * i * w + 2 * j]
                    + src[2 * i * w + 2 * j + 1]
                    + src[(2 * i + 1) * w + 2 * j]
                    + src[(2 * i + 1) * w + 2 * j + 1];
                dst[i * wo + j] = 0.25 * s;
            }
        }
    }
    out
}

pub(crate) fn avg_pool2_backward(dy: &[f64], [b, c, h, w]: [usize; 4]) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut dx = vec![0.0; b * c * h * w];
    for p in 0..b * c {
        let src = &dy[p * ho * wo..(p + 1) * ho * wo];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for i in 0..h {
            for j in 0..w {
                dst[i * w + j] = 0.25 * src[(i / 2) * wo + j / 2];
            }
        }
    }
    dx
}

/// 3x3 mean with reflect padding.
pub(crate) fn box_filter3(x: &[f64], [b, c, h, w]: [usize; 4]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let rows: Vec<[usize; 3]> =
        (0..h as isize).map(|i| [reflect_index(i - 1, h), i as usize, reflect_index(i + 1, h)]).collect();
    let cols: Vec<[usize; 3]> =
        (0..w as isize).map(|j| [reflect_index(j - 1, w), j as usize, reflect_index(j + 1, w)]).collect();
    for p in 0..b * c {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for (i, ri) in rows.iter().enumerate() {
            for (j, cj) in cols.iter().enumerate() {
                let mut s = 0.0;
                for &r in ri {
                    for &cc in cj {
                        s += src[r * w + cc];
                    }
                }
                dst[i * w + j] = s / 9.0;
            }
        }
    }
    out
}

pub(crate) fn box_filter3_backward(dy: &[f64], [b, c, h, w]: [usize; 4]) -> Vec<f64> {
    let mut dx = vec![0.0; dy.len()];
    let rows: Vec<[usize; 3]> =
        (0..h as isize).map(|i| [reflect_index(i - 1, h), i as usize, reflect_index(i + 1, h)]).collect();
    let cols: Vec<[usize; 3]> =
        (0..w as isize).map(|j| [reflect_index(j - 1, w), j as usize, reflect_index(j + 1, w)]).collect();
    for p in 0..b * c {
        let src = &dy[p * h * w..(p + 1) * h * w];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for (i, ri) in rows.iter().enumerate() {
            for (j, cj) in cols.iter().enumerate() {
                let g = src[i * w + j] / 9.0;
                for &r in ri {
                    for &cc in cj {
                        dst[r * w + cc] += g;
                    }
                }
            }
        }
    }
    dx
}

/// Per-position normalization over the channel axis.
pub(crate) struct LayerNormSaved {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn layer_norm(
    x: &[f64],
    [b, c, h, w]: [usize; 4],
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> (Vec<f64>, LayerNormSaved) {
    let hw = h * w;
    let mut out = vec![0.0; x.len()];
    let mut normalized = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; b * hw];
    for bi in 0..b {
        let base = bi * c * hw;
        for s in 0..hw {
            let mut mean = 0.0;
            for ci in 0..c {
                mean += x[base + ci * hw + s];
            }
            mean /= c as f64;
            let mut var = 0.0;
            for ci in 0..c {
                let d = x[base + ci * hw + s] - mean;
                var += d * d;
            }
            var /= c as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[bi * hw + s] = is;
            for ci in 0..c {
                let idx = base + ci * hw + s;
                let n = (x[idx] - mean) * is;
                normalized[idx] = n;
                out[idx] = gamma[ci] * n + beta[ci];
            }
        }
    }
    (out, LayerNormSaved { normalized, inv_std })
}

pub(crate) fn layer_norm_backward(
    dy: &[f64],
    [b, c, h, w]: [usize; 4],
    gamma: &[f64],
    saved: &LayerNormSaved,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hw = h * w;
    let mut dx = vec![0.0; dy.len()];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    let cf = c as f64;
    for bi in 0..b {
        let base = bi * c * hw;
        for s in 0..hw {
            let mut mean_g = 0.0;
            let mut mean_gn = 0.0;
            for ci in 0..c {
                let idx = base + ci * hw + s;
                let gn = dy[idx] * gamma[ci];
                mean_g += gn;
                mean_gn += gn * saved.normalized[idx];
                dgamma[ci] += dy[idx] * saved.normalized[idx];
                dbeta[ci] += dy[idx];
            }
            mean_g /= cf;
            mean_gn /= cf;
            let is = saved.inv_std[bi * hw + s];
            for ci in 0..c {
                let idx = base + ci * hw + s;
                let gn = dy[idx] * gamma[ci];
                dx[idx] = is * (gn - mean_g - saved.normalized[idx] * mean_gn);
            }
        }
    }
    (dx, dgamma, dbeta)
}
