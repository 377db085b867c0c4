use hfur_core::{AttentionSpan, Error, Padding, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

fn run1(x: &Tensor, f: impl FnOnce(&mut Tape, Var) -> hfur_core::Result<Var>) -> Tensor {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let y = f(&mut tape, v).unwrap();
    tape.value(y).clone()
}

fn idx(s: &[usize], b: usize, c: usize, h: usize, w: usize) -> usize {
    ((b * s[1] + c) * s[2] + h) * s[3] + w
}

/// Half-sample symmetric extension: the edge sample is repeated.
fn reflect(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i - 1) as usize
    } else if i as usize >= n {
        2 * n - 1 - i as usize
    } else {
        i as usize
    }
}

/// Direct six-fold loop cross-correlation.
fn naive_conv(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
    reflect_pad: bool,
    groups: usize,
) -> Vec<f64> {
    let xs = x.shape();
    let ws = w.shape();
    let (b, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
    let (cout, cin_g, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    let cout_g = cout / groups;
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; b * cout * ho * wo];
    for bi in 0..b {
        for co in 0..cout {
            let g = co / cout_g;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut s = bias.map(|b| b[co]).unwrap_or(0.0);
                    for ci in 0..cin_g {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let ih = (oh * stride + ki) as isize - pad as isize;
                                let iw = (ow * stride + kj) as isize - pad as isize;
                                let inside = ih >= 0 && iw >= 0 && (ih as usize) < h && (iw as usize) < wd;
                                let v = if inside {
                                    x.data()[idx(xs, bi, g * cin_g + ci, ih as usize, iw as usize)]
                                } else if reflect_pad {
                                    x.data()[idx(xs, bi, g * cin_g + ci, reflect(ih, h), reflect(iw, wd))]
                                } else {
                                    0.0
                                };
                                s += v * w.data()[((co * cin_g + ci) * kh + ki) * kw + kj];
                            }
                        }
                    }
                    out[((bi * cout + co) * ho + oh) * wo + ow] = s;
                }
            }
        }
    }
    let _ = cin;
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn conv(tape: &mut Tape, x: Var, w: &Tensor, stride: usize, pad: Padding, groups: usize) -> hfur_core::Result<Var> {
    let w = tape.constant(w.clone());
    tape.conv2d(x, w, None, stride, pad, groups)
}

#[test]
fn conv2d_sum_of_ones() {
    let x = Tensor::full(vec![1, 1, 3, 3], 1.0);
    let w = Tensor::full(vec![1, 1, 3, 3], 1.0);
    let y = run1(&x, |t, v| conv(t, v, &w, 1, Padding::Zero(0), 1));
    assert_eq!(y.shape(), &[1, 1, 1, 1]);
    assert_eq!(y.data(), &[9.0]);
}

#[test]
fn conv2d_identity_kernel() {
    let x = random(&[2, 1, 4, 5], 3);
    let w = Tensor::full(vec![1, 1, 1, 1], 1.0);
    let y = run1(&x, |t, v| conv(t, v, &w, 1, Padding::Zero(0), 1));
    assert_eq!(y.data(), x.data());
}

#[test]
fn conv2d_matches_naive_loop() {
    let x = random(&[1, 2, 5, 5], 11);
    let w = random(&[3, 2, 3, 3], 12);
    let y = run1(&x, |t, v| conv(t, v, &w, 1, Padding::Zero(0), 1));
    assert_eq!(y.shape(), &[1, 3, 3, 3]);
    assert!(max_diff(y.data(), &naive_conv(&x, &w, None, 1, 0, false, 1)) < 1e-12);
}

#[test]
fn conv2d_padding_stride_groups_bias_match_naive_loop() {
    let x = random(&[2, 4, 6, 7], 21);
    let bias = [0.5, -0.25, 1.0, 0.0];
    for (stride, pad, reflect_pad, groups) in
        [(1, 1, true, 1), (2, 1, true, 1), (1, 1, false, 2), (2, 2, false, 4), (1, 1, true, 4)]
    {
        let w = random(&[4, 4 / groups, 3, 3], 22 + groups as u64);
        let padding = if reflect_pad { Padding::Reflect(pad) } else { Padding::Zero(pad) };
        let y = run1(&x, |t, v| {
            let wv = t.constant(w.clone());
            let bv = t.constant(Tensor::new(vec![4], bias.to_vec()).unwrap());
            t.conv2d(v, wv, Some(bv), stride, padding, groups)
        });
        let want = naive_conv(&x, &w, Some(&bias), stride, pad, reflect_pad, groups);
        assert!(max_diff(y.data(), &want) < 1e-12, "{stride} {pad} {reflect_pad} {groups}");
    }
}

#[test]
fn conv2d_shape_errors() {
    let x = Tensor::zeros(vec![1, 3, 4, 4]);
    let w = Tensor::zeros(vec![2, 2, 3, 3]);
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let err = conv(&mut tape, xv, &w, 1, Padding::Zero(1), 1).unwrap_err();
    assert!(matches!(err, Error::Shape { op: "conv2d", .. }));
}

#[test]
fn depth_to_space_layout() {
    let x = Tensor::new(vec![1, 4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let y = run1(&x, |t, v| t.depth_to_space(v, 2));
    assert_eq!(y.shape(), &[1, 1, 2, 2]);
    assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    let x = random(&[2, 3, 4, 2], 5);
    assert_eq!(run1(&x, |t, v| t.depth_to_space(v, 1)).data(), x.data());
}

#[test]
fn depth_to_space_general_index_formula() {
    let (b, c, r, h, w) = (2, 2, 3, 2, 3);
    let x = random(&[b, c * r * r, h, w], 8);
    let y = run1(&x, |t, v| t.depth_to_space(v, r));
    for bi in 0..b {
        for ci in 0..c {
            for hh in 0..h {
                for ww in 0..w {
                    for i in 0..r {
                        for j in 0..r {
                            assert_eq!(
                                y.at4(bi, ci, r * hh + i, r * ww + j),
                                x.at4(bi, ci * r * r + i * r + j, hh, ww)
                            );
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn space_to_depth_layout_and_errors() {
    let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let y = run1(&x, |t, v| t.space_to_depth(v, 2));
    assert_eq!(y.shape(), &[1, 4, 1, 1]);
    assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    let z = random(&[1, 2, 3, 3], 1);
    assert_eq!(run1(&z, |t, v| t.space_to_depth(v, 1)).data(), z.data());

    let mut tape = Tape::new();
    let v = tape.constant(Tensor::zeros(vec![1, 1, 3, 4]));
    assert!(matches!(tape.space_to_depth(v, 2), Err(Error::Shape { .. })));
    let v = tape.constant(Tensor::zeros(vec![1, 3, 2, 2]));
    assert!(matches!(tape.depth_to_space(v, 2), Err(Error::Config(_))));
}

proptest! {
    #[test]
    fn shuffles_are_exact_inverses(
        b in 1usize..3, c in 1usize..3, h in 1usize..4, w in 1usize..4, r in 1usize..4, seed in any::<u64>()
    ) {
        let x = random(&[b, c, h * r, w * r], seed);
        let down = run1(&x, |t, v| t.space_to_depth(v, r));
        let back = run1(&down, |t, v| t.depth_to_space(v, r));
        prop_assert_eq!(back.data(), x.data());
        let y = random(&[b, c * r * r, h, w], seed ^ 1);
        let up = run1(&y, |t, v| t.depth_to_space(v, r));
        let back = run1(&up, |t, v| t.space_to_depth(v, r));
        prop_assert_eq!(back.data(), y.data());
    }
}

#[test]
fn avg_pool2_examples() {
    let x = Tensor::full(vec![1, 2, 4, 6], 0.7);
    let y = run1(&x, |t, v| t.avg_pool2(v));
    assert_eq!(y.shape(), &[1, 2, 2, 3]);
    assert!(y.data().iter().all(|&v| v == 0.7));

    let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(run1(&x, |t, v| t.avg_pool2(v)).data(), &[2.5]);

    let x = random(&[1, 1, 4, 4], 9);
    let y = run1(&x, |t, v| t.avg_pool2(v));
    for i in 0..2 {
        for j in 0..2 {
            let mut s = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    s += x.at4(0, 0, 2 * i + a, 2 * j + b);
                }
            }
            assert!((y.at4(0, 0, i, j) - s / 4.0).abs() < 1e-15);
        }
    }

    let mut tape = Tape::new();
    let v = tape.constant(Tensor::zeros(vec![1, 1, 3, 4]));
    assert!(tape.avg_pool2(v).is_err());
}

#[test]
fn box_filter3_examples() {
    let x = Tensor::full(vec![1, 1, 4, 5], 0.3);
    let y = run1(&x, |t, v| t.box_filter3(v));
    assert!(max_diff(y.data(), x.data()) < 1e-15);

    let mut impulse = Tensor::zeros(vec![1, 1, 3, 3]);
    impulse.data_mut()[4] = 9.0;
    let y = run1(&impulse, |t, v| t.box_filter3(v));
    assert!(y.data().iter().all(|&v| (v - 1.0).abs() < 1e-15), "{:?}", y.data());

    let x = random(&[1, 1, 5, 5], 17);
    let y = run1(&x, |t, v| t.box_filter3(v));
    for i in 0..5isize {
        for j in 0..5isize {
            let mut s = 0.0;
            for di in -1..=1 {
                for dj in -1..=1 {
                    s += x.at4(0, 0, reflect(i + di, 5), reflect(j + dj, 5));
                }
            }
            assert!((y.at4(0, 0, i as usize, j as usize) - s / 9.0).abs() < 1e-15);
        }
    }
}

fn attention(x: &Tensor, wq: &Tensor, wk: &Tensor, wv: &Tensor, span: AttentionSpan) -> (Tensor, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let q = tape.constant(wq.clone());
    let k = tape.constant(wk.clone());
    let v = tape.constant(wv.clone());
    let y = tape.self_attention(xv, q, k, v, span).unwrap();
    let probs = tape.attention_probabilities(y).unwrap().to_vec();
    (tape.value(y).clone(), probs)
}

#[test]
fn attention_single_token_is_value_projection() {
    let c = 4;
    let x = random(&[1, c, 1, 1], 1);
    let (wq, wk, wv) = (random(&[c, c], 2), random(&[c, c], 3), random(&[c, c], 4));
    let (y, _) = attention(&x, &wq, &wk, &wv, AttentionSpan::Global);
    for j in 0..c {
        let want: f64 = (0..c).map(|i| x.data()[i] * wv.data()[i * c + j]).sum();
        assert!((y.data()[j] - want).abs() < 1e-14);
    }
}

#[test]
fn attention_zero_logits_average_values() {
    let c = 3;
    let x = random(&[1, c, 2, 3], 5);
    let zero = Tensor::zeros(vec![c, c]);
    let wv = random(&[c, c], 6);
    let (y, _) = attention(&x, &zero, &zero, &wv, AttentionSpan::Global);
    let hw = 6;
    for j in 0..c {
        let mean: f64 =
            (0..hw).map(|t| (0..c).map(|i| x.data()[i * hw + t] * wv.data()[i * c + j]).sum::<f64>()).sum::<f64>()
                / hw as f64;
        for t in 0..hw {
            assert!((y.data()[j * hw + t] - mean).abs() < 1e-14);
        }
    }
}

#[test]
fn attention_matches_direct_softmax_formula() {
    let c = 3;
    let x = random(&[1, c, 2, 2], 7);
    let (wq, wk, wv) = (random(&[c, c], 8), random(&[c, c], 9), random(&[c, c], 10));
    let (y, probs) = attention(&x, &wq, &wk, &wv, AttentionSpan::Global);
    let t = 4;
    let tok = |ti: usize| -> Vec<f64> { (0..c).map(|ci| x.data()[ci * t + ti]).collect() };
    let proj = |v: &[f64], w: &Tensor| -> Vec<f64> {
        (0..c).map(|j| (0..c).map(|i| v[i] * w.data()[i * c + j]).sum()).collect()
    };
    for i in 0..t {
        let q = proj(&tok(i), &wq);
        let logits: Vec<f64> = (0..t)
            .map(|j| {
                let k = proj(&tok(j), &wk);
                q.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() / (c as f64).sqrt()
            })
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        let p: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();
        for j in 0..t {
            assert!((probs[0][i * t + j] - p[j]).abs() < 1e-12);
        }
        for ch in 0..c {
            let want: f64 = (0..t).map(|j| p[j] * proj(&tok(j), &wv)[ch]).sum();
            assert!((y.data()[ch * t + i] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_rows_are_stochastic_and_windows_independent() {
    let c = 2;
    let x = random(&[2, c, 4, 4], 12);
    let (wq, wk, wv) = (random(&[c, c], 13), random(&[c, c], 14), random(&[c, c], 15));
    let (y, probs) = attention(&x, &wq, &wk, &wv, AttentionSpan::Window(2));
    assert_eq!(probs.len(), 2 * 4);
    for p in &probs {
        for row in p.chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    // top-left window equals global attention on the 2x2 crop
    let mut crop = Tensor::zeros(vec![1, c, 2, 2]);
    for ci in 0..c {
        for i in 0..2 {
            for j in 0..2 {
                crop.data_mut()[(ci * 2 + i) * 2 + j] = x.at4(0, ci, i, j);
            }
        }
    }
    let (yc, _) = attention(&crop, &wq, &wk, &wv, AttentionSpan::Global);
    for ci in 0..c {
        for i in 0..2 {
            for j in 0..2 {
                assert!((yc.at4(0, ci, i, j) - y.at4(0, ci, i, j)).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn attention_token_limit_asks_for_tiling() {
    let mut tape = Tape::with_token_limit(16);
    let x = tape.constant(Tensor::zeros(vec![1, 2, 8, 8]));
    let w = tape.constant(Tensor::zeros(vec![2, 2]));
    let err = tape.self_attention(x, w, w, w, AttentionSpan::Global).unwrap_err();
    assert!(matches!(err, Error::Resource(_)));
    assert!(err.to_string().contains("tile"));
    assert!(tape.self_attention(x, w, w, w, AttentionSpan::Window(4)).is_ok());
}

fn layer_norm(x: &Tensor, gamma: &[f64], beta: &[f64]) -> Tensor {
    let c = gamma.len();
    run1(x, |t, v| {
        let g = t.constant(Tensor::new(vec![c], gamma.to_vec()).unwrap());
        let b = t.constant(Tensor::new(vec![c], beta.to_vec()).unwrap());
        t.layer_norm(v, g, b, 1e-5)
    })
}

#[test]
fn layer_norm_examples() {
    let c = 4;
    let ones = vec![1.0; c];
    let zeros = vec![0.0; c];
    let x = Tensor::full(vec![1, c, 2, 2], 3.5);
    assert!(layer_norm(&x, &ones, &zeros).data().iter().all(|&v| v == 0.0));

    let beta = [0.1, -0.2, 0.3, 0.4];
    let x = random(&[2, c, 3, 3], 31);
    let y = layer_norm(&x, &ones, &beta);
    let mean_beta = beta.iter().sum::<f64>() / c as f64;
    for b in 0..2 {
        for h in 0..3 {
            for w in 0..3 {
                let m: f64 = (0..c).map(|ci| y.at4(b, ci, h, w)).sum::<f64>() / c as f64;
                assert!((m - mean_beta).abs() < 1e-10);
            }
        }
    }

    let gamma = [0.5, 2.0, -1.0, 1.5];
    let y = layer_norm(&x, &gamma, &beta);
    for b in 0..2 {
        for h in 0..3 {
            for w in 0..3 {
                let v: Vec<f64> = (0..c).map(|ci| x.at4(b, ci, h, w)).collect();
                let mu = v.iter().sum::<f64>() / c as f64;
                let var = v.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / c as f64;
                for ci in 0..c {
                    let want = gamma[ci] * (v[ci] - mu) / (var + 1e-5).sqrt() + beta[ci];
                    assert!((y.at4(b, ci, h, w) - want).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn backward_of_sum_and_square() {
    let x = random(&[2, 3], 40).tracked();
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let s = tape.sum(v);
    let g = tape.backward(s).unwrap();
    assert!(g.wrt(v).unwrap().iter().all(|&d| d == 1.0));

    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let sq = tape.mul(v, v).unwrap();
    let s = tape.sum(sq);
    let g = tape.backward(s).unwrap();
    for (d, xv) in g.wrt(v).unwrap().iter().zip(x.data()) {
        assert_eq!(*d, 2.0 * xv);
    }
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let v = tape.leaf(Tensor::zeros(vec![3]).tracked());
    assert!(matches!(tape.backward(v), Err(Error::Contract(_))));
}

#[test]
fn parameter_grads_accumulate_across_backward_calls() {
    let mut store = hfur_core::ParamStore::new();
    let id = store.add("w", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
    for _ in 0..2 {
        let mut tape = Tape::new();
        let w = tape.param(&store, id);
        let sq = tape.mul(w, w).unwrap();
        let l = tape.sum(sq);
        tape.backward(l).unwrap().accumulate_into(&mut store);
    }
    assert_eq!(store.get(id).grad().unwrap(), &[4.0, -8.0]);
}

#[test]
fn forward_ops_are_deterministic() {
    let x = random(&[1, 4, 8, 8], 50);
    let (wq, wk, wv) = (random(&[4, 4], 51), random(&[4, 4], 52), random(&[4, 4], 53));
    let w = random(&[4, 4, 3, 3], 54);
    let run = || {
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let wv_ = t.constant(w.clone());
        let c = t.conv2d(xv, wv_, None, 1, Padding::Reflect(1), 1).unwrap();
        let (q, k, v) = (t.constant(wq.clone()), t.constant(wk.clone()), t.constant(wv.clone()));
        let a = t.self_attention(c, q, k, v, AttentionSpan::Window(4)).unwrap();
        let b = t.box_filter3(a).unwrap();
        t.value(b).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn gradient_checks_for_every_op() {
    for case in hfur_core::verify::op_cases() {
        let r = (case.run)().unwrap();
        assert!(r.max_rel_err < case.tolerance, "{}: {} at {:?}", case.name, r.max_rel_err, r.worst);
    }
}
