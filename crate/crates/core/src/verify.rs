//! Finite-difference gradient scenarios for every op and composite module.
//!
//! Each case builds small random inputs and parameters, runs
//! [`check_params`] and reports the worst relative error over its seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::gradcheck::{check_inputs, check_params, GradCheckOptions, GradCheckReport};
use crate::engine::{AttentionSpan, Padding, ParamStore, Tape, Tensor, Var};
use crate::error::Result;
use crate::nn::hir::{Hir, HirConfig, Refine};
use crate::nn::impfrequp::{ImpFreqUp, ImpFreqUpConfig, Priors, TableScaling, Upsampler};
use crate::nn::layers::{ParamBuilder, TfBlock};
use crate::nn::net::{init_params, NetworkConfig};

pub const OP_TOLERANCE: f64 = 1e-4;
pub const NETWORK_TOLERANCE: f64 = 1e-3;

pub struct GradCase {
    pub name: &'static str,
    pub tolerance: f64,
    pub run: fn() -> Result<GradCheckReport>,
}

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// Replaces every trainable value with a uniform draw in `±scale`, so that
/// zero-initialized branches are exercised too.
pub fn randomize(store: &mut ParamStore, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let p = store.get_mut(id);
        if p.requires_grad() {
            p.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale));
        }
    }
}

fn worst(reports: Vec<GradCheckReport>) -> GradCheckReport {
    let checked = reports.iter().map(|r| r.checked).sum();
    let mut w = reports.into_iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err)).expect("at least one seed");
    w.checked = checked;
    w
}

fn over_seeds(n: u64, f: impl Fn(u64) -> Result<GradCheckReport>) -> Result<GradCheckReport> {
    Ok(worst((0..n).map(f).collect::<Result<Vec<_>>>()?))
}

fn inputs(shapes: &[&[usize]], seed: u64, f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> Result<GradCheckReport> {
    let ts: Vec<Tensor> = shapes.iter().enumerate().map(|(i, s)| random(s, seed * 31 + i as u64)).collect();
    check_inputs(&ts, f, &GradCheckOptions { seed, ..Default::default() })
}

const SEEDS: u64 = 10;

fn conv_case() -> Result<GradCheckReport> {
    over_seeds(SEEDS, |seed| {
        let groups = [1, 2][seed as usize % 2];
        let stride = 1 + (seed as usize / 2) % 2;
        let pad = if seed % 3 == 0 { Padding::Zero(1) } else { Padding::Reflect(1) };
        inputs(&[&[2, 4, 6, 6], &[4, 4 / groups, 3, 3], &[4]], seed, |t, v| {
            t.conv2d(v[0], v[1], Some(v[2]), stride, pad, groups)
        })
    })
}

fn depthwise_case() -> Result<GradCheckReport> {
    over_seeds(SEEDS, |seed| {
        inputs(&[&[1, 4, 5, 5], &[4, 1, 3, 3], &[6, 4, 1, 1]], seed, |t, v| {
            let d = t.conv2d(v[0], v[1], None, 1, Padding::Reflect(1), 4)?;
            t.conv2d(d, v[2], None, 1, Padding::Zero(0), 1)
        })
    })
}

fn shuffle_case() -> Result<GradCheckReport> {
    over_seeds(SEEDS, |seed| {
        let a = inputs(&[&[2, 8, 4, 4]], seed, |t, v| t.depth_to_space(v[0], 2))?;
        let b = inputs(&[&[2, 2, 8, 8]], seed, |t, v| t.space_to_depth(v[0], 2))?;
        Ok(worst(vec![a, b]))
    })
}

fn pool_case() -> Result<GradCheckReport> {
    over_seeds(SEEDS, |seed| inputs(&[&[2, 3, 8, 6]], seed, |t, v| t.avg_pool2(v[0])))
}

fn box_case() -> Result<GradCheckReport> {
    over_seeds(SEEDS, |seed| inputs(&[&[2, 3, 5, 7]], seed, |t, v| t.box_filter3(v[0])))
}

fn attention_case() -> Result<GradCheckReport> {
    over_seeds(SEEDS, |seed| {
        let span = if seed % 2 == 0 { AttentionSpan::Global } else { AttentionSpan::Window(2) };
        inputs(&[&[2, 4, 4, 4], &[4, 4], &[4, 4], &[4, 4]], seed, |t, v| t.self_attention(v[0], v[1], v[2], v[3], span))
    })
}

fn layer_norm_case() -> Result<GradCheckReport> {
    over_seeds(SEEDS, |seed| inputs(&[&[2, 5, 3, 3], &[5], &[5]], seed, |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5)))
}

fn elementwise_case() -> Result<GradCheckReport> {
    over_seeds(SEEDS, |seed| {
        inputs(&[&[2, 3, 4, 4], &[2, 3, 4, 4], &[3]], seed, |t, x| {
            let s = t.add(x[0], x[1])?;
            let d = t.sub(s, x[1])?;
            let m = t.mul(d, x[1])?;
            let th = t.tanh(m);
            let sc = t.mul_channels(th, x[2])?;
            let sq = t.mul(sc, sc)?;
            let sh = t.affine(sq, 2.0, 0.5);
            let r = t.sqrt(sh)?;
            t.silu(r)
        })
    })
}

fn structural_case() -> Result<GradCheckReport> {
    over_seeds(SEEDS, |seed| {
        inputs(&[&[2, 3, 4, 4], &[2, 3, 4, 4]], seed, |t, x| {
            let c = t.concat_channels(&[x[0], x[1], x[0]])?;
            let s = t.slice_channels(c, 2, 3)?;
            let rows = t.reshape(s, &[6, 16])?;
            let cols = t.reshape(x[0], &[16, 6])?;
            let m = t.matmul(rows, cols)?;
            let mean = t.mean(m);
            let r = t.reshape(mean, &[1, 1])?;
            let row = t.reshape(x[1], &[1, 96])?;
            let out = t.matmul(r, row)?;
            let total = t.sum(out);
            let total = t.reshape(total, &[1, 1])?;
            t.matmul(total, row)
        })
    })
}

/// Checks a module whose parameters live in `store` on input `x`.
fn module(
    store: &ParamStore,
    x: Tensor,
    entries: Option<usize>,
    f: impl Fn(&mut Tape, &ParamStore, Var) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut s = store.clone();
    let xid = s.add("__input", x);
    let opts = GradCheckOptions { max_entries_per_tensor: entries, ..Default::default() };
    check_params(
        &s,
        |t, s| {
            let xv = t.param(s, xid);
            f(t, s, xv)
        },
        &opts,
    )
}

fn tfblock_case() -> Result<GradCheckReport> {
    over_seeds(2, |seed| {
        let mut store = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut store, seed);
        let blocks: Vec<TfBlock> =
            (0..2).map(|i| TfBlock::new(&mut pb, &format!("b{i}"), 4, AttentionSpan::Window(4))).collect();
        randomize(&mut store, seed, 0.5);
        module(&store, random(&[1, 4, 8, 8], seed), None, |t, s, mut x| {
            for b in &blocks {
                x = b.forward(t, s, x)?;
            }
            Ok(x)
        })
    })
}

fn impfrequp(factor: usize, scaling: TableScaling, seed: u64) -> Result<GradCheckReport> {
    let cfg = ImpFreqUpConfig {
        channels: 8,
        n1: 1,
        n2: 1,
        factor,
        span: AttentionSpan::Window(4),
        upsampler: Upsampler::ImpFreqUp,
        scaling,
    };
    let mut store = ParamStore::new();
    let m = ImpFreqUp::new(&mut ParamBuilder::new(&mut store, seed), "up", cfg)?;
    randomize(&mut store, seed, 0.5);
    let priors = Priors::flat(37)?;
    module(&store, random(&[1, 8, 8, 8], seed), Some(24), |t, s, x| m.forward(t, s, x, &priors))
}

fn impfrequp1_case() -> Result<GradCheckReport> {
    over_seeds(2, |seed| impfrequp(1, TableScaling::AfterIdct, seed))
}

fn impfrequp2_case() -> Result<GradCheckReport> {
    over_seeds(2, |seed| {
        Ok(worst(vec![impfrequp(2, TableScaling::AfterIdct, seed)?, impfrequp(2, TableScaling::BeforeIdct, seed)?]))
    })
}

fn refine(span: AttentionSpan, seed: u64) -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let r = Refine::new(&mut ParamBuilder::new(&mut store, seed), "r", 4, span);
    randomize(&mut store, seed, 0.5);
    module(&store, random(&[1, 4, 4, 4], seed), None, |t, s, x| r.forward(t, s, x))
}

fn dr_case() -> Result<GradCheckReport> {
    over_seeds(3, |seed| refine(AttentionSpan::Window(2), seed))
}

fn nr_case() -> Result<GradCheckReport> {
    over_seeds(3, |seed| refine(AttentionSpan::Global, seed))
}

fn hir_case() -> Result<GradCheckReport> {
    over_seeds(2, |seed| {
        let mut store = ParamStore::new();
        let cfg = HirConfig { channels: 8, iterations: 2, detail_span: AttentionSpan::Window(4) };
        let h = Hir::new(&mut ParamBuilder::new(&mut store, seed), "hir", cfg)?;
        randomize(&mut store, seed, 0.3);
        module(&store, random(&[1, 8, 8, 8], seed), Some(24), |t, s, x| h.forward(t, s, x))
    })
}

fn temporal_fuse_case() -> Result<GradCheckReport> {
    let cfg = NetworkConfig { channels: 8, ..NetworkConfig::test_profile() };
    let (net, mut store) = init_params(&cfg, 3)?;
    randomize(&mut store, 3, 0.3);
    let keep = |n: &str| n.starts_with("fuse");
    let ids: Vec<_> = store.ids().filter(|&id| !keep(store.name(id))).collect();
    for id in ids {
        store.get_mut(id).set_requires_grad(false);
    }
    module(&store, random(&[1, 3, 1, 32, 32], 3), Some(16), |t, s, x| net.temporal_fuse(t, s, x))
}

/// Full test-profile network at 8 channels, 32x32, three frames.
fn network_case() -> Result<GradCheckReport> {
    let cfg = NetworkConfig { channels: 8, ..NetworkConfig::test_profile() };
    let (net, mut store) = init_params(&cfg, 11)?;
    randomize(&mut store, 11, 0.2);
    module(&store, random(&[1, 3, 1, 32, 32], 11), Some(2), |t, s, x| net.forward(t, s, x))
}

/// Single-operation scenarios.
pub fn op_cases() -> Vec<GradCase> {
    let op = OP_TOLERANCE;
    vec![
        GradCase { name: "conv2d", tolerance: op, run: conv_case },
        GradCase { name: "depthwise+pointwise conv", tolerance: op, run: depthwise_case },
        GradCase { name: "depth_to_space/space_to_depth", tolerance: op, run: shuffle_case },
        GradCase { name: "avg_pool2", tolerance: op, run: pool_case },
        GradCase { name: "box_filter3", tolerance: op, run: box_case },
        GradCase { name: "self_attention", tolerance: op, run: attention_case },
        GradCase { name: "layer_norm", tolerance: op, run: layer_norm_case },
        GradCase { name: "elementwise chain", tolerance: op, run: elementwise_case },
        GradCase { name: "concat/slice/reshape/matmul", tolerance: op, run: structural_case },
    ]
}

/// Composite-module scenarios.
pub fn module_cases() -> Vec<GradCase> {
    let op = OP_TOLERANCE;
    vec![
        GradCase { name: "TFBlock x2", tolerance: op, run: tfblock_case },
        GradCase { name: "ImpFreqUp x1", tolerance: op, run: impfrequp1_case },
        GradCase { name: "ImpFreqUp x2", tolerance: op, run: impfrequp2_case },
        GradCase { name: "detail refinement", tolerance: op, run: dr_case },
        GradCase { name: "non-local refinement", tolerance: op, run: nr_case },
        GradCase { name: "HIR", tolerance: op, run: hir_case },
        GradCase { name: "temporal fusion", tolerance: op, run: temporal_fuse_case },
        GradCase { name: "full network", tolerance: NETWORK_TOLERANCE, run: network_case },
    ]
}

/// Every scenario, ops first.
pub fn gradient_cases() -> Vec<GradCase> {
    op_cases().into_iter().chain(module_cases()).collect()
}
