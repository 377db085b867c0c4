//! Central finite-difference verification of tape gradients.
//!
//! The scalar under test is `sum(f(..) ⊙ R)` for a fixed pseudo-random `R`,
//! so every output element contributes with a distinct weight. Numerical
//! derivatives only ever evaluate the forward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference half step.
    pub step: f64,
    /// Check at most this many randomly chosen entries per tensor.
    pub max_entries_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-4, max_entries_per_tensor: None, seed: 0x5eed }
    }
}

#[derive(Clone, Debug)]
pub struct Mismatch {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest `|a - n| / max(|a|, |n|, floor)` over checked entries, where
    /// `floor` is 1e-3 of the tensor's largest gradient magnitude (at least 1e-6).
    pub max_rel_err: f64,
    pub worst: Option<Mismatch>,
    pub checked: usize,
}

/// Checks gradients with respect to every trainable tensor of `store`.
pub fn check_params<F>(store: &ParamStore, f: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let weights = {
        let mut tape = Tape::new();
        let y = f(&mut tape, store)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let shape = tape.shape(y).to_vec();
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    };
    let loss_of = |tape: &mut Tape, store: &ParamStore| -> Result<Var> {
        let y = f(tape, store)?;
        let r = tape.constant(weights.clone());
        let p = tape.mul(y, r)?;
        Ok(tape.sum(p))
    };

    let mut tape = Tape::new();
    let loss = loss_of(&mut tape, store)?;
    let mut analytic = store.clone();
    analytic.zero_grad();
    tape.backward(loss)?.accumulate_into(&mut analytic);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xabcdef);
    let mut probe = store.clone();
    let mut report = GradCheckReport { max_rel_err: 0.0, worst: None, checked: 0 };
    let ids: Vec<ParamId> = store.ids().filter(|&id| store.get(id).requires_grad()).collect();
    for id in ids {
        let n = store.get(id).numel();
        let zeros = vec![0.0; n];
        let a = analytic.get(id).grad().unwrap_or(&zeros).to_vec();
        let mut idx: Vec<usize> = (0..n).collect();
        if let Some(k) = opts.max_entries_per_tensor {
            if n > k {
                // partial Fisher-Yates
                for i in 0..k {
                    let j = rng.gen_range(i..n);
                    idx.swap(i, j);
                }
                idx.truncate(k);
            }
        }
        let mut numeric = Vec::with_capacity(idx.len());
        for &i in &idx {
            let orig = store.get(id).data()[i];
            let eval = |probe: &mut ParamStore, v: f64| -> Result<f64> {
                probe.get_mut(id).data_mut()[i] = v;
                let mut t = Tape::new();
                let l = loss_of(&mut t, probe)?;
                Ok(t.value(l).data()[0])
            };
            let plus = eval(&mut probe, orig + opts.step)?;
            let minus = eval(&mut probe, orig - opts.step)?;
            probe.get_mut(id).data_mut()[i] = orig;
            numeric.push((plus - minus) / (2.0 * opts.step));
        }
        let scale = idx.iter().zip(&numeric).map(|(&i, nv)| a[i].abs().max(nv.abs())).fold(0.0, f64::max);
        let floor = (1e-3 * scale).max(1e-6);
        for (&i, &nv) in idx.iter().zip(&numeric) {
            let err = (a[i] - nv).abs() / a[i].abs().max(nv.abs()).max(floor);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst =
                    Some(Mismatch { tensor: store.name(id).to_string(), index: i, analytic: a[i], numeric: nv });
            }
        }
    }
    Ok(report)
}

/// Checks gradients with respect to plain input tensors.
pub fn check_inputs<F>(inputs: &[Tensor], f: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let t = Tensor::new(t.shape().to_vec(), t.data().to_vec()).unwrap();
            store.add(format!("input{i}"), t)
        })
        .collect();
    check_params(
        &store,
        |tape, store| {
            let vars: Vec<Var> = ids.iter().map(|&id| tape.param(store, id)).collect();
            f(tape, &vars)
        },
        opts,
    )
}
