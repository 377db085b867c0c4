//! Shared fixtures for the kernel and network benchmarks.

use hfur_core::codec::{degrade, synth_clip, DegradeConfig, DegradedClip, SynthKind};
use hfur_core::verify::random;
use hfur_core::Tensor;

/// Degraded 64x64, five-frame moving-edge clip at QP 37.
pub fn overfit_clip() -> DegradedClip {
    let frames = synth_clip(SynthKind::MovingEdge, 5, 64, 64, 1).unwrap();
    degrade(&frames, &DegradeConfig::cqp(37)).unwrap()
}

/// Feature map `[1, channels, size, size]` with entries in [-1, 1).
pub fn features(channels: usize, size: usize, seed: u64) -> Tensor {
    random(&[1, channels, size, size], seed)
}
