//! Compressed-video enhancement in the frequency domain.
//!
//! The crate bundles a small reverse-mode tensor engine, exact block-DCT
//! machinery (orthonormal bases, half-pel inverse transforms, quantization
//! tables), a quantization simulator with full ground truth, and a
//! multi-scale restoration network built from implicit frequency upsampling
//! and hierarchical two-branch refinement.

pub mod codec;
pub mod dct;
pub mod engine;
pub mod error;
pub mod nn;
pub mod verify;

pub use engine::{AttentionSpan, Checkpoint, Padding, ParamId, ParamStore, Tape, Tensor, Var};
pub use error::{Error, Result};
