//! Dense tensors and reverse-mode differentiation over a closed op set:
//! convolution (including depthwise), pooling, pixel shuffles, attention,
//! layer normalization, elementwise arithmetic, matmul, concat and slice.

mod attention;
pub mod checkpoint;
mod conv;
mod gemm;
pub mod gradcheck;
mod params;
mod spatial;
mod tape;
mod tensor;

pub use attention::AttentionSpan;
pub use checkpoint::Checkpoint;
pub use conv::Padding;
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var, DEFAULT_MAX_TOKENS};
pub use tensor::Tensor;
