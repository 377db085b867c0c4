//! Restoration network: transformer blocks, implicit frequency upsampling,
//! hierarchical refinement, and the training loop.

pub mod hir;
pub mod impfrequp;
pub mod layers;
pub mod net;
pub mod train;

pub use hir::{freq_split, Hir, HirConfig, Refine};
pub use impfrequp::{
    estimate_delta, qam_irm_apply, ImpFreqUp, ImpFreqUpConfig, LearnableAffine, Priors, TableScaling, Upsampler,
};
pub use layers::{Conv, Init, LayerNorm, ParamBuilder, TfBlock};
pub use net::{charbonnier_loss, enhance_frames, init_params, Network, NetworkConfig, SPATIAL_MULTIPLE};
pub use train::{evaluate, train, train_with, Adam, LogRow, TrainConfig, TrainLog};
