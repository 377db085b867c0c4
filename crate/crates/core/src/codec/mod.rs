//! Compression simulator, frame storage and quality metrics.

mod degrade;
mod frame;
pub mod io;
mod metrics;
mod synth;

pub use degrade::{coef_step, degrade, extract_block, DegradeConfig, DegradedClip, FrameTruth, Jitter, PlaneTruth};
pub use frame::{Frame, Layout, Plane};
pub use metrics::{delta_psnr, mse, psnr, psnr_sd, ClipScores, PSNR_CAP};
pub use synth::{synth_clip, SynthKind};
