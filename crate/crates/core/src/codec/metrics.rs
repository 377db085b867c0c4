use super::frame::Frame;
use crate::error::{Error, Result};

/// Reported PSNR for identical inputs, and the ceiling for all others.
pub const PSNR_CAP: f64 = 99.0;

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    if !a.same_geometry(b) {
        return Err(Error::shape(
            "psnr",
            format!("{:?} {}x{} vs {:?} {}x{}", a.layout, a.width, a.height, b.layout, b.width, b.height),
        ));
    }
    let mut sum = 0.0;
    for (pa, pb) in a.planes.iter().zip(&b.planes) {
        sum += pa.data.iter().zip(&pb.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(sum / a.sample_count() as f64)
}

/// PSNR over all planes jointly, capped at [`PSNR_CAP`].
pub fn psnr(a: &Frame, b: &Frame, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / m).log10()).min(PSNR_CAP))
}

pub fn delta_psnr(source: &Frame, degraded: &Frame, enhanced: &Frame) -> Result<f64> {
    Ok(psnr(source, enhanced, 1.0)? - psnr(source, degraded, 1.0)?)
}

/// Population standard deviation.
pub fn psnr_sd(per_frame: &[f64]) -> Result<f64> {
    if per_frame.len() < 2 {
        return Err(Error::Contract(format!("PSNR spread needs at least 2 frames, got {}", per_frame.len())));
    }
    let n = per_frame.len() as f64;
    let mean = per_frame.iter().sum::<f64>() / n;
    Ok((per_frame.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt())
}

/// Frame-level scores for one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipScores {
    pub psnr_degraded: Vec<f64>,
    pub psnr_enhanced: Vec<f64>,
}

impl ClipScores {
    pub fn compute(source: &[Frame], degraded: &[Frame], enhanced: &[Frame]) -> Result<Self> {
        if source.len() != degraded.len() || source.len() != enhanced.len() || source.is_empty() {
            return Err(Error::Contract(format!(
                "clip lengths differ or are empty: source {}, degraded {}, enhanced {}",
                source.len(),
                degraded.len(),
                enhanced.len()
            )));
        }
        let mut s = ClipScores { psnr_degraded: Vec::new(), psnr_enhanced: Vec::new() };
        for ((src, deg), enh) in source.iter().zip(degraded).zip(enhanced) {
            s.psnr_degraded.push(psnr(src, deg, 1.0)?);
            s.psnr_enhanced.push(psnr(src, enh, 1.0)?);
        }
        Ok(s)
    }

    pub fn per_frame_delta(&self) -> Vec<f64> {
        self.psnr_enhanced.iter().zip(&self.psnr_degraded).map(|(e, d)| e - d).collect()
    }

    /// Mean of per-frame ΔPSNR.
    pub fn mean_delta(&self) -> f64 {
        let d = self.per_frame_delta();
        d.iter().sum::<f64>() / d.len() as f64
    }

    pub fn mean_enhanced(&self) -> f64 {
        self.psnr_enhanced.iter().sum::<f64>() / self.psnr_enhanced.len() as f64
    }

    pub fn mean_degraded(&self) -> f64 {
        self.psnr_degraded.iter().sum::<f64>() / self.psnr_degraded.len() as f64
    }
}
