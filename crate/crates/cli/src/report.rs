//! Evaluation reports: per-frame, per-clip and per-class PSNR statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::Result;
use hfur_core::codec::{psnr_sd, ClipScores};

/// Scores of one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipReport {
    pub name: String,
    pub class: String,
    pub scores: ClipScores,
}

impl ClipReport {
    /// Frame-level PSNR SD of the enhanced clip; 0 for single-frame clips.
    pub fn sd_enhanced(&self) -> f64 {
        psnr_sd(&self.scores.psnr_enhanced).unwrap_or(0.0)
    }

    pub fn sd_degraded(&self) -> f64 {
        psnr_sd(&self.scores.psnr_degraded).unwrap_or(0.0)
    }
}

pub const CSV_HEADER: &str = "scope,name,class,frame,psnr_degraded,psnr_enhanced,delta_psnr,sd_degraded,sd_enhanced";

/// Class-level means over clips, in class order.
pub fn class_means(clips: &[ClipReport]) -> Vec<(String, [f64; 5])> {
    let mut groups: BTreeMap<&str, Vec<&ClipReport>> = BTreeMap::new();
    for c in clips {
        groups.entry(&c.class).or_default().push(c);
    }
    groups
        .into_iter()
        .map(|(class, members)| {
            let n = members.len() as f64;
            let mean = |f: &dyn Fn(&ClipReport) -> f64| members.iter().map(|c| f(c)).sum::<f64>() / n;
            let row = [
                mean(&|c| c.scores.mean_degraded()),
                mean(&|c| c.scores.mean_enhanced()),
                mean(&|c| c.scores.mean_delta()),
                mean(&|c| c.sd_degraded()),
                mean(&|c| c.sd_enhanced()),
            ];
            (class.to_string(), row)
        })
        .collect()
}

/// Rows with scope `frame`, `clip` and `class`; clip and class rows carry means.
pub fn to_csv(clips: &[ClipReport]) -> Result<String> {
    let mut s = String::new();
    writeln!(s, "{CSV_HEADER}")?;
    for c in clips {
        let sc = &c.scores;
        for (i, d) in sc.per_frame_delta().iter().enumerate() {
            writeln!(
                s,
                "frame,{},{},{i},{:?},{:?},{d:?},,",
                c.name, c.class, sc.psnr_degraded[i], sc.psnr_enhanced[i]
            )?;
        }
    }
    for c in clips {
        let sc = &c.scores;
        writeln!(
            s,
            "clip,{},{},,{:?},{:?},{:?},{:?},{:?}",
            c.name,
            c.class,
            sc.mean_degraded(),
            sc.mean_enhanced(),
            sc.mean_delta(),
            c.sd_degraded(),
            c.sd_enhanced()
        )?;
    }
    for (class, r) in class_means(clips) {
        writeln!(s, "class,{class},{class},,{:?},{:?},{:?},{:?},{:?}", r[0], r[1], r[2], r[3], r[4])?;
    }
    Ok(s)
}

pub fn to_text(clips: &[ClipReport]) -> Result<String> {
    let mut s = String::new();
    for c in clips {
        let sc = &c.scores;
        writeln!(s, "clip {} (class {})", c.name, c.class)?;
        writeln!(s, "  frame  PSNR degraded  PSNR enhanced  ΔPSNR")?;
        for (i, d) in sc.per_frame_delta().iter().enumerate() {
            writeln!(s, "  {i:5}  {:13.4}  {:13.4}  {d:+.4}", sc.psnr_degraded[i], sc.psnr_enhanced[i])?;
        }
        writeln!(
            s,
            "  mean ΔPSNR {:+.4} dB, PSNR SD {:.4} dB (degraded {:.4} dB)",
            sc.mean_delta(),
            c.sd_enhanced(),
            c.sd_degraded()
        )?;
    }
    let classes = class_means(clips);
    if clips.len() > 1 {
        writeln!(s, "class  mean ΔPSNR  PSNR SD")?;
        for (class, r) in classes {
            writeln!(s, "{class}  {:+.4}  {:.4}", r[2], r[4])?;
        }
    }
    Ok(s)
}
