//! 8-bit frame storage: binary PGM (P5) sequences and raw planar YUV.
//!
//! Samples are quantized as `round(clamp(v, 0, 1) * 255)` on write and
//! scaled by `1 / maxval` on read.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::frame::{Frame, Layout, Plane};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameFormat {
    /// Directory of `frame_NNNN.pgm` files, luma only.
    PgmSequence,
    /// Single file of concatenated planar frames.
    YuvRaw,
}

/// Geometry a raw YUV file cannot describe itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawGeometry {
    pub width: usize,
    pub height: usize,
    pub layout: Layout,
}

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:04}.pgm")
}

pub fn read_frames(path: &Path, format: FrameFormat, geometry: Option<RawGeometry>) -> Result<Vec<Frame>> {
    match format {
        FrameFormat::PgmSequence => read_pgm_sequence(path),
        FrameFormat::YuvRaw => {
            let g = geometry
                .ok_or_else(|| Error::Config("raw YUV input needs explicit width, height and layout".into()))?;
            read_yuv(path, g)
        }
    }
}

pub fn write_frames(path: &Path, format: FrameFormat, frames: &[Frame]) -> Result<()> {
    match format {
        FrameFormat::PgmSequence => write_pgm_sequence(path, frames),
        FrameFormat::YuvRaw => write_yuv(path, frames),
    }
}

pub fn encode_pgm(p: &Plane) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", p.width, p.height).into_bytes();
    out.extend(p.data.iter().map(|&v| to_u8(v)));
    out
}

pub fn decode_pgm(bytes: &[u8], origin: &Path) -> Result<Plane> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(origin, "bad magic: expected binary PGM (P5)"));
    }
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(origin, "malformed PGM header"))?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(origin, format!("unsupported maxval {maxval}")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(origin, "malformed PGM header"));
    }
    pos += 1;
    let bps = if maxval > 255 { 2 } else { 1 };
    let need = width * height * bps;
    let payload = &bytes[pos..];
    if payload.len() != need {
        return Err(Error::format(
            origin,
            format!("truncated payload: expected {need} bytes for {width}x{height}, found {}", payload.len()),
        ));
    }
    let scale = 1.0 / maxval as f64;
    let data = if bps == 1 {
        payload.iter().map(|&b| b as f64 * scale).collect()
    } else {
        payload.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale).collect()
    };
    Plane::new(width, height, data)
}

pub fn read_pgm_sequence(dir: &Path) -> Result<Vec<Frame>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("frame_") && n.ends_with(".pgm"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::format(dir, "no frame_NNNN.pgm files found"));
    }
    files
        .iter()
        .map(|f| {
            let bytes = fs::read(f).map_err(|e| Error::io(f, e))?;
            let p = decode_pgm(&bytes, f)?;
            Frame::new(Layout::Mono, p.width, p.height, vec![p])
        })
        .collect()
}

pub fn write_pgm_sequence(dir: &Path, frames: &[Frame]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        if f.layout != Layout::Mono {
            return Err(Error::Config(format!(
                "PGM sequences hold luma only; frame {i} is {:?}, write it as raw YUV",
                f.layout
            )));
        }
        let path = dir.join(frame_file_name(i));
        fs::write(&path, encode_pgm(f.luma())).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn read_yuv(path: &Path, g: RawGeometry) -> Result<Vec<Frame>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let per_frame = g.layout.frame_bytes(g.width, g.height);
    if per_frame == 0 || bytes.is_empty() || bytes.len() % per_frame != 0 {
        return Err(Error::format(
            path,
            format!(
                "file holds {} bytes, not a positive multiple of {per_frame} ({:?} {}x{})",
                bytes.len(),
                g.layout,
                g.width,
                g.height
            ),
        ));
    }
    bytes
        .chunks_exact(per_frame)
        .map(|chunk| {
            let mut off = 0;
            let planes = (0..g.layout.plane_count())
                .map(|i| {
                    let (w, h) = g.layout.plane_dims(i, g.width, g.height);
                    let data = chunk[off..off + w * h].iter().map(|&b| b as f64 / 255.0).collect();
                    off += w * h;
                    Plane::new(w, h, data)
                })
                .collect::<Result<Vec<_>>>()?;
            Frame::new(g.layout, g.width, g.height, planes)
        })
        .collect()
}

pub fn encode_yuv(frames: &[Frame]) -> Vec<u8> {
    frames.iter().flat_map(|f| f.planes.iter().flat_map(|p| p.data.iter().map(|&v| to_u8(v)))).collect()
}

pub fn write_yuv(path: &Path, frames: &[Frame]) -> Result<()> {
    if let Some(f) = frames.first() {
        if frames.iter().any(|g| !g.same_geometry(f)) {
            return Err(Error::Contract("raw YUV frames must share one geometry".into()));
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode_yuv(frames)).map_err(|e| Error::io(path, e))
}

/// Writes `values` as consecutive little-endian f64.
pub fn write_f64_sidecar(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(f64::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f64_sidecar(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::format(path, format!("{} bytes is not a whole number of f64", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}
