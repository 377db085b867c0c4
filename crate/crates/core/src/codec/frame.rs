use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plane arrangement of a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Luma only.
    Mono,
    /// Y, Cb, Cr with chroma at half width and height.
    Yuv420,
    /// Y, Cb, Cr at full resolution.
    Yuv444,
}

impl Layout {
    pub fn plane_count(self) -> usize {
        match self {
            Layout::Mono => 1,
            _ => 3,
        }
    }

    /// Dimensions of plane `i` for a `width x height` frame.
    pub fn plane_dims(self, i: usize, width: usize, height: usize) -> (usize, usize) {
        match (self, i) {
            (Layout::Yuv420, 1 | 2) => (width / 2, height / 2),
            _ => (width, height),
        }
    }

    /// Bytes per frame at 8 bits per sample.
    pub fn frame_bytes(self, width: usize, height: usize) -> usize {
        (0..self.plane_count())
            .map(|i| {
                let (w, h) = self.plane_dims(i, width, height);
                w * h
            })
            .sum()
    }

    /// Required multiple of the frame dimensions for 8x8 block coding.
    pub fn block_multiple(self) -> usize {
        match self {
            Layout::Yuv420 => 16,
            _ => 8,
        }
    }
}

/// One row-major image channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(
                "plane",
                format!("{width}x{height} plane needs {} samples, got {}", width * height, data.len()),
            ));
        }
        Ok(Plane { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Plane { width, height, data: vec![0.0; width * height] }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn clamped(&self) -> Plane {
        Plane { width: self.width, height: self.height, data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect() }
    }
}

/// A video frame with values nominally in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub layout: Layout,
    pub width: usize,
    pub height: usize,
    pub planes: Vec<Plane>,
}

impl Frame {
    pub fn new(layout: Layout, width: usize, height: usize, planes: Vec<Plane>) -> Result<Self> {
        if planes.len() != layout.plane_count() {
            return Err(Error::shape(
                "frame",
                format!("{layout:?} needs {} planes, got {}", layout.plane_count(), planes.len()),
            ));
        }
        if layout == Layout::Yuv420 && (width % 2 != 0 || height % 2 != 0) {
            return Err(Error::shape("frame", format!("4:2:0 needs even dims, got {width}x{height}")));
        }
        for (i, p) in planes.iter().enumerate() {
            let want = layout.plane_dims(i, width, height);
            if (p.width, p.height) != want {
                return Err(Error::shape(
                    "frame",
                    format!("plane {i} is {}x{}, expected {}x{}", p.width, p.height, want.0, want.1),
                ));
            }
        }
        Ok(Frame { layout, width, height, planes })
    }

    pub fn mono(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Frame::new(Layout::Mono, width, height, vec![Plane::new(width, height, data)?])
    }

    pub fn luma(&self) -> &Plane {
        &self.planes[0]
    }

    pub fn same_geometry(&self, other: &Frame) -> bool {
        self.layout == other.layout && self.width == other.width && self.height == other.height
    }

    pub fn clamped(&self) -> Frame {
        Frame {
            layout: self.layout,
            width: self.width,
            height: self.height,
            planes: self.planes.iter().map(Plane::clamped).collect(),
        }
    }

    pub fn sample_count(&self) -> usize {
        self.planes.iter().map(|p| p.data.len()).sum()
    }
}
