//! Raw planar 4:2:0 video: geometry, frames, file I/O, synthetic sources
//! and conversion to CIELAB.

pub(crate) mod color;
mod synth;
mod yuv;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use color::{ycbcr_to_lab, yuv_to_lab, ColorRange, LabFrame};
pub use synth::{synth_video, MovingRect, SynthSpec};
pub use yuv::{read_yuv, write_yuv, YuvReader, YuvWriter};

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("{path}: truncated file at frame {frame} (expected {expected} bytes, file has {actual})")]
    Truncated {
        path: PathBuf,
        frame: usize,
        expected: u64,
        actual: u64,
    },
    #[error("{path}: file has {actual} bytes, expected {expected} for the given geometry")]
    TrailingData {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("malformed input: frame {frame}, plane {plane}: sample {value} exceeds {bit_depth}-bit range")]
    SampleRange {
        frame: usize,
        plane: Plane,
        value: u16,
        bit_depth: u8,
    },
    #[error("frame {frame}: {reason}")]
    FrameShape { frame: usize, reason: String },
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plane {
    Y,
    U,
    V,
}

impl std::fmt::Display for Plane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Plane::Y => "Y",
            Plane::U => "U",
            Plane::V => "V",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChromaFormat {
    #[default]
    #[serde(rename = "420")]
    Yuv420,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoGeometry {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub fps: f64,
    pub num_frames: usize,
    #[serde(default)]
    pub chroma: ChromaFormat,
}

impl VideoGeometry {
    pub fn new(width: usize, height: usize, bit_depth: u8, fps: f64, num_frames: usize) -> Result<Self, VideoError> {
        let g = Self {
            width,
            height,
            bit_depth,
            fps,
            num_frames,
            chroma: ChromaFormat::Yuv420,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), VideoError> {
        if self.width < 16 || self.height < 16 || self.width % 2 != 0 || self.height % 2 != 0 {
            return Err(VideoError::Geometry(format!(
                "dimensions {}x{} must be even and at least 16",
                self.width, self.height
            )));
        }
        if self.bit_depth != 8 && self.bit_depth != 10 {
            return Err(VideoError::Geometry(format!("unsupported bit depth {}", self.bit_depth)));
        }
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(VideoError::Geometry(format!("fps must be positive, got {}", self.fps)));
        }
        if self.num_frames == 0 {
            return Err(VideoError::Geometry("at least one frame required".into()));
        }
        Ok(())
    }

    pub fn chroma_width(&self) -> usize {
        self.width / 2
    }

    pub fn chroma_height(&self) -> usize {
        self.height / 2
    }

    pub fn bytes_per_sample(&self) -> usize {
        if self.bit_depth > 8 {
            2
        } else {
            1
        }
    }

    pub fn max_sample(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }

    pub fn samples_per_frame(&self) -> usize {
        self.width * self.height + 2 * self.chroma_width() * self.chroma_height()
    }

    pub fn frame_byte_size(&self) -> u64 {
        (self.samples_per_frame() * self.bytes_per_sample()) as u64
    }

    pub fn file_byte_size(&self) -> u64 {
        self.frame_byte_size() * self.num_frames as u64
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.num_frames as f64 / self.fps
    }
}

/// One decoded 4:2:0 picture. Samples are stored as `u16` for both 8- and
/// 10-bit content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub y: Vec<u16>,
    pub u: Vec<u16>,
    pub v: Vec<u16>,
}

impl Frame {
    pub fn filled(index: usize, geometry: &VideoGeometry, y: u16, u: u16, v: u16) -> Self {
        let cw = geometry.chroma_width();
        let ch = geometry.chroma_height();
        Self {
            index,
            width: geometry.width,
            height: geometry.height,
            y: vec![y; geometry.width * geometry.height],
            u: vec![u; cw * ch],
            v: vec![v; cw * ch],
        }
    }

    pub fn plane(&self, plane: Plane) -> &[u16] {
        match plane {
            Plane::Y => &self.y,
            Plane::U => &self.u,
            Plane::V => &self.v,
        }
    }

    /// Checks plane sizes and sample ranges against `geometry`.
    pub fn validate(&self, geometry: &VideoGeometry) -> Result<(), VideoError> {
        if self.width != geometry.width || self.height != geometry.height {
            return Err(VideoError::FrameShape {
                frame: self.index,
                reason: format!(
                    "frame is {}x{}, geometry is {}x{}",
                    self.width, self.height, geometry.width, geometry.height
                ),
            });
        }
        let chroma = geometry.chroma_width() * geometry.chroma_height();
        for (plane, expected) in [
            (Plane::Y, geometry.width * geometry.height),
            (Plane::U, chroma),
            (Plane::V, chroma),
        ] {
            let data = self.plane(plane);
            if data.len() != expected {
                return Err(VideoError::FrameShape {
                    frame: self.index,
                    reason: format!("plane {plane} has {} samples, expected {expected}", data.len()),
                });
            }
            let max = geometry.max_sample();
            if let Some(&value) = data.iter().find(|&&s| s > max) {
                return Err(VideoError::SampleRange {
                    frame: self.index,
                    plane,
                    value,
                    bit_depth: geometry.bit_depth,
                });
            }
        }
        Ok(())
    }
}

/// A fully materialized sequence. Real inputs go through [`YuvReader`]
/// instead; this is what the synthetic generator produces.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    pub geometry: VideoGeometry,
    pub frames: Vec<Frame>,
}
