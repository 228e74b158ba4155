//! Deterministic synthetic sequences: flat background, optional luma noise,
//! and constant-velocity rectangles.
//!
//! Generator specs are TOML documents:
//!
//! ```toml
//! seed = 7
//! noise = 2            # uniform luma noise amplitude, code values
//!
//! [geometry]
//! width = 64
//! height = 64
//! bit_depth = 8
//! fps = 24.0
//! num_frames = 48
//!
//! [background]
//! y = 100
//! u = 128
//! v = 128
//!
//! [[rect]]
//! x = 4                # top-left at frame 0
//! y = 20
//! width = 12
//! height = 12
//! vx = 1               # pixels per frame
//! vy = 0
//! color = { y = 82, u = 90, v = 240 }
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Frame, VideoError, VideoGeometry, VideoSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YuvColor {
    pub y: u16,
    pub u: u16,
    pub v: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingRect {
    pub x: i64,
    pub y: i64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub vx: i64,
    #[serde(default)]
    pub vy: i64,
    pub color: YuvColor,
}

impl MovingRect {
    pub fn origin_at(&self, frame: usize) -> (i64, i64) {
        (self.x + self.vx * frame as i64, self.y + self.vy * frame as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub geometry: VideoGeometry,
    pub background: YuvColor,
    #[serde(default, rename = "rect")]
    pub rects: Vec<MovingRect>,
    #[serde(default)]
    pub noise: u16,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self, VideoError> {
        toml::from_str(text).map_err(|e| VideoError::Spec(e.to_string()))
    }

    /// A small default scene: mid-gray background, a warm square drifting
    /// right and a cool square drifting down (static when the sequence is
    /// too long for them to stay inside the frame).
    pub fn demo(geometry: VideoGeometry) -> Self {
        let shift = geometry.bit_depth as u32 - 8;
        let c = |y: u16, u: u16, v: u16| YuvColor {
            y: y << shift,
            u: u << shift,
            v: v << shift,
        };
        let side = (geometry.width.min(geometry.height) / 5).max(2);
        let room = |extent: usize, start: usize| extent.saturating_sub(start + side);
        let n = geometry.num_frames.saturating_sub(1);
        let vx = (room(geometry.width, side) >= n) as i64;
        let vy = (room(geometry.height, side / 2) >= n) as i64;
        Self {
            geometry,
            background: c(126, 128, 128),
            rects: vec![
                MovingRect {
                    x: side as i64,
                    y: (geometry.height / 2) as i64,
                    width: side,
                    height: side,
                    vx,
                    vy: 0,
                    color: c(63, 102, 240),
                },
                MovingRect {
                    x: (geometry.width - 2 * side) as i64,
                    y: (side / 2) as i64,
                    width: side,
                    height: side,
                    vx: 0,
                    vy,
                    color: c(41, 240, 110),
                },
            ],
            noise: 2 << shift,
            seed: 1,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("synth spec serializes")
    }

    pub fn validate(&self) -> Result<(), VideoError> {
        let g = &self.geometry;
        g.validate()?;
        let max = g.max_sample();
        let colors = std::iter::once(&self.background).chain(self.rects.iter().map(|r| &r.color));
        for c in colors {
            if c.y > max || c.u > max || c.v > max {
                return Err(VideoError::Spec(format!("color {c:?} exceeds {}-bit range", g.bit_depth)));
            }
        }
        for (i, r) in self.rects.iter().enumerate() {
            if r.width == 0 || r.height == 0 {
                return Err(VideoError::Spec(format!("rect {i} has zero size")));
            }
            for f in 0..g.num_frames {
                let (x, y) = r.origin_at(f);
                if x < 0 || y < 0 || x as usize + r.width > g.width || y as usize + r.height > g.height {
                    return Err(VideoError::Spec(format!(
                        "rect {i} leaves the frame at frame {f} (origin {x},{y})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Renders the sequence described by `spec`. Pure in `spec` (including its seed).
pub fn synth_video(spec: &SynthSpec) -> Result<VideoSequence, VideoError> {
    spec.validate()?;
    let g = spec.geometry;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let max = g.max_sample() as i32;
    let cw = g.chroma_width();

    let frames = (0..g.num_frames)
        .map(|index| {
            let bg = spec.background;
            let mut frame = Frame::filled(index, &g, bg.y, bg.u, bg.v);
            for r in &spec.rects {
                let (x0, y0) = r.origin_at(index);
                let (x0, y0) = (x0 as usize, y0 as usize);
                for yy in y0..y0 + r.height {
                    frame.y[yy * g.width + x0..yy * g.width + x0 + r.width].fill(r.color.y);
                }
                // chroma sites whose co-sited luma sample lies inside the rect
                for cy in y0.div_ceil(2)..(y0 + r.height).div_ceil(2) {
                    for cx in x0.div_ceil(2)..(x0 + r.width).div_ceil(2) {
                        frame.u[cy * cw + cx] = r.color.u;
                        frame.v[cy * cw + cx] = r.color.v;
                    }
                }
            }
            if spec.noise > 0 {
                let amp = spec.noise as i32;
                for s in frame.y.iter_mut() {
                    let n = rng.random_range(-amp..=amp);
                    *s = (*s as i32 + n).clamp(0, max) as u16;
                }
            }
            frame
        })
        .collect();

    Ok(VideoSequence { geometry: g, frames })
}
