//! Spatial ΔQP maps: CCR resampled to a block grid, scaled by the frame's
//! scheduled ΔQP, quantized, and serialized.
//!
//! Canonical text format (ASCII, LF line endings):
//!
//! ```text
//! <blocks_w> <blocks_h>
//! <frame 0: blocks_w*blocks_h space-separated integers, row-major>
//! <frame 1: ...>
//! ```
//!
//! `StaticFirstFrame` mode writes the header and frame 0 only.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::Field;
use crate::resample::resize_bicubic;
use crate::saliency::CcrMap;
use crate::scalar::Scalar;
use crate::schedule::MAX_QP;

#[derive(Debug, Error)]
pub enum RoiError {
    #[error("invalid ROI configuration: {0}")]
    Config(String),
    #[error("ROI parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Block grid of CCR values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid<T> {
    values: Field<T>,
}

impl<T: Scalar> BlockGrid<T> {
    /// Clamps `values` into [0, 1].
    pub fn new(values: Field<T>) -> Self {
        assert!(values.width() >= 1 && values.height() >= 1, "empty block grid");
        Self {
            values: values.map(|v| v.max(T::zero()).min(T::one())),
        }
    }

    /// The single-block map of the frame-only scenario.
    pub fn unit() -> Self {
        Self::new(Field::filled(1, 1, T::one()))
    }

    pub fn blocks_w(&self) -> usize {
        self.values.width()
    }

    pub fn blocks_h(&self) -> usize {
        self.values.height()
    }

    pub fn values(&self) -> &Field<T> {
        &self.values
    }
}

/// Bicubic (Catmull-Rom, edge-clamped, antialiased when shrinking)
/// resampling of a CCR map onto a block grid, clamped to [0, 1].
pub fn resize_ccr<T: Scalar>(ccr: &CcrMap<T>, blocks_w: usize, blocks_h: usize) -> BlockGrid<T> {
    BlockGrid::new(resize_bicubic(&ccr.values, blocks_w, blocks_h, true))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiQpFrame {
    pub frame_index: usize,
    pub blocks_w: usize,
    pub blocks_h: usize,
    /// Row-major ΔQP per block.
    pub values: Vec<i32>,
}

impl RoiQpFrame {
    pub fn get(&self, bx: usize, by: usize) -> i32 {
        self.values[by * self.blocks_w + bx]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }
}

/// `clamp(round(grid * frame_delta), 0, 51 - base_qp)` per block.
pub fn roi_qp_frame<T: Scalar>(
    grid: &BlockGrid<T>,
    frame_delta: i32,
    base_qp: i32,
    frame_index: usize,
) -> Result<RoiQpFrame, RoiError> {
    if !(0..=MAX_QP).contains(&base_qp) {
        return Err(RoiError::Config(format!("base_qp {base_qp} outside [0, {MAX_QP}]")));
    }
    let ceiling = MAX_QP - base_qp;
    let delta = T::lit(frame_delta as f64);
    let values = grid
        .values
        .as_slice()
        .iter()
        .map(|&g| ((g * delta).as_f64().round() as i32).clamp(0, ceiling))
        .collect();
    Ok(RoiQpFrame {
        frame_index,
        blocks_w: grid.blocks_w(),
        blocks_h: grid.blocks_h(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiQpVideoMap {
    blocks_w: usize,
    blocks_h: usize,
    frames: Vec<RoiQpFrame>,
}

impl RoiQpVideoMap {
    pub fn new(frames: Vec<RoiQpFrame>) -> Result<Self, RoiError> {
        let first = frames
            .first()
            .ok_or_else(|| RoiError::Config("ROI map needs at least one frame".into()))?;
        let (bw, bh) = (first.blocks_w, first.blocks_h);
        if bw == 0 || bh == 0 {
            return Err(RoiError::Config("ROI grid dimensions must be positive".into()));
        }
        for (i, f) in frames.iter().enumerate() {
            if (f.blocks_w, f.blocks_h) != (bw, bh) || f.values.len() != bw * bh {
                return Err(RoiError::Config(format!("frame {i} does not match the {bw}x{bh} grid")));
            }
            if f.frame_index != i {
                return Err(RoiError::Config(format!("frame {i} carries index {}", f.frame_index)));
            }
        }
        Ok(Self {
            blocks_w: bw,
            blocks_h: bh,
            frames,
        })
    }

    /// Builds one frame per scheduled ΔQP from per-frame grids.
    pub fn from_grids<T: Scalar>(
        grids: &[BlockGrid<T>],
        deltas: &[i32],
        base_qp: i32,
    ) -> Result<Self, RoiError> {
        if grids.len() != deltas.len() {
            return Err(RoiError::Config(format!(
                "{} grids for {} scheduled frames",
                grids.len(),
                deltas.len()
            )));
        }
        let frames = grids
            .iter()
            .zip(deltas)
            .enumerate()
            .map(|(i, (g, &d))| roi_qp_frame(g, d, base_qp, i))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(frames)
    }

    /// Frame-only scenario: a 1x1 grid per frame carrying the frame ΔQP.
    pub fn frame_only(deltas: &[i32], base_qp: i32) -> Result<Self, RoiError> {
        let unit = BlockGrid::<f64>::unit();
        let frames = deltas
            .iter()
            .enumerate()
            .map(|(i, &d)| roi_qp_frame(&unit, d, base_qp, i))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(frames)
    }

    pub fn blocks_w(&self) -> usize {
        self.blocks_w
    }

    pub fn blocks_h(&self) -> usize {
        self.blocks_h
    }

    pub fn frames(&self) -> &[RoiQpFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn max_value(&self) -> i32 {
        self.frames
            .iter()
            .flat_map(|f| f.values.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiFileMode {
    #[default]
    PerFrame,
    StaticFirstFrame,
}

fn frame_line(frame: &RoiQpFrame) -> String {
    let mut line = String::with_capacity(frame.values.len() * 3);
    for (i, v) in frame.values.iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        line.push_str(&v.to_string());
    }
    line
}

pub fn format_roi(map: &RoiQpVideoMap, mode: RoiFileMode) -> String {
    let mut out = format!("{} {}\n", map.blocks_w, map.blocks_h);
    let frames = match mode {
        RoiFileMode::PerFrame => &map.frames[..],
        RoiFileMode::StaticFirstFrame => &map.frames[..1],
    };
    for f in frames {
        out.push_str(&frame_line(f));
        out.push('\n');
    }
    out
}

pub fn parse_roi(text: &str) -> Result<RoiQpVideoMap, RoiError> {
    let perr = |line: usize, reason: String| RoiError::Parse { line, reason };
    let mut lines: Vec<&str> = text.split('\n').collect();
    // a single trailing newline is the canonical terminator
    if lines.last() == Some(&"") {
        lines.pop();
    }
    let header = lines.first().ok_or_else(|| perr(1, "empty file".into()))?;
    let dims: Vec<&str> = header.split_ascii_whitespace().collect();
    if dims.len() != 2 {
        return Err(perr(1, format!("expected 'blocks_w blocks_h', got '{header}'")));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| perr(1, format!("bad grid dimension '{s}'")))
    };
    let (bw, bh) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    if lines.len() < 2 {
        return Err(perr(2, "no frame lines".into()));
    }
    let mut frames = Vec::with_capacity(lines.len() - 1);
    for (i, line) in lines.iter().enumerate().skip(1) {
        let lineno = i + 1;
        let values = line
            .split_ascii_whitespace()
            .map(|tok| {
                let v: i32 = tok
                    .parse()
                    .map_err(|_| perr(lineno, format!("non-integer token '{tok}'")))?;
                if !(0..=MAX_QP).contains(&v) {
                    return Err(perr(lineno, format!("value {v} outside [0, {MAX_QP}]")));
                }
                Ok(v)
            })
            .collect::<Result<Vec<i32>, _>>()?;
        if values.len() != bw * bh {
            return Err(perr(
                lineno,
                format!("expected {} values for a {bw}x{bh} grid, got {}", bw * bh, values.len()),
            ));
        }
        frames.push(RoiQpFrame {
            frame_index: i - 1,
            blocks_w: bw,
            blocks_h: bh,
            values,
        });
    }
    RoiQpVideoMap::new(frames)
}

pub fn write_roi_file(map: &RoiQpVideoMap, path: impl AsRef<Path>, mode: RoiFileMode) -> Result<(), RoiError> {
    let path = path.as_ref();
    std::fs::write(path, format_roi(map, mode)).map_err(|source| RoiError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_roi_file(path: impl AsRef<Path>) -> Result<RoiQpVideoMap, RoiError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| RoiError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_roi(&text)
}
