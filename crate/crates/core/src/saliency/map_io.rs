//! Saliency map files.
//!
//! Packed binary layout (all integers little-endian):
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 8    | magic `CBSALMAP`                       |
//! | 8      | 4    | width (u32)                            |
//! | 12     | 4    | height (u32)                           |
//! | 16     | 4    | frame count (u32)                      |
//! | 20     | ...  | frames in order, each `width * height` |
//! |        |      | row-major f32 values                   |
//!
//! Frame `i` of the file carries frame index `i`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{SaliencyError, SaliencyMap};
use crate::field::Field;
use crate::scalar::Scalar;

pub const MAP_MAGIC: &[u8; 8] = b"CBSALMAP";
pub const MAP_HEADER_LEN: usize = 20;

fn map_err(path: &Path, reason: impl Into<String>) -> SaliencyError {
    SaliencyError::MapFile {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Streaming writer; the frame count is fixed in the header up front.
pub struct MapFileWriter {
    out: BufWriter<File>,
    width: usize,
    height: usize,
    remaining: usize,
}

impl MapFileWriter {
    pub fn create(path: impl AsRef<Path>, width: usize, height: usize, frames: usize) -> Result<Self, SaliencyError> {
        let mut out = BufWriter::new(File::create(path.as_ref())?);
        out.write_all(MAP_MAGIC)?;
        for v in [width, height, frames] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        Ok(Self {
            out,
            width,
            height,
            remaining: frames,
        })
    }

    pub fn write<T: Scalar>(&mut self, map: &Field<T>) -> Result<(), SaliencyError> {
        if (map.width(), map.height()) != (self.width, self.height) || self.remaining == 0 {
            return Err(SaliencyError::Config("map does not fit the file header".into()));
        }
        for &v in map.as_slice() {
            self.out.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
        self.remaining -= 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), SaliencyError> {
        if self.remaining != 0 {
            return Err(SaliencyError::Config(format!("{} frames missing", self.remaining)));
        }
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_map_file<T: Scalar>(path: impl AsRef<Path>, maps: &[SaliencyMap<T>]) -> Result<(), SaliencyError> {
    let (w, h) = maps
        .first()
        .map(|m| (m.values.width(), m.values.height()))
        .unwrap_or((0, 0));
    let mut wr = MapFileWriter::create(path, w, h, maps.len())?;
    for m in maps {
        wr.write(&m.values)?;
    }
    wr.finish()
}

pub fn read_map_file(path: impl AsRef<Path>) -> Result<Vec<SaliencyMap<f32>>, SaliencyError> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; MAP_HEADER_LEN];
    r.read_exact(&mut header).map_err(|_| map_err(path, "short header"))?;
    if &header[..8] != MAP_MAGIC {
        return Err(map_err(path, "bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap()) as usize;
    let (w, h, n) = (word(8), word(12), word(16));
    let mut buf = vec![0u8; w * h * 4];
    let mut maps = Vec::with_capacity(n);
    for frame_index in 0..n {
        r.read_exact(&mut buf)
            .map_err(|_| map_err(path, format!("truncated at frame {frame_index}")))?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        maps.push(SaliencyMap {
            frame_index,
            values: Field::from_vec(w, h, data),
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(map_err(path, "trailing data"));
    }
    Ok(maps)
}

/// Binary 8-bit PGM (P5); values are clamped to [0, 1] and scaled to 0..255.
pub fn write_pgm<T: Scalar>(path: impl AsRef<Path>, field: &Field<T>) -> Result<(), SaliencyError> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    write!(out, "P5\n{} {}\n255\n", field.width(), field.height())?;
    let bytes: Vec<u8> = field
        .as_slice()
        .iter()
        .map(|&v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}
