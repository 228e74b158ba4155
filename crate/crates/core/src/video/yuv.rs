// Planar Y, U, V per frame. 8-bit content uses one byte per sample; 10-bit
// content uses two bytes, little-endian (ffmpeg yuv420p10le).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{Frame, Plane, VideoError, VideoGeometry};

/// Streaming frame reader. Holds at most one frame in memory.
pub struct YuvReader {
    path: PathBuf,
    geometry: VideoGeometry,
    reader: BufReader<File>,
    file_len: u64,
    next: usize,
    buf: Vec<u8>,
    failed: bool,
}

pub fn read_yuv(path: impl AsRef<Path>, geometry: VideoGeometry) -> Result<YuvReader, VideoError> {
    YuvReader::open(path, geometry)
}

impl YuvReader {
    pub fn open(path: impl AsRef<Path>, geometry: VideoGeometry) -> Result<Self, VideoError> {
        geometry.validate()?;
        let path = path.as_ref().to_path_buf();
        let io = |source| VideoError::Io {
            path: path.clone(),
            source,
        };
        let file = File::open(&path).map_err(io)?;
        let file_len = file.metadata().map_err(io)?.len();
        let expected = geometry.file_byte_size();
        if file_len > expected {
            return Err(VideoError::TrailingData {
                path,
                expected,
                actual: file_len,
            });
        }
        Ok(Self {
            buf: vec![0; geometry.frame_byte_size() as usize],
            path,
            geometry,
            reader: BufReader::new(file),
            file_len,
            next: 0,
            failed: false,
        })
    }

    pub fn geometry(&self) -> &VideoGeometry {
        &self.geometry
    }

    fn read_frame(&mut self) -> Result<Frame, VideoError> {
        let index = self.next;
        let needed = self.geometry.frame_byte_size() * (index as u64 + 1);
        if self.file_len < needed {
            return Err(VideoError::Truncated {
                path: self.path.clone(),
                frame: index,
                expected: self.geometry.file_byte_size(),
                actual: self.file_len,
            });
        }
        self.reader.read_exact(&mut self.buf).map_err(|source| VideoError::Io {
            path: self.path.clone(),
            source,
        })?;

        let g = self.geometry;
        let luma = g.width * g.height;
        let chroma = g.chroma_width() * g.chroma_height();
        let samples = decode_samples(&self.buf, g.bytes_per_sample());
        let frame = Frame {
            index,
            width: g.width,
            height: g.height,
            y: samples[..luma].to_vec(),
            u: samples[luma..luma + chroma].to_vec(),
            v: samples[luma + chroma..].to_vec(),
        };
        check_range(&frame, &g)?;
        Ok(frame)
    }
}

impl Iterator for YuvReader {
    type Item = Result<Frame, VideoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.next >= self.geometry.num_frames {
            return None;
        }
        let r = self.read_frame();
        match r {
            Ok(_) => self.next += 1,
            Err(_) => self.failed = true,
        }
        Some(r)
    }
}

fn decode_samples(bytes: &[u8], bytes_per_sample: usize) -> Vec<u16> {
    if bytes_per_sample == 1 {
        bytes.iter().map(|&b| b as u16).collect()
    } else {
        bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect()
    }
}

fn check_range(frame: &Frame, g: &VideoGeometry) -> Result<(), VideoError> {
    let max = g.max_sample();
    for plane in [Plane::Y, Plane::U, Plane::V] {
        if let Some(&value) = frame.plane(plane).iter().find(|&&s| s > max) {
            return Err(VideoError::SampleRange {
                frame: frame.index,
                plane,
                value,
                bit_depth: g.bit_depth,
            });
        }
    }
    Ok(())
}

pub struct YuvWriter {
    path: PathBuf,
    geometry: VideoGeometry,
    writer: BufWriter<File>,
    written: usize,
}

impl YuvWriter {
    pub fn create(path: impl AsRef<Path>, geometry: VideoGeometry) -> Result<Self, VideoError> {
        geometry.validate()?;
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|source| VideoError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(Self {
            path,
            geometry,
            writer: BufWriter::new(file),
            written: 0,
        })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<(), VideoError> {
        frame.validate(&self.geometry)?;
        let wide = self.geometry.bytes_per_sample() == 2;
        let mut bytes = Vec::with_capacity(self.geometry.frame_byte_size() as usize);
        for plane in [&frame.y, &frame.u, &frame.v] {
            for &s in plane.iter() {
                if wide {
                    bytes.extend_from_slice(&s.to_le_bytes());
                } else {
                    bytes.push(s as u8);
                }
            }
        }
        self.writer.write_all(&bytes).map_err(|source| VideoError::Io {
            path: self.path.clone(),
            source,
        })?;
        self.written += 1;
        Ok(())
    }

    pub fn frames_written(&self) -> usize {
        self.written
    }

    pub fn finish(mut self) -> Result<(), VideoError> {
        self.writer.flush().map_err(|source| VideoError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

pub fn write_yuv<'a>(
    path: impl AsRef<Path>,
    geometry: VideoGeometry,
    frames: impl IntoIterator<Item = &'a Frame>,
) -> Result<(), VideoError> {
    let mut w = YuvWriter::create(path, geometry)?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish()
}
