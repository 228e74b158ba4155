//! HEVC encoder driving: command assembly for a Kvazaar-compatible CLI,
//! child-process execution, and a deterministic stub encoder for tests
//! and dry runs.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roi::{format_roi, RoiError, RoiFileMode, RoiQpFrame, RoiQpVideoMap};
use crate::schedule::{DEFAULT_BASE_QP, MAX_QP};
use crate::video::VideoGeometry;

/// Environment variable naming the encoder binary (path or name on `PATH`).
pub const ENCODER_ENV: &str = "CBVC_ENCODER";
pub const DEFAULT_ENCODER_BINARY: &str = "kvazaar";
pub const STUB_BYTES_PER_FRAME: f64 = 12000.0;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("invalid encode job: {0}")]
    Job(String),
    #[error("encoder binary '{0}' not found")]
    BinaryNotFound(String),
    #[error("encoder exited with {status}: {stderr}")]
    Failed { status: String, stderr: String },
    #[error("encoder produced no output at {0}")]
    EmptyOutput(PathBuf),
    #[error("output {0} is already being written by another job")]
    OutputBusy(PathBuf),
    #[error(transparent)]
    Roi(#[from] RoiError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EncodeError + '_ {
    move |source| EncodeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// How the canonical ROI map is handed to an external encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiVariant {
    /// Each frame as its own `w h` header followed by its values.
    #[default]
    PerFrameHeaders,
    /// The canonical file: one header, one line per frame.
    Canonical,
    /// Header plus frame 0 only, for encoders with a single static map.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalEncoder {
    #[serde(default = "env_binary")]
    pub binary: String,
    #[serde(default)]
    pub roi_variant: RoiVariant,
    /// Remap the block grid onto a CTU grid of this size before writing.
    #[serde(default)]
    pub ctu_size: Option<usize>,
}

fn env_binary() -> String {
    std::env::var(ENCODER_ENV).unwrap_or_else(|_| DEFAULT_ENCODER_BINARY.to_string())
}

impl ExternalEncoder {
    pub fn new(binary: impl Into<String>) -> Self {
        Self {
            binary: binary.into(),
            roi_variant: RoiVariant::default(),
            ctu_size: None,
        }
    }

    /// Binary from [`ENCODER_ENV`], falling back to `kvazaar`.
    pub fn from_env() -> Self {
        Self::new(env_binary())
    }

    /// Resolves the binary to an existing file, searching `PATH` for bare names.
    pub fn resolve(&self) -> Result<PathBuf, EncodeError> {
        resolve_binary(&self.binary).ok_or_else(|| EncodeError::BinaryNotFound(self.binary.clone()))
    }
}

pub fn resolve_binary(name: &str) -> Option<PathBuf> {
    let p = Path::new(name);
    if p.components().count() > 1 || p.is_absolute() {
        return p.is_file().then(|| p.to_path_buf());
    }
    let paths = std::env::var_os("PATH").unwrap_or_else(OsString::new);
    std::env::split_paths(&paths)
        .map(|dir| dir.join(name))
        .find(|candidate| candidate.is_file())
}

/// Deterministic size model: each frame costs
/// `round(bytes_per_frame * 2^(-(qp + mean_roi_delta - 22) / 6))` bytes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubModel {
    pub bytes_per_frame: f64,
}

impl Default for StubModel {
    fn default() -> Self {
        Self {
            bytes_per_frame: STUB_BYTES_PER_FRAME,
        }
    }
}

impl StubModel {
    pub fn frame_bytes(&self, base_qp: i32, mean_delta: f64) -> u64 {
        let exponent = -((base_qp as f64 + mean_delta - DEFAULT_BASE_QP as f64) / 6.0);
        (self.bytes_per_frame * exponent.exp2()).round() as u64
    }

    pub fn sequence_bytes(&self, base_qp: i32, num_frames: usize, roi: Option<&RoiQpVideoMap>) -> u64 {
        match roi {
            Some(map) => map.frames().iter().map(|f| self.frame_bytes(base_qp, f.mean())).sum(),
            None => self.frame_bytes(base_qp, 0.0) * num_frames as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderKind {
    External(ExternalEncoder),
    Stub(StubModel),
}

impl Default for EncoderKind {
    fn default() -> Self {
        EncoderKind::Stub(StubModel::default())
    }
}

impl EncoderKind {
    pub fn identity(&self) -> String {
        match self {
            EncoderKind::External(e) => e.binary.clone(),
            EncoderKind::Stub(m) => format!("stub(bytes_per_frame={})", m.bytes_per_frame),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeJob {
    pub input: PathBuf,
    pub geometry: VideoGeometry,
    pub base_qp: i32,
    pub roi: Option<RoiQpVideoMap>,
    pub output: PathBuf,
    pub encoder: EncoderKind,
    pub extra_flags: Vec<String>,
}

impl EncodeJob {
    pub fn new(input: impl Into<PathBuf>, geometry: VideoGeometry, output: impl Into<PathBuf>, encoder: EncoderKind) -> Self {
        Self {
            input: input.into(),
            geometry,
            base_qp: DEFAULT_BASE_QP,
            roi: None,
            output: output.into(),
            encoder,
            extra_flags: Vec::new(),
        }
    }

    /// Where the encoder-side ROI file is written: `<output>.roi.txt`.
    pub fn roi_path(&self) -> PathBuf {
        let mut s = self.output.clone().into_os_string();
        s.push(".roi.txt");
        PathBuf::from(s)
    }

    pub fn validate(&self) -> Result<(), EncodeError> {
        self.geometry
            .validate()
            .map_err(|e| EncodeError::Job(e.to_string()))?;
        if !(0..=MAX_QP).contains(&self.base_qp) {
            return Err(EncodeError::Job(format!("base_qp {} outside [0, {MAX_QP}]", self.base_qp)));
        }
        if let Some(roi) = &self.roi {
            if roi.len() != self.geometry.num_frames {
                return Err(EncodeError::Job(format!(
                    "ROI map has {} frames, input has {}",
                    roi.len(),
                    self.geometry.num_frames
                )));
            }
            if self.base_qp + roi.max_value() > MAX_QP {
                return Err(EncodeError::Job(format!(
                    "base_qp {} + ROI ΔQP {} exceeds {MAX_QP}",
                    self.base_qp,
                    roi.max_value()
                )));
            }
        }
        if self.input == self.output {
            return Err(EncodeError::Job("output path equals input path".into()));
        }
        let len = fs::metadata(&self.input).map_err(io_err(&self.input))?.len();
        if len != self.geometry.file_byte_size() {
            return Err(EncodeError::Job(format!(
                "{} has {len} bytes, geometry implies {}",
                self.input.display(),
                self.geometry.file_byte_size()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResult {
    pub output: PathBuf,
    pub size: u64,
    pub bitrate: f64,
    pub wall_time: f64,
    pub encoder: String,
    pub qp: i32,
    pub roi: bool,
}

/// `8 * bytes * fps / frames`, bits per second.
pub fn bitrate_bps(size_bytes: u64, fps: f64, num_frames: usize) -> f64 {
    8.0 * size_bytes as f64 * fps / num_frames as f64
}

fn format_fps(fps: f64) -> String {
    if fps.fract() == 0.0 {
        format!("{}", fps as u64)
    } else {
        format!("{fps}")
    }
}

/// Encoder arguments (without the program name). The fixed encoding
/// parameters appear verbatim; `--roi` is present iff the job has a map.
pub fn build_command(job: &EncodeJob) -> Vec<String> {
    let g = &job.geometry;
    let mut args: Vec<String> = vec![
        "-i".into(),
        job.input.display().to_string(),
        "--input-res".into(),
        format!("{}x{}", g.width, g.height),
        "--input-fps".into(),
        format_fps(g.fps),
        "--input-bitdepth".into(),
        g.bit_depth.to_string(),
        "--preset".into(),
        "ultrafast".into(),
        "--period".into(),
        "0".into(),
        "--gop".into(),
        "0".into(),
        "--qp".into(),
        job.base_qp.to_string(),
    ];
    if job.roi.is_some() {
        args.push("--roi".into());
        args.push(job.roi_path().display().to_string());
    }
    args.extend(job.extra_flags.iter().cloned());
    args.push("-o".into());
    args.push(job.output.display().to_string());
    args
}

/// Nearest-block lookup of each CTU center onto the ROI block grid.
pub fn remap_to_ctu_grid(map: &RoiQpVideoMap, width: usize, height: usize, ctu: usize) -> Result<RoiQpVideoMap, RoiError> {
    let cw = width.div_ceil(ctu);
    let ch = height.div_ceil(ctu);
    let (bw, bh) = (map.blocks_w(), map.blocks_h());
    let lookup = |c: usize, n: usize, blocks: usize| {
        let px = (c * ctu + ctu / 2).min(n - 1);
        (px * blocks / n).min(blocks - 1)
    };
    let frames = map
        .frames()
        .iter()
        .map(|f| {
            let mut values = Vec::with_capacity(cw * ch);
            for cy in 0..ch {
                for cx in 0..cw {
                    values.push(f.get(lookup(cx, width, bw), lookup(cy, height, bh)));
                }
            }
            RoiQpFrame {
                frame_index: f.frame_index,
                blocks_w: cw,
                blocks_h: ch,
                values,
            }
        })
        .collect();
    RoiQpVideoMap::new(frames)
}

/// Renders the ROI map in the variant an external encoder expects.
pub fn encoder_roi_text(map: &RoiQpVideoMap, enc: &ExternalEncoder, geometry: &VideoGeometry) -> Result<String, RoiError> {
    let remapped;
    let map = match enc.ctu_size {
        Some(ctu) if ctu > 0 => {
            remapped = remap_to_ctu_grid(map, geometry.width, geometry.height, ctu)?;
            &remapped
        }
        _ => map,
    };
    Ok(match enc.roi_variant {
        RoiVariant::Canonical => format_roi(map, RoiFileMode::PerFrame),
        RoiVariant::Static => format_roi(map, RoiFileMode::StaticFirstFrame),
        RoiVariant::PerFrameHeaders => {
            let mut out = String::new();
            for f in map.frames() {
                out.push_str(&format!("{} {}\n", f.blocks_w, f.blocks_h));
                for row in f.values.chunks(f.blocks_w) {
                    let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    out.push_str(&line.join(" "));
                    out.push('\n');
                }
            }
            out
        }
    })
}

fn busy_outputs() -> &'static Mutex<HashSet<PathBuf>> {
    static BUSY: OnceLock<Mutex<HashSet<PathBuf>>> = OnceLock::new();
    BUSY.get_or_init(|| Mutex::new(HashSet::new()))
}

/// Claims an output path for the lifetime of the guard.
struct OutputClaim(PathBuf);

impl OutputClaim {
    fn acquire(path: &Path) -> Result<Self, EncodeError> {
        let key = path.to_path_buf();
        let mut busy = busy_outputs().lock().expect("output registry poisoned");
        if !busy.insert(key.clone()) {
            return Err(EncodeError::OutputBusy(key));
        }
        Ok(Self(key))
    }
}

impl Drop for OutputClaim {
    fn drop(&mut self) {
        if let Ok(mut busy) = busy_outputs().lock() {
            busy.remove(&self.0);
        }
    }
}

fn cleanup(job: &EncodeJob) {
    let _ = fs::remove_file(&job.output);
    let _ = fs::remove_file(job.roi_path());
}

pub fn encode(job: &EncodeJob) -> Result<EncodeResult, EncodeError> {
    match &job.encoder {
        EncoderKind::Stub(_) => stub_encode(job),
        EncoderKind::External(enc) => external_encode(job, enc),
    }
}

fn external_encode(job: &EncodeJob, enc: &ExternalEncoder) -> Result<EncodeResult, EncodeError> {
    job.validate()?;
    let binary = enc.resolve()?;
    let _claim = OutputClaim::acquire(&job.output)?;

    if let Some(map) = &job.roi {
        let text = encoder_roi_text(map, enc, &job.geometry)?;
        let path = job.roi_path();
        fs::write(&path, text).map_err(io_err(&path))?;
    }

    let args = build_command(job);
    log::debug!("running {} {}", binary.display(), args.join(" "));
    let start = Instant::now();
    let output = Command::new(&binary)
        .args(&args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .output();
    let wall_time = start.elapsed().as_secs_f64();

    let output = match output {
        Ok(o) => o,
        Err(source) => {
            cleanup(job);
            return Err(EncodeError::Io {
                path: binary,
                source,
            });
        }
    };
    if !output.status.success() {
        cleanup(job);
        let stderr = String::from_utf8_lossy(&output.stderr);
        let tail: Vec<&str> = stderr.lines().rev().take(20).collect();
        return Err(EncodeError::Failed {
            status: output.status.to_string(),
            stderr: tail.into_iter().rev().collect::<Vec<_>>().join("\n"),
        });
    }
    let size = fs::metadata(&job.output).map(|m| m.len()).unwrap_or(0);
    if size == 0 {
        cleanup(job);
        return Err(EncodeError::EmptyOutput(job.output.clone()));
    }
    Ok(EncodeResult {
        output: job.output.clone(),
        size,
        bitrate: bitrate_bps(size, job.geometry.fps, job.geometry.num_frames),
        wall_time,
        encoder: binary.display().to_string(),
        qp: job.base_qp,
        roi: job.roi.is_some(),
    })
}

/// Writes a bitstream placeholder whose length follows [`StubModel`].
pub fn stub_encode(job: &EncodeJob) -> Result<EncodeResult, EncodeError> {
    let EncoderKind::Stub(model) = &job.encoder else {
        return Err(EncodeError::Job("stub_encode called with an external encoder".into()));
    };
    job.validate()?;
    let _claim = OutputClaim::acquire(&job.output)?;
    let start = Instant::now();
    let size = model.sequence_bytes(job.base_qp, job.geometry.num_frames, job.roi.as_ref());
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&job.output)?;
        let chunk = [0u8; 8192];
        let mut left = size as usize;
        while left > 0 {
            let n = left.min(chunk.len());
            f.write_all(&chunk[..n])?;
            left -= n;
        }
        f.flush()
    };
    if let Err(e) = write() {
        cleanup(job);
        return Err(io_err(&job.output)(e));
    }
    if size == 0 {
        cleanup(job);
        return Err(EncodeError::EmptyOutput(job.output.clone()));
    }
    Ok(EncodeResult {
        output: job.output.clone(),
        size,
        bitrate: bitrate_bps(size, job.geometry.fps, job.geometry.num_frames),
        wall_time: start.elapsed().as_secs_f64(),
        encoder: job.encoder.identity(),
        qp: job.base_qp,
        roi: job.roi.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roi::RoiQpVideoMap;

    fn geometry(frames: usize) -> VideoGeometry {
        VideoGeometry::new(1920, 1080, 10, 24.0, frames).unwrap()
    }

    fn stub_job(dir: &Path, frames: usize) -> EncodeJob {
        let g = VideoGeometry::new(16, 16, 8, 24.0, frames).unwrap();
        let input = dir.join("in.yuv");
        fs::write(&input, vec![16u8; g.file_byte_size() as usize]).unwrap();
        EncodeJob::new(input, g, dir.join("out.bin"), EncoderKind::Stub(StubModel::default()))
    }

    #[test]
    fn command_contains_fixed_parameters() {
        let job = EncodeJob::new("in.yuv", geometry(240), "out.hevc", EncoderKind::External(ExternalEncoder::new("kvazaar")));
        let args = build_command(&job);
        let joined = args.join(" ");
        for flag in [
            "--period 0",
            "--gop 0",
            "--input-res 1920x1080",
            "--preset ultrafast",
            "--input-bitdepth 10",
            "--input-fps 24",
            "--qp 22",
        ] {
            assert!(joined.contains(flag), "missing {flag} in {joined}");
        }
        assert!(!args.iter().any(|a| a == "--roi"));
        assert_eq!(args, build_command(&job.clone()));
    }

    #[test]
    fn command_has_roi_when_present() {
        let mut job = EncodeJob::new("in.yuv", geometry(3), "out.hevc", EncoderKind::External(ExternalEncoder::new("kvazaar")));
        job.roi = Some(RoiQpVideoMap::frame_only(&[0, 1, 2], 22).unwrap());
        let args = build_command(&job);
        let pos = args.iter().position(|a| a == "--roi").unwrap();
        assert_eq!(args[pos + 1], "out.hevc.roi.txt");
    }

    #[test]
    fn fractional_fps_is_kept() {
        assert_eq!(format_fps(24.0), "24");
        assert_eq!(format_fps(29.97), "29.97");
    }

    #[test]
    fn bitrate_arithmetic() {
        assert!((bitrate_bps(1_000_000, 24.0, 240) - 800_000.0).abs() < 1e-9);
    }

    #[test]
    fn stub_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let mut job = stub_job(dir.path(), 48);
        let r = encode(&job).unwrap();
        assert_eq!(r.size, 576_000);
        assert_eq!(fs::metadata(&r.output).unwrap().len(), 576_000);

        job.base_qp = 28;
        assert_eq!(encode(&job).unwrap().size, 48 * 6000);

        job.base_qp = 22;
        job.roi = Some(RoiQpVideoMap::frame_only(&[6; 48], 22).unwrap());
        assert_eq!(encode(&job).unwrap().size, 288_000);
    }

    #[test]
    fn stub_is_monotone_in_qp() {
        let m = StubModel::default();
        let sizes: Vec<u64> = (0..=51).map(|q| m.sequence_bytes(q, 48, None)).collect();
        assert!(sizes.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn missing_binary_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let mut job = stub_job(dir.path(), 2);
        job.encoder = EncoderKind::External(ExternalEncoder::new("definitely-not-an-encoder-binary"));
        job.roi = Some(RoiQpVideoMap::frame_only(&[1, 2], 22).unwrap());
        assert!(matches!(encode(&job), Err(EncodeError::BinaryNotFound(_))));
        assert!(!job.output.exists());
        assert!(!job.roi_path().exists());
    }

    #[test]
    fn roi_frame_count_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let mut job = stub_job(dir.path(), 4);
        job.roi = Some(RoiQpVideoMap::frame_only(&[1, 2], 22).unwrap());
        assert!(matches!(encode(&job), Err(EncodeError::Job(_))));
    }

    #[test]
    fn input_size_must_match_geometry() {
        let dir = tempfile::tempdir().unwrap();
        let mut job = stub_job(dir.path(), 4);
        job.geometry.num_frames = 5;
        assert!(matches!(encode(&job), Err(EncodeError::Job(_))));
    }

    #[test]
    fn ctu_remap_nearest_block() {
        // 2x1 grid over 128x64: left half 3, right half 9; 64-px CTUs -> 2x1
        let frame = RoiQpFrame {
            frame_index: 0,
            blocks_w: 2,
            blocks_h: 1,
            values: vec![3, 9],
        };
        let map = RoiQpVideoMap::new(vec![frame]).unwrap();
        let r = remap_to_ctu_grid(&map, 128, 64, 64).unwrap();
        assert_eq!((r.blocks_w(), r.blocks_h()), (2, 1));
        assert_eq!(r.frames()[0].values, vec![3, 9]);
        let r = remap_to_ctu_grid(&map, 128, 64, 32).unwrap();
        assert_eq!(r.frames()[0].values, vec![3, 3, 9, 9, 3, 3, 9, 9]);
    }

    #[test]
    fn per_frame_header_variant() {
        let map = RoiQpVideoMap::frame_only(&[4, 5], 22).unwrap();
        let enc = ExternalEncoder::new("x");
        let text = encoder_roi_text(&map, &enc, &geometry(2)).unwrap();
        assert_eq!(text, "1 1\n4\n1 1\n5\n");
        let enc = ExternalEncoder {
            roi_variant: RoiVariant::Static,
            ..enc
        };
        assert_eq!(encoder_roi_text(&map, &enc, &geometry(2)).unwrap(), "1 1\n4\n");
    }

    #[cfg(unix)]
    #[test]
    fn failing_binary_surfaces_stderr() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("fake-enc.sh");
        fs::write(&script, "#!/bin/sh\necho 'bad things' >&2\nexit 3\n").unwrap();
        fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();
        let mut job = stub_job(dir.path(), 2);
        job.encoder = EncoderKind::External(ExternalEncoder::new(script.display().to_string()));
        match encode(&job) {
            Err(EncodeError::Failed { stderr, .. }) => assert!(stderr.contains("bad things")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(!job.output.exists());
    }

    #[cfg(unix)]
    #[test]
    fn external_binary_success() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("fake-enc.sh");
        // writes 1000 bytes to the path following -o
        fs::write(
            &script,
            "#!/bin/sh\nwhile [ $# -gt 0 ]; do if [ \"$1\" = -o ]; then head -c 1000 /dev/zero > \"$2\"; fi; shift; done\n",
        )
        .unwrap();
        fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();
        let input_bytes_before;
        let mut job = stub_job(dir.path(), 2);
        input_bytes_before = fs::read(&job.input).unwrap();
        job.encoder = EncoderKind::External(ExternalEncoder::new(script.display().to_string()));
        job.roi = Some(RoiQpVideoMap::frame_only(&[1, 2], 22).unwrap());
        let r = encode(&job).unwrap();
        assert_eq!(r.size, 1000);
        assert!(r.roi);
        assert_eq!(fs::read_to_string(job.roi_path()).unwrap(), "1 1\n1\n1 1\n2\n");
        assert_eq!(fs::read(&job.input).unwrap(), input_bytes_before);
    }
}
