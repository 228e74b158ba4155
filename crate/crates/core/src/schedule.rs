//! Temporal ΔQP schedules.
//!
//! A schedule is a window of integer ΔQP values that is tiled over the
//! sequence. Two shapes are supported:
//!
//! * Gaussian bell over `nf` frames, peak at the window center,
//!   `σ = sigma_frac · nf`;
//! * cubic rise `(f / (N - 1))^3` over the full sequence only (a windowed
//!   cubic would drop sharply from peak to floor at every cycle boundary).
//!
//! Values are rounded half away from zero.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_QP: i32 = 51;
pub const DEFAULT_BASE_QP: i32 = 22;
pub const DEFAULT_PEAK: i32 = 29;
pub const DEFAULT_FLOOR: i32 = 0;
/// Alternative lower bound for a more aggressive ΔQP range.
pub const AGGRESSIVE_FLOOR: i32 = 15;
pub const DEFAULT_SIGMA_FRAC: f64 = 1.0 / 6.0;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("invalid schedule config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Gaussian,
    Cubic,
}

impl ScheduleKind {
    /// Short label used in stimulus ids.
    pub fn tag(self) -> &'static str {
        match self {
            ScheduleKind::Gaussian => "G",
            ScheduleKind::Cubic => "P3",
        }
    }
}

/// Window length: a fixed number of frames or the whole sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowLength {
    Frames(usize),
    Full,
}

impl fmt::Display for WindowLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowLength::Frames(n) => write!(f, "{n}"),
            WindowLength::Full => f.write_str("full"),
        }
    }
}

impl std::str::FromStr for WindowLength {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "full" | "FL" | "len" => Ok(WindowLength::Full),
            other => other
                .parse()
                .map(WindowLength::Frames)
                .map_err(|_| ScheduleError::Config(format!("bad window length '{other}'"))),
        }
    }
}

impl Serialize for WindowLength {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            WindowLength::Frames(n) => s.serialize_u64(*n as u64),
            WindowLength::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for WindowLength {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(WindowLength::Frames(n as usize)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub nf: WindowLength,
    pub peak: i32,
    pub floor: i32,
    pub sigma_frac: f64,
    pub total_frames: usize,
    pub base_qp: i32,
    /// Accept a cubic schedule on a finite window (off by default).
    #[serde(default)]
    pub allow_windowed_cubic: bool,
}

impl ScheduleConfig {
    pub fn new(kind: ScheduleKind, nf: WindowLength, total_frames: usize) -> Self {
        Self {
            kind,
            nf,
            peak: DEFAULT_PEAK,
            floor: DEFAULT_FLOOR,
            sigma_frac: DEFAULT_SIGMA_FRAC,
            total_frames,
            base_qp: DEFAULT_BASE_QP,
            allow_windowed_cubic: false,
        }
    }

    /// Window length in frames.
    pub fn window_frames(&self) -> usize {
        match self.nf {
            WindowLength::Frames(n) => n,
            WindowLength::Full => self.total_frames,
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        let err = |m: String| Err(ScheduleError::Config(m));
        if self.floor < 0 || self.floor > self.peak {
            return err(format!("need 0 <= floor <= peak, got floor={} peak={}", self.floor, self.peak));
        }
        if !(0..=MAX_QP).contains(&self.base_qp) {
            return err(format!("base_qp {} outside [0, {MAX_QP}]", self.base_qp));
        }
        if self.base_qp + self.peak > MAX_QP {
            return err(format!(
                "base_qp + peak = {} exceeds {MAX_QP}",
                self.base_qp + self.peak
            ));
        }
        if self.window_frames() < 2 {
            return err(format!("window length {} < 2", self.window_frames()));
        }
        if self.total_frames < 1 {
            return err("total_frames must be positive".into());
        }
        if self.kind == ScheduleKind::Gaussian && !(self.sigma_frac > 0.0 && self.sigma_frac.is_finite()) {
            return err(format!("sigma_frac must be positive, got {}", self.sigma_frac));
        }
        if self.kind == ScheduleKind::Cubic && self.nf != WindowLength::Full && !self.allow_windowed_cubic {
            return err(format!(
                "cubic schedule requires nf=full (got nf={})",
                self.nf
            ));
        }
        Ok(())
    }

    /// One window of the schedule, dispatching on `kind`.
    pub fn window(&self) -> Result<Vec<i32>, ScheduleError> {
        match self.kind {
            ScheduleKind::Gaussian => gaussian_schedule(self),
            ScheduleKind::Cubic => cubic_schedule(self),
        }
    }

    /// Per-frame ΔQP over `total_frames`.
    pub fn frame_deltas(&self) -> Result<FrameDeltaQp, ScheduleError> {
        Ok(tile_schedule(&self.window()?, self.total_frames))
    }
}

/// Per-frame ΔQP values for a whole sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameDeltaQp(pub Vec<i32>);

impl FrameDeltaQp {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, frame: usize) -> i32 {
        self.0[frame]
    }

    /// `frame,delta_qp` CSV with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,delta_qp\n");
        for (i, d) in self.0.iter().enumerate() {
            out.push_str(&format!("{i},{d}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, ScheduleError> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("frame,delta_qp") => {}
            other => return Err(ScheduleError::Config(format!("bad schedule CSV header {other:?}"))),
        }
        let mut out = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || ScheduleError::Config(format!("bad schedule CSV line {}: '{line}'", n + 2));
            let (frame, delta) = line.split_once(',').ok_or_else(bad)?;
            let frame: usize = frame.trim().parse().map_err(|_| bad())?;
            let delta: i32 = delta.trim().parse().map_err(|_| bad())?;
            if frame != out.len() {
                return Err(bad());
            }
            out.push(delta);
        }
        Ok(FrameDeltaQp(out))
    }
}

fn round_half_away(v: f64) -> i32 {
    v.round() as i32
}

pub fn gaussian_schedule(cfg: &ScheduleConfig) -> Result<Vec<i32>, ScheduleError> {
    if cfg.kind != ScheduleKind::Gaussian {
        return Err(ScheduleError::Config("gaussian_schedule called with a non-gaussian config".into()));
    }
    cfg.validate()?;
    let nf = cfg.window_frames();
    let center = (nf as f64 - 1.0) / 2.0;
    let sigma = cfg.sigma_frac * nf as f64;
    let range = (cfg.peak - cfg.floor) as f64;
    Ok((0..nf)
        .map(|f| {
            let d = f as f64 - center;
            round_half_away(cfg.floor as f64 + range * (-(d * d) / (2.0 * sigma * sigma)).exp())
        })
        .collect())
}

/// Cubic rise over the whole sequence (or over `nf` when a windowed cubic
/// has been explicitly allowed).
pub fn cubic_schedule(cfg: &ScheduleConfig) -> Result<Vec<i32>, ScheduleError> {
    if cfg.kind != ScheduleKind::Cubic {
        return Err(ScheduleError::Config("cubic_schedule called with a non-cubic config".into()));
    }
    cfg.validate()?;
    let n = cfg.window_frames();
    let range = (cfg.peak - cfg.floor) as f64;
    let last = (n - 1) as f64;
    Ok((0..n)
        .map(|f| round_half_away(cfg.floor as f64 + range * (f as f64 / last).powi(3)))
        .collect())
}

/// Repeats `window` cyclically up to `total_frames`.
pub fn tile_schedule(window: &[i32], total_frames: usize) -> FrameDeltaQp {
    assert!(!window.is_empty(), "empty schedule window");
    FrameDeltaQp((0..total_frames).map(|f| window[f % window.len()]).collect())
}

/// Spatial scenario of a stimulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiScenario {
    /// One block per frame: temporal ΔQP only.
    FrameOnly,
    /// Block grid driven by the CCR map.
    Ccr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusConfig {
    pub schedule: ScheduleConfig,
    pub roi: RoiScenario,
}

impl StimulusConfig {
    /// Compact descriptor, e.g. `gaussian-nf16-ccr`.
    pub fn descriptor(&self) -> String {
        let kind = match self.schedule.kind {
            ScheduleKind::Gaussian => "gaussian",
            ScheduleKind::Cubic => "cubic",
        };
        let roi = match self.roi {
            RoiScenario::FrameOnly => "frame",
            RoiScenario::Ccr => "ccr",
        };
        format!("{kind}-nf{}-{roi}", self.schedule.nf)
    }
}

/// The eight study configurations: {Gaussian nf=16, Gaussian nf=32,
/// Gaussian full, cubic full} × {frame-only, CCR}, in that order.
pub fn enumerate_configurations(total_frames: usize) -> Vec<StimulusConfig> {
    enumerate_configurations_with(total_frames, |_| {})
}

/// Like [`enumerate_configurations`], with a hook to adjust the shared
/// schedule parameters (peak, floor, sigma, base QP).
pub fn enumerate_configurations_with(total_frames: usize, adjust: impl Fn(&mut ScheduleConfig)) -> Vec<StimulusConfig> {
    let shapes = [
        (ScheduleKind::Gaussian, WindowLength::Frames(16)),
        (ScheduleKind::Gaussian, WindowLength::Frames(32)),
        (ScheduleKind::Gaussian, WindowLength::Full),
        (ScheduleKind::Cubic, WindowLength::Full),
    ];
    let mut out = Vec::with_capacity(8);
    for (kind, nf) in shapes {
        for roi in [RoiScenario::FrameOnly, RoiScenario::Ccr] {
            let mut schedule = ScheduleConfig::new(kind, nf, total_frames);
            adjust(&mut schedule);
            out.push(StimulusConfig { schedule, roi });
        }
    }
    out
}
