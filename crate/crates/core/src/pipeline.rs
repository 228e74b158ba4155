//! End-to-end stimulus preparation.
//!
//! For each source: per-frame saliency and CCR, then for each of the eight
//! configurations an ROI-driven encode followed by a size-matched
//! constant-QP baseline. Results land in `<output_dir>/manifest.csv`.
//!
//! Configuration (TOML, relative paths resolved against the file):
//!
//! ```toml
//! output_dir = "out"
//! seed = 1
//! jobs = 4
//! base_qp = 22
//! block_grid = [10, 10]
//!
//! [schedule]
//! peak = 29
//! floor = 0
//! sigma_frac = 0.1666667
//!
//! [encoder]
//! kind = "stub"            # or "external" with binary / roi_variant / ctu_size
//!
//! [[source]]
//! name = "Market"
//! path = "market_1920x1080_10bit.yuv"
//! width = 1920
//! height = 1080
//! bit_depth = 10
//! fps = 24
//! num_frames = 240
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{encode, EncodeError, EncodeJob, EncoderKind};
use crate::manifest::{Manifest, ManifestError, ManifestRow, RowKind};
use crate::matcher::{match_constant_qp, MatchConstraint, MatchError};
use crate::roi::{resize_ccr, BlockGrid, RoiError, RoiQpVideoMap};
use crate::saliency::map_io::MapFileWriter;
use crate::saliency::{ccr_from_saliency, sdsp_frames, SaliencyError, SdspConfig};
use crate::schedule::{
    enumerate_configurations_with, RoiScenario, ScheduleError, StimulusConfig, WindowLength,
    DEFAULT_BASE_QP, DEFAULT_FLOOR, DEFAULT_PEAK, DEFAULT_SIGMA_FRAC,
};
use crate::study::{build_session, SessionOptions, StimulusRecord, StimulusRole, StudyError};
use crate::video::{read_yuv, VideoError, VideoGeometry};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const PLAN_FILE: &str = "plan.json";
pub const BASELINE_SUFFIX: &str = "-C-QP";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Roi(#[from] RoiError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub name: String,
    pub path: PathBuf,
    #[serde(flatten)]
    pub geometry: VideoGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleDefaults {
    pub peak: i32,
    pub floor: i32,
    pub sigma_frac: f64,
}

impl Default for ScheduleDefaults {
    fn default() -> Self {
        Self {
            peak: DEFAULT_PEAK,
            floor: DEFAULT_FLOOR,
            sigma_frac: DEFAULT_SIGMA_FRAC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMedia {
    pub good: String,
    pub bad: String,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(rename = "source")]
    pub sources: Vec<SourceConfig>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_base_qp")]
    pub base_qp: i32,
    #[serde(default = "default_grid")]
    pub block_grid: [usize; 2],
    #[serde(default)]
    pub schedule: ScheduleDefaults,
    #[serde(default)]
    pub encoder: EncoderKind,
    #[serde(default)]
    pub saliency: SdspConfig,
    #[serde(default, rename = "match")]
    pub matching: MatchConstraint,
    /// Write per-source saliency map files next to the bitstreams.
    #[serde(default = "yes")]
    pub write_saliency: bool,
    #[serde(default)]
    pub training: Option<TrainingMedia>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_base_qp() -> i32 {
    DEFAULT_BASE_QP
}

fn default_grid() -> [usize; 2] {
    [10, 10]
}

fn yes() -> bool {
    true
}

fn default_repeats() -> usize {
    crate::study::DEFAULT_REPEATS
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Parses `path`, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.output_dir);
        for s in &mut cfg.sources {
            resolve(&mut s.path);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(m));
        if self.sources.is_empty() {
            return err("at least one [[source]] is required".into());
        }
        let mut names = std::collections::HashSet::new();
        for s in &self.sources {
            if s.name.is_empty() || s.name.contains(['/', '\\', ',']) {
                return err(format!("source name '{}' must be non-empty without '/', '\\' or ','", s.name));
            }
            if !names.insert(&s.name) {
                return err(format!("duplicate source name {}", s.name));
            }
            s.geometry.validate()?;
            if !s.path.is_file() {
                return err(format!("source file {} does not exist", s.path.display()));
            }
        }
        if self.jobs == 0 {
            return err("jobs must be at least 1".into());
        }
        if self.block_grid[0] == 0 || self.block_grid[1] == 0 {
            return err("block_grid dimensions must be positive".into());
        }
        self.saliency.validate()?;
        self.matching.validate()?;
        for s in &self.sources {
            for c in self.configurations(s.geometry.num_frames) {
                c.schedule.validate()?;
            }
        }
        Ok(())
    }

    pub fn configurations(&self, total_frames: usize) -> Vec<StimulusConfig> {
        enumerate_configurations_with(total_frames, |s| {
            s.peak = self.schedule.peak;
            s.floor = self.schedule.floor;
            s.sigma_frac = self.schedule.sigma_frac;
            s.base_qp = self.base_qp;
        })
    }
}

/// `nf=16/G`, `nf=FL/P3`, ...
pub fn schedule_label(cfg: &StimulusConfig) -> String {
    let nf = match cfg.schedule.nf {
        WindowLength::Frames(n) => n.to_string(),
        WindowLength::Full => "FL".into(),
    };
    format!("nf={nf}/{}", cfg.schedule.kind.tag())
}

/// `<Source>-nf-<N|len>-BS-<blocks>-<G|P3>`.
pub fn stimulus_id(source: &str, cfg: &StimulusConfig, grid: [usize; 2]) -> String {
    let nf = match cfg.schedule.nf {
        WindowLength::Frames(n) => n.to_string(),
        WindowLength::Full => "len".into(),
    };
    let bs = match cfg.roi {
        RoiScenario::FrameOnly => "1".to_string(),
        RoiScenario::Ccr if grid[0] == grid[1] => grid[0].to_string(),
        RoiScenario::Ccr => format!("{}x{}", grid[0], grid[1]),
    };
    format!("{source}-nf-{nf}-BS-{bs}-{}", cfg.schedule.kind.tag())
}

pub fn baseline_id(stimulus_id: &str) -> String {
    format!("{stimulus_id}{BASELINE_SUFFIX}")
}

pub fn source_reference_id(source: &str) -> String {
    format!("{source}-SRC")
}

/// Canonical row order: per source, per configuration, stimulus then baseline.
pub fn canonical_ids(cfg: &PipelineConfig) -> Vec<String> {
    let mut ids = Vec::new();
    for s in &cfg.sources {
        for c in cfg.configurations(s.geometry.num_frames) {
            let id = stimulus_id(&s.name, &c, cfg.block_grid);
            ids.push(baseline_id(&id));
            ids.push(id);
            let n = ids.len();
            ids.swap(n - 2, n - 1);
        }
    }
    ids
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StimulusFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub rows: Vec<ManifestRow>,
    pub failures: Vec<StimulusFailure>,
    /// Encoder invocations made by this run (probes included).
    pub encodes: usize,
    pub manifest_path: PathBuf,
    pub plan_path: Option<PathBuf>,
}

impl PipelineReport {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Context<'a> {
    cfg: &'a PipelineConfig,
    manifest: Mutex<Manifest>,
    encodes: AtomicUsize,
}

impl Context<'_> {
    fn encode(&self, job: &EncodeJob) -> Result<u64, EncodeError> {
        self.encodes.fetch_add(1, Ordering::Relaxed);
        Ok(encode(job)?.size)
    }

    fn existing(&self, id: &str) -> Option<ManifestRow> {
        self.manifest.lock().expect("manifest lock").get(id).cloned()
    }

    fn append(&self, row: ManifestRow) -> Result<(), ManifestError> {
        self.manifest.lock().expect("manifest lock").append(row)
    }
}

/// Per-frame CCR block grids for one source, streaming the file in chunks.
pub fn source_block_grids(
    source: &SourceConfig,
    sdsp: &SdspConfig,
    grid: [usize; 2],
    chunk: usize,
    map_file: Option<&Path>,
) -> Result<Vec<BlockGrid<f64>>, PipelineError> {
    let g = source.geometry;
    let mut reader = read_yuv(&source.path, g)?;
    let n = sdsp.working_resolution;
    let mut writer = map_file
        .map(|p| MapFileWriter::create(p, n, n, g.num_frames))
        .transpose()?;
    let mut grids = Vec::with_capacity(g.num_frames);
    loop {
        let frames = reader.by_ref().take(chunk.max(1)).collect::<Result<Vec<_>, _>>()?;
        if frames.is_empty() {
            break;
        }
        for map in sdsp_frames::<f64>(&frames, &g, sdsp) {
            if let Some(w) = writer.as_mut() {
                w.write(&map.values)?;
            }
            grids.push(resize_ccr(&ccr_from_saliency(&map), grid[0], grid[1]));
        }
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    Ok(grids)
}

fn probe_path(dir: &Path, base: &str, qp: i32) -> PathBuf {
    dir.join(format!("{base}.qp{qp:02}.hevc"))
}

fn run_stimulus(
    ctx: &Context<'_>,
    source: &SourceConfig,
    config: &StimulusConfig,
    grids: Option<&[BlockGrid<f64>]>,
) -> Result<(), PipelineError> {
    let cfg = ctx.cfg;
    let dir = &cfg.output_dir;
    let g = source.geometry;
    let id = stimulus_id(&source.name, config, cfg.block_grid);
    let base = baseline_id(&id);
    let label = schedule_label(config);
    let roi_flag = config.roi == RoiScenario::Ccr;

    let stimulus = match ctx.existing(&id) {
        Some(row) => row,
        None => {
            let deltas = config.schedule.frame_deltas()?;
            let map = match (config.roi, grids) {
                (RoiScenario::Ccr, Some(grids)) => RoiQpVideoMap::from_grids(grids, &deltas.0, cfg.base_qp)?,
                (RoiScenario::Ccr, None) => return Err(PipelineError::Config("CCR grids missing".into())),
                (RoiScenario::FrameOnly, _) => RoiQpVideoMap::frame_only(&deltas.0, cfg.base_qp)?,
            };
            let media = format!("{id}.hevc");
            let mut job = EncodeJob::new(&source.path, g, dir.join(&media), cfg.encoder.clone());
            job.base_qp = cfg.base_qp;
            job.roi = Some(map);
            ctx.encodes.fetch_add(1, Ordering::Relaxed);
            let r = encode(&job)?;
            let row = ManifestRow {
                id: id.clone(),
                source: source.name.clone(),
                config: config.descriptor(),
                schedule: label.clone(),
                kind: RowKind::Spatiotemporal,
                roi: roi_flag,
                qp: cfg.base_qp,
                size: r.size,
                bitrate: r.bitrate,
                paired: base.clone(),
                ratio: None,
                media,
            };
            ctx.append(row.clone())?;
            row
        }
    };

    if ctx.existing(&base).is_some() {
        return Ok(());
    }
    let probe = |qp: i32| -> Result<u64, crate::matcher::ProbeError> {
        let mut job = EncodeJob::new(&source.path, g, probe_path(dir, &base, qp), cfg.encoder.clone());
        job.base_qp = qp;
        Ok(ctx.encode(&job)?)
    };
    let result = match_constant_qp(stimulus.size, probe, &cfg.matching);
    let probed: Vec<i32> = match &result {
        Ok(r) => r.probes.iter().map(|p| p.0).collect(),
        Err(MatchError::Infeasible { probes, .. }) => probes.iter().map(|p| p.0).collect(),
        Err(_) => (cfg.matching.qp_min..=cfg.matching.qp_max).collect(),
    };
    let chosen = result.as_ref().ok().map(|r| r.qp);
    let media = format!("{base}.hevc");
    if let Some(qp) = chosen {
        let from = probe_path(dir, &base, qp);
        let to = dir.join(&media);
        fs::rename(&from, &to).map_err(|source| PipelineError::Io { path: from, source })?;
    }
    for qp in probed.into_iter().filter(|&q| Some(q) != chosen) {
        let _ = fs::remove_file(probe_path(dir, &base, qp));
    }
    let r = result?;
    ctx.append(ManifestRow {
        id: base.clone(),
        source: source.name.clone(),
        config: config.descriptor(),
        schedule: label,
        kind: RowKind::Baseline,
        roi: roi_flag,
        qp: r.qp,
        size: r.size,
        bitrate: crate::encoder::bitrate_bps(r.size, g.fps, g.num_frames),
        paired: id,
        ratio: Some(r.ratio),
        media,
    })?;
    Ok(())
}

/// Plan inputs: every manifest row as a test stimulus plus one hidden
/// reference per source.
pub fn stimuli_for_plan(cfg: &PipelineConfig, rows: &[ManifestRow]) -> Vec<StimulusRecord> {
    let mut out: Vec<StimulusRecord> = rows
        .iter()
        .map(|r| StimulusRecord {
            config: Some(r.config.clone()),
            ..StimulusRecord::new(&r.id, &r.media, StimulusRole::Test)
        })
        .collect();
    for s in &cfg.sources {
        out.push(StimulusRecord::new(
            source_reference_id(&s.name),
            s.path.display().to_string(),
            StimulusRole::HiddenReference,
        ));
    }
    if let Some(t) = &cfg.training {
        out.push(StimulusRecord::new("training-good", &t.good, StimulusRole::TrainingGood));
        out.push(StimulusRecord::new("training-bad", &t.bad, StimulusRole::TrainingBad));
    }
    out
}

/// Runs (or resumes) the pipeline. Per-stimulus failures are collected in
/// the report; only setup errors abort the run.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|source| PipelineError::Io {
        path: cfg.output_dir.clone(),
        source,
    })?;
    let manifest_path = cfg.output_dir.join(MANIFEST_FILE);
    let ctx = Context {
        cfg,
        manifest: Mutex::new(Manifest::open(&manifest_path)?),
        encodes: AtomicUsize::new(0),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;

    let mut failures = Vec::new();
    let mut tasks: Vec<(&SourceConfig, StimulusConfig, Option<std::sync::Arc<Vec<BlockGrid<f64>>>>)> = Vec::new();
    for source in &cfg.sources {
        let configs = cfg.configurations(source.geometry.num_frames);
        let pending: Vec<StimulusConfig> = configs
            .into_iter()
            .filter(|c| {
                let id = stimulus_id(&source.name, c, cfg.block_grid);
                let m = ctx.manifest.lock().expect("manifest lock");
                !(m.contains(&id) && m.contains(&baseline_id(&id)))
            })
            .collect();
        let needs_ccr = pending
            .iter()
            .any(|c| c.roi == RoiScenario::Ccr && ctx.existing(&stimulus_id(&source.name, c, cfg.block_grid)).is_none());
        let grids = if needs_ccr {
            let map_file = cfg
                .write_saliency
                .then(|| cfg.output_dir.join(format!("{}.salmap", source.name)));
            let computed = pool.install(|| {
                source_block_grids(source, &cfg.saliency, cfg.block_grid, cfg.jobs * 4, map_file.as_deref())
            });
            match computed {
                Ok(g) => Some(std::sync::Arc::new(g)),
                Err(e) => {
                    for c in pending.iter().filter(|c| c.roi == RoiScenario::Ccr) {
                        failures.push(StimulusFailure {
                            id: stimulus_id(&source.name, c, cfg.block_grid),
                            error: format!("saliency: {e}"),
                        });
                    }
                    None
                }
            }
        } else {
            None
        };
        for c in pending {
            if c.roi == RoiScenario::Ccr && needs_ccr && grids.is_none() {
                continue;
            }
            tasks.push((source, c, grids.clone()));
        }
    }

    let results: Vec<Option<StimulusFailure>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(source, c, grids)| {
                run_stimulus(&ctx, source, c, grids.as_ref().map(|g| g.as_slice()))
                    .err()
                    .map(|e| StimulusFailure {
                        id: stimulus_id(&source.name, c, cfg.block_grid),
                        error: e.to_string(),
                    })
            })
            .collect()
    });
    failures.extend(results.into_iter().flatten());
    for f in &failures {
        log::error!("{}: {}", f.id, f.error);
    }

    let mut manifest = ctx.manifest.into_inner().expect("manifest lock");
    manifest.finalize(&canonical_ids(cfg))?;
    let rows = manifest.rows().to_vec();

    let plan_path = if failures.is_empty() {
        let stimuli = stimuli_for_plan(cfg, &rows);
        let opts = SessionOptions {
            repeat_count: cfg.repeats.min(stimuli.iter().filter(|s| s.role.is_rated()).count()),
            ..SessionOptions::default()
        };
        let plan = build_session(&stimuli, &opts, cfg.seed)?;
        let path = cfg.output_dir.join(PLAN_FILE);
        plan.save(&path)?;
        Some(path)
    } else {
        None
    };

    Ok(PipelineReport {
        rows,
        failures,
        encodes: ctx.encodes.load(Ordering::Relaxed),
        manifest_path,
        plan_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::enumerate_configurations;

    #[test]
    fn ids_follow_naming_scheme() {
        let cfgs = enumerate_configurations(240);
        let ids: Vec<String> = cfgs.iter().map(|c| stimulus_id("BalloonFestival", c, [10, 10])).collect();
        assert_eq!(ids[0], "BalloonFestival-nf-16-BS-1-G");
        assert_eq!(ids[1], "BalloonFestival-nf-16-BS-10-G");
        assert_eq!(ids[7], "BalloonFestival-nf-len-BS-10-P3");
        assert_eq!(baseline_id(&ids[7]), "BalloonFestival-nf-len-BS-10-P3-C-QP");
        let unique: std::collections::HashSet<_> = ids.iter().collect();
        assert_eq!(unique.len(), 8);
        assert_eq!(schedule_label(&cfgs[4]), "nf=FL/G");
        assert_eq!(schedule_label(&cfgs[6]), "nf=FL/P3");
    }

    #[test]
    fn config_toml_defaults() {
        let cfg = PipelineConfig::from_toml(
            r#"
output_dir = "out"
[[source]]
name = "S"
path = "s.yuv"
width = 64
height = 64
bit_depth = 8
fps = 24
num_frames = 48
"#,
        )
        .unwrap();
        assert_eq!(cfg.block_grid, [10, 10]);
        assert_eq!(cfg.base_qp, 22);
        assert!(matches!(cfg.encoder, EncoderKind::Stub(_)));
        assert_eq!(cfg.matching.min_ratio, 0.95);
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn external_encoder_config() {
        let cfg = PipelineConfig::from_toml(
            r#"
output_dir = "out"
source = []
[encoder]
kind = "external"
binary = "/opt/kvazaar"
ctu_size = 64
"#,
        )
        .unwrap();
        match &cfg.encoder {
            EncoderKind::External(e) => {
                assert_eq!(e.binary, "/opt/kvazaar");
                assert_eq!(e.ctu_size, Some(64));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(cfg.validate().is_err());
    }
}
