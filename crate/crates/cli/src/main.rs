use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use cbvc_core::analysis::{
    bitrate_report, compare_pairs, mos_csv, mos_table, observers_csv, pairs_csv, plot_data_csv, repeat_table,
    repeats_csv, screen_observers, ScreeningThresholds,
};
use cbvc_core::encoder::{encode, EncodeJob, EncoderKind, ExternalEncoder, StubModel};
use cbvc_core::manifest::parse_manifest;
use cbvc_core::matcher::{match_constant_qp, MatchConstraint, MatchError, ProbeError};
use cbvc_core::pipeline::{run_pipeline, stimuli_for_plan, PipelineConfig, MANIFEST_FILE};
use cbvc_core::roi::{read_roi_file, resize_ccr, write_roi_file, RoiFileMode, RoiQpVideoMap};
use cbvc_core::saliency::map_io::{read_map_file, write_pgm, MapFileWriter};
use cbvc_core::saliency::{ccr_from_saliency, sdsp_frames, SdspConfig};
use cbvc_core::schedule::{
    enumerate_configurations, FrameDeltaQp, ScheduleConfig, ScheduleKind, WindowLength, DEFAULT_BASE_QP,
    DEFAULT_FLOOR, DEFAULT_PEAK, DEFAULT_SIGMA_FRAC,
};
use cbvc_core::study::{build_session, ingest_ratings, SessionOptions, SessionPlan, StimulusRecord};
use cbvc_core::video::{read_yuv, synth_video, write_yuv, SynthSpec, VideoGeometry};
use cbvc_core::Scalar;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cbvc", version, about = "Saliency-guided spatiotemporal QP coding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic YUV 4:2:0 source.
    Synth(SynthArgs),
    /// Compute per-frame saliency maps for a YUV source.
    Saliency(SaliencyArgs),
    /// Print a temporal delta-QP schedule as CSV.
    Schedule(ScheduleArgs),
    /// Build an ROI delta-QP file from a schedule and optional saliency maps.
    Roi(RoiArgs),
    /// Encode one source at a base QP with an optional ROI file.
    Encode(EncodeArgs),
    /// Find the constant QP whose size matches a target.
    Match(MatchArgs),
    /// Run the full stimulus-generation pipeline.
    Pipeline(PipelineArgs),
    /// Build a rating-session plan.
    Plan(PlanArgs),
    /// Serve a rating session over HTTP.
    Serve(ServeArgs),
    /// Summarise collected ratings.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Clone)]
struct GeometryArgs {
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long, default_value_t = 8)]
    bit_depth: u8,
    #[arg(long, default_value_t = 24.0)]
    fps: f64,
    #[arg(long)]
    frames: usize,
}

impl GeometryArgs {
    fn geometry(&self) -> Result<VideoGeometry> {
        Ok(VideoGeometry::new(self.width, self.height, self.bit_depth, self.fps, self.frames)?)
    }
}

#[derive(Args, Clone)]
struct EncoderArgs {
    /// Use the deterministic size model instead of a real encoder.
    #[arg(long, conflicts_with = "encoder")]
    stub: bool,
    /// Encoder binary (default: $CBVC_ENCODER, then kvazaar).
    #[arg(long)]
    encoder: Option<String>,
}

impl EncoderArgs {
    fn kind(&self) -> EncoderKind {
        if self.stub {
            EncoderKind::Stub(StubModel::default())
        } else {
            match &self.encoder {
                Some(b) => EncoderKind::External(ExternalEncoder::new(b)),
                None => EncoderKind::External(ExternalEncoder::from_env()),
            }
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (TOML). Without it the built-in demo scene is used.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 8)]
    bit_depth: u8,
    #[arg(long, default_value_t = 24.0)]
    fps: f64,
    #[arg(long, default_value_t = 48)]
    frames: usize,
    /// Print the scene TOML instead of rendering.
    #[arg(long)]
    print_spec: bool,
    #[arg(short, long, required_unless_present = "print_spec")]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Args)]
struct SaliencyArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Saliency parameters (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    working_resolution: Option<usize>,
    #[arg(long)]
    location_prior: bool,
    #[arg(long, value_enum, default_value = "f64")]
    precision: Precision,
    /// Frames held in memory at once.
    #[arg(long, default_value_t = 16)]
    chunk: usize,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write one PGM image per frame into this directory.
    #[arg(long)]
    pgm_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Gaussian,
    Cubic,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    kind: KindArg,
    /// Window length in frames, or `full`.
    #[arg(long, default_value = "16")]
    nf: WindowLength,
    #[arg(long)]
    frames: usize,
    #[arg(long, default_value_t = DEFAULT_PEAK)]
    peak: i32,
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    floor: i32,
    #[arg(long, default_value_t = DEFAULT_SIGMA_FRAC)]
    sigma_frac: f64,
    #[arg(long, default_value_t = DEFAULT_BASE_QP)]
    base_qp: i32,
    #[arg(long)]
    allow_windowed_cubic: bool,
    /// List the eight study configurations instead.
    #[arg(long)]
    list: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RoiArgs {
    /// Per-frame delta-QP CSV from `cbvc schedule`.
    #[arg(long)]
    schedule: PathBuf,
    /// Saliency map file; without it each frame gets a single block.
    #[arg(long)]
    saliency: Option<PathBuf>,
    /// Block grid as WxH.
    #[arg(long, default_value = "10x10", value_parser = parse_grid)]
    blocks: [usize; 2],
    #[arg(long, default_value_t = DEFAULT_BASE_QP)]
    base_qp: i32,
    /// Write only the first frame's map.
    #[arg(long = "static")]
    static_map: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long, default_value_t = DEFAULT_BASE_QP)]
    qp: i32,
    #[arg(long)]
    roi: Option<PathBuf>,
    #[command(flatten)]
    encoder: EncoderArgs,
    /// Extra encoder flag, passed through verbatim (repeatable).
    #[arg(long = "extra", allow_hyphen_values = true)]
    extra: Vec<String>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Target size in bytes.
    #[arg(long, conflicts_with = "target_file", required_unless_present = "target_file")]
    target: Option<u64>,
    /// Use this file's size as the target.
    #[arg(long)]
    target_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    min_ratio: f64,
    #[arg(long, default_value_t = 0)]
    qp_min: i32,
    #[arg(long, default_value_t = 51)]
    qp_max: i32,
    #[command(flatten)]
    encoder: EncoderArgs,
    /// Append the result as a JSON line to this file.
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the configured encoder with the size model.
    #[arg(long)]
    stub: bool,
}

#[derive(Args)]
struct PlanArgs {
    /// Pipeline config; its manifest supplies the stimuli.
    #[arg(long, conflicts_with = "stimuli", required_unless_present = "stimuli")]
    config: Option<PathBuf>,
    /// JSON array of stimulus records.
    #[arg(long)]
    stimuli: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Comma-separated ids to repeat instead of drawing them.
    #[arg(long, value_delimiter = ',')]
    fixed_repeats: Option<Vec<String>>,
    /// Allow a repeat directly after its original.
    #[arg(long)]
    allow_adjacent: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Directory relative media paths resolve against (default: the plan's).
    #[arg(long)]
    media_root: Option<PathBuf>,
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    welch: bool,
    #[arg(long, default_value_t = 0.5)]
    agreement_threshold: f64,
    #[arg(long, default_value_t = 2.0)]
    distance_threshold: f64,
}

fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in {s}"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in {s}"))?;
    if w == 0 || h == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok([w, h])
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => SynthSpec::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => SynthSpec::demo(VideoGeometry::new(a.width, a.height, a.bit_depth, a.fps, a.frames)?),
    };
    if a.print_spec {
        print!("{}", spec.to_toml());
        return Ok(());
    }
    let out = a.output.expect("required by clap");
    let seq = synth_video(&spec)?;
    write_yuv(&out, spec.geometry, &seq.frames)?;
    log::info!("wrote {} frames to {}", seq.frames.len(), out.display());
    Ok(())
}

fn saliency_run<T: Scalar>(a: &SaliencyArgs, g: VideoGeometry, cfg: &SdspConfig) -> Result<()> {
    let n = cfg.working_resolution;
    let mut writer = MapFileWriter::create(&a.output, n, n, g.num_frames)?;
    if let Some(d) = &a.pgm_dir {
        fs::create_dir_all(d)?;
    }
    let mut reader = read_yuv(&a.input, g)?;
    let mut done = 0usize;
    loop {
        let frames = reader.by_ref().take(a.chunk.max(1)).collect::<Result<Vec<_>, _>>()?;
        if frames.is_empty() {
            break;
        }
        for map in sdsp_frames::<T>(&frames, &g, cfg) {
            writer.write(&map.values)?;
            if let Some(d) = &a.pgm_dir {
                write_pgm(d.join(format!("frame_{:05}.pgm", map.frame_index)), &map.values)?;
            }
            done += 1;
        }
    }
    writer.finish()?;
    log::info!("wrote {done} saliency maps ({n}x{n}) to {}", a.output.display());
    Ok(())
}

fn saliency(a: SaliencyArgs) -> Result<()> {
    let g = a.geometry.geometry()?;
    let mut cfg: SdspConfig = match &a.config {
        Some(p) => toml::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => SdspConfig::default(),
    };
    if let Some(n) = a.working_resolution {
        cfg.working_resolution = n;
    }
    if a.location_prior {
        cfg.include_location_prior = true;
    }
    cfg.validate()?;
    match a.precision {
        Precision::F32 => saliency_run::<f32>(&a, g, &cfg),
        Precision::F64 => saliency_run::<f64>(&a, g, &cfg),
    }
}

fn schedule(a: ScheduleArgs) -> Result<()> {
    if a.list {
        let mut text = String::from("descriptor,window\n");
        for c in enumerate_configurations(a.frames) {
            text.push_str(&format!("{},{}\n", c.descriptor(), c.schedule.window_frames()));
        }
        return write_out(a.output.as_deref(), &text);
    }
    let kind = match a.kind {
        KindArg::Gaussian => ScheduleKind::Gaussian,
        KindArg::Cubic => ScheduleKind::Cubic,
    };
    let cfg = ScheduleConfig {
        peak: a.peak,
        floor: a.floor,
        sigma_frac: a.sigma_frac,
        base_qp: a.base_qp,
        allow_windowed_cubic: a.allow_windowed_cubic,
        ..ScheduleConfig::new(kind, a.nf, a.frames)
    };
    write_out(a.output.as_deref(), &cfg.frame_deltas()?.to_csv())
}

fn roi(a: RoiArgs) -> Result<()> {
    let deltas = FrameDeltaQp::from_csv(&fs::read_to_string(&a.schedule)?)?;
    let map = match &a.saliency {
        None => RoiQpVideoMap::frame_only(&deltas.0, a.base_qp)?,
        Some(p) => {
            let maps = read_map_file(p)?;
            if maps.len() != deltas.len() {
                bail!("{} saliency maps for {} scheduled frames", maps.len(), deltas.len());
            }
            let grids: Vec<_> = maps
                .iter()
                .map(|m| resize_ccr(&ccr_from_saliency(m), a.blocks[0], a.blocks[1]))
                .collect();
            RoiQpVideoMap::from_grids(&grids, &deltas.0, a.base_qp)?
        }
    };
    let mode = if a.static_map { RoiFileMode::StaticFirstFrame } else { RoiFileMode::PerFrame };
    write_roi_file(&map, &a.output, mode)?;
    Ok(())
}

fn encode_cmd(a: EncodeArgs) -> Result<()> {
    let mut job = EncodeJob::new(&a.input, a.geometry.geometry()?, &a.output, a.encoder.kind());
    job.base_qp = a.qp;
    job.extra_flags = a.extra;
    if let Some(p) = &a.roi {
        job.roi = Some(read_roi_file(p)?);
    }
    let r = encode(&job)?;
    println!("{}", serde_json::to_string(&r)?);
    Ok(())
}

fn probe_path(output: &Path, qp: i32) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(format!(".qp{qp:02}"));
    PathBuf::from(s)
}

fn match_cmd(a: MatchArgs) -> Result<()> {
    let g = a.geometry.geometry()?;
    let target = match (&a.target, &a.target_file) {
        (Some(t), _) => *t,
        (None, Some(p)) => fs::metadata(p).with_context(|| format!("reading {}", p.display()))?.len(),
        (None, None) => unreachable!("clap requires one"),
    };
    let c = MatchConstraint {
        min_ratio: a.min_ratio,
        qp_min: a.qp_min,
        qp_max: a.qp_max,
    };
    let kind = a.encoder.kind();
    let probe = |qp: i32| -> Result<u64, ProbeError> {
        let mut job = EncodeJob::new(&a.input, g, probe_path(&a.output, qp), kind.clone());
        job.base_qp = qp;
        Ok(encode(&job)?.size)
    };
    let result = match_constant_qp(target, probe, &c);
    let probed: Vec<i32> = match &result {
        Ok(r) => r.probes.iter().map(|p| p.0).collect(),
        Err(MatchError::Infeasible { probes, .. }) => probes.iter().map(|p| p.0).collect(),
        Err(_) => c.qp_range().collect(),
    };
    let chosen = result.as_ref().ok().map(|r| r.qp);
    if let Some(qp) = chosen {
        fs::rename(probe_path(&a.output, qp), &a.output)?;
    }
    for qp in probed.into_iter().filter(|&q| Some(q) != chosen) {
        let _ = fs::remove_file(probe_path(&a.output, qp));
    }
    let r = result?;
    let line = serde_json::json!({
        "input": a.input,
        "output": a.output,
        "target": target,
        "qp": r.qp,
        "size": r.size,
        "ratio": r.ratio,
        "probes": r.probes,
        "exhaustive": r.exhaustive,
    })
    .to_string();
    if let Some(p) = &a.record {
        let mut f = OpenOptions::new().create(true).append(true).open(p)?;
        writeln!(f, "{line}")?;
    }
    println!("{line}");
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<ExitCode> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.stub {
        cfg.encoder = EncoderKind::Stub(StubModel::default());
    }
    let report = run_pipeline(&cfg)?;
    println!(
        "{} manifest rows, {} encodes, manifest {}",
        report.rows.len(),
        report.encodes,
        report.manifest_path.display()
    );
    if let Some(p) = &report.plan_path {
        println!("session plan {}", p.display());
    }
    for f in &report.failures {
        eprintln!("failed: {}: {}", f.id, f.error);
    }
    Ok(if report.succeeded() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn plan(a: PlanArgs) -> Result<()> {
    let (stimuli, seed, repeats): (Vec<StimulusRecord>, u64, usize) = match (&a.config, &a.stimuli) {
        (Some(c), _) => {
            let cfg = PipelineConfig::load(c)?;
            let path = cfg.output_dir.join(MANIFEST_FILE);
            let rows = parse_manifest(&fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?, &path)?;
            (stimuli_for_plan(&cfg, &rows), cfg.seed, cfg.repeats)
        }
        (None, Some(p)) => {
            let list = serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?;
            (list, 0, SessionOptions::default().repeat_count)
        }
        (None, None) => unreachable!("clap requires one"),
    };
    let opts = SessionOptions {
        repeat_count: a.repeats.unwrap_or(repeats),
        fixed_repeats: a.fixed_repeats,
        non_adjacent_repeats: !a.allow_adjacent,
        ..SessionOptions::default()
    };
    let plan = build_session(&stimuli, &opts, a.seed.unwrap_or(seed))?;
    plan.save(&a.output)?;
    println!("{} items, {} training, repeats: {}", plan.items.len(), plan.training.len(), plan.repeated_ids().join(" "));
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let plan = SessionPlan::load(&a.plan)?;
    let root = match a.media_root {
        Some(r) => r,
        None => a.plan.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let state = cbvc_service::AppState::new(plan, root, a.ratings)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(cbvc_service::serve(Arc::new(state), &a.bind))?;
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let ratings = ingest_ratings(&a.ratings)?;
    fs::create_dir_all(&a.out_dir)?;
    let put = |name: &str, text: &str| -> Result<()> {
        let p = a.out_dir.join(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    };
    let mos = mos_table(&ratings);
    put("mos.csv", &mos_csv(&mos))?;
    put("plot_data.csv", &plot_data_csv(&mos))?;
    put("repeats.csv", &repeats_csv(&repeat_table(&ratings)))?;
    println!("{} ratings from {} observers on {} stimuli", ratings.len(), ratings.observers().len(), mos.len());

    let thresholds = ScreeningThresholds {
        agreement: a.agreement_threshold,
        distance: a.distance_threshold,
    };
    match screen_observers(&ratings, &thresholds) {
        Ok(rows) => {
            put("observers.csv", &observers_csv(&rows))?;
            for r in rows.iter().filter(|r| r.low_agreement || r.high_distance) {
                println!("flagged observer {}: agreement {:.3}, distance {:?}", r.observer, r.agreement, r.intra_distance);
            }
        }
        Err(e) => log::warn!("observer screening skipped: {e}"),
    }

    if let Some(m) = &a.manifest {
        let rows = parse_manifest(&fs::read_to_string(m).with_context(|| format!("reading {}", m.display()))?, m)?;
        let report = bitrate_report(&rows)?;
        put("bitrate.csv", &report.to_csv())?;
        put("bitrate.txt", &report.to_text())?;
        print!("{}", report.to_text());
        put("pairs.csv", &pairs_csv(&compare_pairs(&ratings, &rows, a.welch)))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth(a) => synth(a)?,
        Command::Saliency(a) => saliency(a)?,
        Command::Schedule(a) => schedule(a)?,
        Command::Roi(a) => roi(a)?,
        Command::Encode(a) => encode_cmd(a)?,
        Command::Match(a) => match_cmd(a)?,
        Command::Pipeline(a) => return pipeline(a),
        Command::Plan(a) => plan(a)?,
        Command::Serve(a) => serve(a)?,
        Command::Analyze(a) => analyze(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
