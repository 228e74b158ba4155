//! One line per acceptance criterion: `PASS`, `FAIL` or `SKIP`, with the
//! measured runtime against its bound. Lines go straight to stderr so they
//! show up without `--nocapture`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use cbvc_core::analysis::{
    agreement_percentage, intra_observer_distance, mos, repeat_summary, repeated_stimuli, t_two_tailed_p,
};
use cbvc_core::encoder::{build_command, resolve_binary, EncodeJob, EncoderKind, ExternalEncoder, StubModel, ENCODER_ENV, DEFAULT_ENCODER_BINARY};
use cbvc_core::manifest::RowKind;
use cbvc_core::matcher::{match_constant_qp, MatchConstraint, MatchError, ProbeError, MAX_PROBES};
use cbvc_core::pipeline::{run_pipeline, PipelineConfig, SourceConfig};
use cbvc_core::resample::resize_bicubic;
use cbvc_core::roi::{format_roi, parse_roi, roi_qp_frame, BlockGrid, RoiFileMode, RoiQpFrame, RoiQpVideoMap};
use cbvc_core::saliency::{bandpass, log_gabor_transfer, sdsp, SdspConfig};
use cbvc_core::schedule::{enumerate_configurations, ScheduleConfig, ScheduleKind, WindowLength, AGGRESSIVE_FLOOR};
use cbvc_core::study::{RatingRecord, RatingSet};
use cbvc_core::video::{synth_video, write_yuv, Frame, SynthSpec, VideoGeometry};
use cbvc_core::Field;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- schedule

fn schedule_suite() -> Check {
    let gauss = |nf: WindowLength, total: usize| {
        let c = ScheduleConfig::new(ScheduleKind::Gaussian, nf, total);
        let d = c.frame_deltas().map_err(|e| e.to_string())?;
        Ok::<_, String>((c.window().map_err(|e| e.to_string())?, d))
    };
    for (nf, total) in [
        (WindowLength::Frames(16), 240),
        (WindowLength::Frames(32), 240),
        (WindowLength::Frames(17), 100),
        (WindowLength::Full, 240),
        (WindowLength::Full, 241),
    ] {
        let (w, d) = gauss(nf, total)?;
        ensure(w.iter().eq(w.iter().rev()), || format!("gaussian nf={nf} not palindromic: {w:?}"))?;
        if w.len() % 2 == 1 {
            ensure(w[w.len() / 2] == 29, || format!("gaussian nf={nf} center {} != 29", w[w.len() / 2]))?;
        }
        // tiling: frame f carries window[f mod nf]
        for f in 0..total {
            ensure(d.get(f) == w[f % w.len()], || format!("tiling broken at frame {f} for nf={nf}"))?;
        }
    }
    // endpoint of the nf=16 window from the closed form
    let sigma = 16.0 / 6.0;
    let expected = (29.0 * (-(7.5f64 * 7.5) / (2.0 * sigma * sigma)).exp()).round() as i32;
    let (w16, _) = gauss(WindowLength::Frames(16), 48)?;
    ensure(expected == 1 && w16[0] == 1 && w16[15] == 1, || format!("nf=16 endpoints {w16:?}"))?;

    for floor in [0, AGGRESSIVE_FLOOR] {
        let c = ScheduleConfig {
            floor,
            ..ScheduleConfig::new(ScheduleKind::Cubic, WindowLength::Full, 241)
        };
        let w = c.window().map_err(|e| e.to_string())?;
        let range = (29 - floor) as f64;
        let mid = (0.125 * range).round() as i32 + floor;
        ensure(w[0] == floor && w[240] == 29, || format!("cubic endpoints {} {}", w[0], w[240]))?;
        ensure(w[120] == mid, || format!("cubic midpoint {} != {mid}", w[120]))?;
    }

    let cfgs = enumerate_configurations(240);
    let mut names: Vec<String> = cfgs.iter().map(|c| c.descriptor()).collect();
    names.dedup();
    ensure(cfgs.len() == 8 && names.len() == 8, || format!("{} configurations", cfgs.len()))
}

// ---------------------------------------------------------------- ROI

fn keys(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        1.5 * x.powi(3) - 2.5 * x * x + 1.0
    } else if x < 2.0 {
        -0.5 * x.powi(3) + 2.5 * x * x - 4.0 * x + 2.0
    } else {
        0.0
    }
}

/// Direct 2-D evaluation: stretched Keys kernel, clamped edges,
/// normalized weights per axis.
fn resize_oracle(src: &Field<f64>, ow: usize, oh: usize) -> Field<f64> {
    let axis = |n_in: usize, n_out: usize, i: usize| -> Vec<(usize, f64)> {
        let scale = n_out as f64 / n_in as f64;
        let s = scale.min(1.0);
        let c = (i as f64 + 0.5) / scale - 0.5;
        let r = 2.0 / s;
        let mut taps = Vec::new();
        for j in (c - r).floor() as i64..=(c + r).ceil() as i64 {
            let w = keys((c - j as f64) * s);
            if w != 0.0 {
                taps.push((j.clamp(0, n_in as i64 - 1) as usize, w));
            }
        }
        let sum: f64 = taps.iter().map(|t| t.1).sum();
        taps.into_iter().map(|(j, w)| (j, w / sum)).collect()
    };
    Field::from_fn(ow, oh, |x, y| {
        let tx = axis(src.width(), ow, x);
        let ty = axis(src.height(), oh, y);
        let mut acc = 0.0;
        for &(sy, wy) in &ty {
            for &(sx, wx) in &tx {
                acc += wx * wy * src.get(sx, sy);
            }
        }
        acc
    })
}

fn roi_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let src = Field::from_fn(64, 64, |_, _| rng.random::<f64>());
        let got = resize_bicubic(&src, 10, 10, true);
        let want = resize_oracle(&src, 10, 10);
        let err = got
            .as_slice()
            .iter()
            .zip(want.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(err <= 1e-9, || format!("case {case}: resize differs from oracle by {err:e}"))?;
    }
    for v in [0.0, 0.3, 1.0, 0.123456789] {
        let c = resize_bicubic(&Field::filled(64, 64, v), 10, 10, true);
        ensure(c.as_slice().iter().all(|&x| x == v), || format!("constant {v} not reproduced"))?;
    }
    for _ in 0..500 {
        let base = rng.random_range(0..=51);
        let delta = rng.random_range(0..=60);
        let grid = BlockGrid::new(Field::from_fn(10, 10, |_, _| rng.random::<f64>() * 1.2));
        let f = roi_qp_frame(&grid, delta, base, 0).map_err(|e| e.to_string())?;
        ensure(f.values.iter().all(|&q| (0..=51 - base).contains(&q)), || {
            format!("clamp violated for base {base}, delta {delta}")
        })?;
    }
    for case in 0..100 {
        let (bw, bh) = (rng.random_range(1..=12), rng.random_range(1..=12));
        let frames: Vec<RoiQpFrame> = (0..rng.random_range(1..=20))
            .map(|i| RoiQpFrame {
                frame_index: i,
                blocks_w: bw,
                blocks_h: bh,
                values: (0..bw * bh).map(|_| rng.random_range(0..=29)).collect(),
            })
            .collect();
        let map = RoiQpVideoMap::new(frames).map_err(|e| e.to_string())?;
        let text = format_roi(&map, RoiFileMode::PerFrame);
        let back = parse_roi(&text).map_err(|e| e.to_string())?;
        ensure(back == map && format_roi(&back, RoiFileMode::PerFrame) == text, || {
            format!("round trip {case} differs")
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------- SDSP

fn square_frame(g: &VideoGeometry, x0: usize, y0: usize, side: usize) -> Frame {
    let mut f = Frame::filled(0, g, 126, 128, 128);
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            f.y[y * g.width + x] = 81;
            f.u[(y / 2) * (g.width / 2) + x / 2] = 90;
            f.v[(y / 2) * (g.width / 2) + x / 2] = 240;
        }
    }
    f
}

/// Circular convolution with the spatial kernel obtained by a direct
/// inverse DFT of the transfer function.
fn convolution_oracle(input: &Field<f64>, transfer: &Field<f64>) -> Field<f64> {
    let (w, h) = (input.width(), input.height());
    let kernel = Field::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for ky in 0..h {
            for kx in 0..w {
                let phase = 2.0 * PI * (kx as f64 * x as f64 / w as f64 + ky as f64 * y as f64 / h as f64);
                acc += transfer.get(kx, ky) * phase.cos();
            }
        }
        acc / (w * h) as f64
    });
    Field::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for v in 0..h {
            for u in 0..w {
                acc += input.get(u, v) * kernel.get((x + w - u) % w, (y + h - v) % h);
            }
        }
        acc
    })
}

fn sdsp_suite() -> Check {
    let g = VideoGeometry::new(64, 64, 8, 24.0, 1).map_err(|e| e.to_string())?;
    let cfg = SdspConfig {
        working_resolution: 64,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..8 {
        let mut f = Frame::filled(0, &g, 0, 0, 0);
        f.y.iter_mut().for_each(|v| *v = rng.random_range(16..=235));
        f.u.iter_mut().for_each(|v| *v = rng.random_range(16..=240));
        f.v.iter_mut().for_each(|v| *v = rng.random_range(16..=240));
        for s in [sdsp::<f64>(&f, &g, &cfg).values, sdsp::<f32>(&f, &g, &cfg).values.cast::<f64>()] {
            let (lo, hi) = s.min_max();
            ensure(lo == 0.0 && hi == 1.0, || format!("case {case}: range [{lo}, {hi}]"))?;
            ensure(s.as_slice().iter().all(|v| (0.0..=1.0).contains(v)), || format!("case {case}: value outside [0, 1]"))?;
        }
    }
    let flat = sdsp::<f64>(&Frame::filled(0, &g, 90, 120, 140), &g, &cfg);
    ensure(flat.values.as_slice().iter().all(|&v| v == 0.0), || "constant frame is not all zero".into())?;

    for (n, omega0, sigma_f) in [(16, 0.002, 6.2), (16, 0.1, 0.55), (24, 0.05, 1.0)] {
        let input = Field::from_fn(n, n, |_, _| rng.random::<f64>() * 100.0 - 50.0);
        let transfer = log_gabor_transfer::<f64>(n, n, omega0, sigma_f);
        let got = bandpass(&input, &transfer);
        let want = convolution_oracle(&input, &transfer);
        let err = got
            .as_slice()
            .iter()
            .zip(want.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(err <= 1e-6, || format!("{n}x{n} omega0={omega0}: filter differs from convolution by {err:e}"))?;
    }

    let side = 8;
    let (ax, ay) = sdsp::<f64>(&square_frame(&g, 8, 10, side), &g, &cfg).values.argmax();
    for (x0, y0) in [(40, 36), (24, 8), (48, 48)] {
        let (bx, by) = sdsp::<f64>(&square_frame(&g, x0, y0, side), &g, &cfg).values.argmax();
        let (dx, dy) = (bx as i64 - ax as i64, by as i64 - ay as i64);
        let (ex, ey) = (x0 as i64 - 8, y0 as i64 - 10);
        ensure((dx - ex).abs() <= 3 && (dy - ey).abs() <= 3, || {
            format!("square moved by ({ex}, {ey}) but argmax moved by ({dx}, {dy})")
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------- matcher

/// Exhaustive scan: among sizes >= min_ratio * target, the one closest to
/// the target; ties prefer the larger size, then the QP next to the crossing.
fn scan(sizes: &[(i32, u64)], target: u64, min_ratio: f64) -> Option<(i32, u64)> {
    let mut best: Option<(i32, u64)> = None;
    for &(qp, s) in sizes {
        if (s as f64) < min_ratio * target as f64 {
            continue;
        }
        let better = match best {
            None => true,
            Some((bq, bs)) => {
                let (d, bd) = (s.abs_diff(target), bs.abs_diff(target));
                d < bd || (d == bd && s > bs) || (d == bd && s == bs && if s >= target { qp > bq } else { qp < bq })
            }
        };
        if better {
            best = Some((qp, s));
        }
    }
    best
}

fn matcher_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let c = MatchConstraint::default();
    for case in 0..100 {
        let model = StubModel {
            bytes_per_frame: rng.random_range(1_000.0..60_000.0),
        };
        let frames = rng.random_range(1..=300);
        let sizes: Vec<(i32, u64)> = (0..=51).map(|q| (q, model.sequence_bytes(q, frames, None))).collect();
        let (lo, hi) = (sizes[51].1 as f64, sizes[0].1 as f64);
        let target = if case % 10 == 9 {
            (hi * rng.random_range(1.06..2.0)) as u64
        } else {
            rng.random_range(lo * 0.5..hi * 1.04) as u64
        }
        .max(1);
        let want = scan(&sizes, target, c.min_ratio);
        let oracle = |qp: i32| -> Result<u64, ProbeError> { Ok(model.sequence_bytes(qp, frames, None)) };
        match (match_constant_qp(target, oracle, &c), want) {
            (Ok(r), Some((qp, size))) => {
                ensure(r.qp == qp && r.size == size, || {
                    format!("case {case}: target {target} matched qp {} ({}) but scan gives qp {qp} ({size})", r.qp, r.size)
                })?;
                ensure(r.size as f64 >= 0.95 * target as f64, || format!("case {case}: size below 95% of target"))?;
                ensure(r.probes.len() <= MAX_PROBES, || format!("case {case}: {} probes", r.probes.len()))?;
            }
            (Err(MatchError::Infeasible { probes, .. }), None) => {
                ensure(probes.len() <= MAX_PROBES, || format!("case {case}: {} probes", probes.len()))?;
            }
            (got, want) => return Err(format!("case {case}: matcher {got:?}, scan {want:?}")),
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- analysis

fn rec(observer: &str, stimulus: &str, score: u8, idx: usize) -> RatingRecord {
    RatingRecord {
        observer: observer.into(),
        stimulus: stimulus.into(),
        score,
        timestamp: "2026-01-01T00:00:00Z".into(),
        presentation_index: idx,
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() < 2 { 0.0 } else { (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
    (m, sd)
}

fn analysis_suite() -> Check {
    // fifteen 5s and one 4
    let market = RatingSet::from_records((0..16).map(|o| rec(&format!("o{o}"), "Market", if o == 0 { 4 } else { 5 }, 0)))
        .map_err(|e| e.to_string())?;
    let m = mos(&market, "Market").map_err(|e| e.to_string())?;
    ensure((m.mean - 4.937).abs() <= 0.001 && (m.sd - 0.250).abs() <= 0.001, || format!("Market {m:?}"))?;

    // repeat differences: nine 0s, six 1s, one 2
    let diffs = [0u8, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 2];
    let mut recs = Vec::new();
    for (o, &d) in diffs.iter().enumerate() {
        recs.push(rec(&format!("o{o}"), "Balloon", 2, 0));
        recs.push(rec(&format!("o{o}"), "Balloon", 2 + d, 1));
    }
    let r = repeat_summary(&RatingSet::from_records(recs).map_err(|e| e.to_string())?, "Balloon").map_err(|e| e.to_string())?;
    ensure((r.mean - 0.5).abs() <= 0.0005 && (r.sd - 0.6325).abs() <= 0.0005, || format!("repeat row {r:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for case in 0..1000 {
        let n_obs = rng.random_range(3..=8);
        let n_stim = rng.random_range(1..=10);
        // first[o][s], and the repeat score for a subset
        let first: Vec<Vec<u8>> = (0..n_obs).map(|_| (0..n_stim).map(|_| rng.random_range(1..=5)).collect()).collect();
        let mut repeats: Vec<BTreeMap<usize, u8>> = vec![BTreeMap::new(); n_obs];
        let mut records = Vec::new();
        for o in 0..n_obs {
            let mut idx = 0;
            for s in 0..n_stim {
                records.push(rec(&format!("o{o}"), &format!("s{s}"), first[o][s], idx));
                idx += 1;
            }
            for s in 0..n_stim {
                if rng.random_bool(0.3) {
                    let v = rng.random_range(1..=5);
                    repeats[o].insert(s, v);
                    records.push(rec(&format!("o{o}"), &format!("s{s}"), v, idx));
                    idx += 1;
                }
            }
        }
        let set = RatingSet::from_records(records).map_err(|e| e.to_string())?;
        for o in 0..n_obs {
            let name = format!("o{o}");
            let inside = (0..n_stim)
                .filter(|&s| {
                    let others: Vec<f64> = (0..n_obs).filter(|&p| p != o).map(|p| first[p][s] as f64).collect();
                    let (mu, sd) = mean_sd(&others);
                    (first[o][s] as f64 - mu).abs() <= sd + 1e-9
                })
                .count();
            let want = inside as f64 / n_stim as f64;
            let got = agreement_percentage(&set, &name).map_err(|e| e.to_string())?;
            ensure((got - want).abs() < 1e-12, || format!("case {case} {name}: agreement {got} vs {want}"))?;

            let want_d = if repeats[o].is_empty() {
                0.0
            } else {
                repeats[o].iter().map(|(&s, &v)| (first[o][s] as f64 - v as f64).abs()).sum::<f64>() / repeats[o].len() as f64
            };
            let got_d = intra_observer_distance(&set, &name, &repeated_stimuli(&set, &name)).map_err(|e| e.to_string())?;
            ensure((got_d - want_d).abs() < 1e-12, || format!("case {case} {name}: distance {got_d} vs {want_d}"))?;
        }
    }

    let p = t_two_tailed_p(2.042, 30.0);
    ensure((p - 0.05).abs() <= 0.002, || format!("p(2.042, 30) = {p}"))
}

// ---------------------------------------------------------------- end to end

fn pipeline_config(dir: &Path, frames: usize, encoder: EncoderKind) -> Result<PipelineConfig, String> {
    let g = VideoGeometry::new(64, 64, 8, 24.0, frames).map_err(|e| e.to_string())?;
    let seq = synth_video(&SynthSpec::demo(g)).map_err(|e| e.to_string())?;
    let path = dir.join("synth.yuv");
    write_yuv(&path, g, &seq.frames).map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::from_toml(&format!("output_dir = {:?}\nsource = []\nseed = 1\n", dir.join("out")))
        .map_err(|e| e.to_string())?;
    cfg.sources.push(SourceConfig {
        name: "Synth".into(),
        path,
        geometry: g,
    });
    cfg.encoder = encoder;
    Ok(cfg)
}

fn end_to_end_suite() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = pipeline_config(a.path(), 48, EncoderKind::default())?;
    let first = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    ensure(first.succeeded(), || format!("failures: {:?}", first.failures))?;
    ensure(first.rows.len() == 16, || format!("{} manifest rows", first.rows.len()))?;
    let st = first.rows.iter().filter(|r| r.kind == RowKind::Spatiotemporal).count();
    ensure(st == 8, || format!("{st} spatiotemporal rows"))?;
    let manifest = fs::read(&first.manifest_path).map_err(|e| e.to_string())?;

    let rerun = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    ensure(rerun.encodes == 0, || format!("rerun made {} encodes", rerun.encodes))?;
    ensure(fs::read(&rerun.manifest_path).map_err(|e| e.to_string())? == manifest, || "rerun changed the manifest".into())?;

    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fresh = run_pipeline(&pipeline_config(b.path(), 48, EncoderKind::default())?).map_err(|e| e.to_string())?;
    ensure(fs::read(&fresh.manifest_path).map_err(|e| e.to_string())? == manifest, || "manifest not deterministic".into())
}

// ---------------------------------------------------------------- real encoder

fn real_encoder() -> Option<ExternalEncoder> {
    let e = ExternalEncoder::from_env();
    let explicit = std::env::var(ENCODER_ENV).is_ok();
    (explicit || resolve_binary(DEFAULT_ENCODER_BINARY).is_some()).then_some(e).filter(|e| e.resolve().is_ok())
}

fn real_encoder_suite(enc: ExternalEncoder) -> Check {
    let g = VideoGeometry::new(1920, 1080, 10, 50.0, 240).map_err(|e| e.to_string())?;
    let mut job = EncodeJob::new("in.yuv", g, "out.hevc", EncoderKind::External(enc.clone()));
    job.roi = Some(RoiQpVideoMap::frame_only(&[0], 22).map_err(|e| e.to_string())?);
    let args = build_command(&job).join(" ");
    for flag in ["--period 0", "--gop 0", "--input-res 1920x1080", "--preset ultrafast", "--input-bitdepth 10", "--input-fps 50", "--qp 22", "--roi out.hevc.roi.txt"] {
        ensure(args.contains(flag), || format!("'{flag}' missing from: {args}"))?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = pipeline_config(dir.path(), 240, EncoderKind::External(enc))?;
    let report = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    ensure(report.succeeded(), || format!("failures: {:?}", report.failures))?;
    for b in report.rows.iter().filter(|r| r.kind == RowKind::Baseline) {
        let st = report.rows.iter().find(|r| r.id == b.paired).ok_or_else(|| format!("{} unpaired", b.id))?;
        ensure(b.bitrate >= 0.8 * st.bitrate, || {
            format!("{}: baseline {:.0} bps is more than 20% below {:.0} bps", b.id, b.bitrate, st.bitrate)
        })?;
    }
    Ok(())
}

// ----------------------------------------------------------------

fn report(line: &str) {
    let _ = writeln!(std::io::stderr().lock(), "{line}");
}

fn run(name: &str, bound: Duration, f: impl FnOnce() -> Check) -> bool {
    let t = Instant::now();
    let result = f();
    let took = t.elapsed();
    let verdict = match &result {
        Ok(()) if took <= bound => "PASS".to_string(),
        Ok(()) => format!("FAIL (took longer than {:.0} s)", bound.as_secs_f64()),
        Err(e) => format!("FAIL: {e}"),
    };
    report(&format!("[{}] {name} ({:.2} s, bound {:.0} s)", verdict, took.as_secs_f64(), bound.as_secs_f64()));
    verdict == "PASS"
}

#[test]
fn acceptance() {
    let s = Duration::from_secs;
    let mut ok = true;
    ok &= run("schedule suite", s(1), schedule_suite);
    ok &= run("roi suite", s(10), roi_suite);
    ok &= run("sdsp suite", s(30), sdsp_suite);
    ok &= run("size matcher", s(1), matcher_suite);
    ok &= run("analysis fixtures", s(30), analysis_suite);
    ok &= run("end to end", s(60), end_to_end_suite);
    match real_encoder() {
        Some(enc) => ok &= run("real encoder", s(3600), || real_encoder_suite(enc)),
        None => report(&format!("[SKIP] real encoder (no encoder binary; set {ENCODER_ENV})")),
    }
    assert!(ok, "acceptance criteria failed; see the lines above");
}
