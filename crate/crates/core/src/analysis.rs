//! Opinion-score statistics and report tables.
//!
//! Conventions:
//! * standard deviations use the `n - 1` denominator (0 when `n = 1`);
//! * MOS and agreement use each observer's first presentation of a
//!   stimulus, repeats only feed the intra-observer distance;
//! * agreement intervals `[mu - sigma, mu + sigma]` are inclusive, with
//!   `mu`, `sigma` computed over all other observers.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::manifest::{ManifestRow, RowKind};
use crate::study::RatingSet;

/// Slack for floating comparisons against interval bounds.
const BOUND_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no ratings for stimulus {0}")]
    UnknownStimulus(String),
    #[error("no ratings from observer {0}")]
    UnknownObserver(String),
    #[error("fewer than 3 observers rated: {}", .0.join(", "))]
    InsufficientRaters(Vec<String>),
    #[error("observer {observer} lacks a repeat pair for {stimulus}")]
    MissingRepeat { observer: String, stimulus: String },
    #[error("each group needs at least 2 scores")]
    GroupTooSmall,
    #[error("zero variance with different means")]
    DegenerateVariance,
    #[error("manifest row {0} has no paired row")]
    Unpaired(String),
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation, defined as 0 for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Score from each observer's first presentation, keyed by (observer, stimulus).
pub fn first_scores(ratings: &RatingSet) -> HashMap<(String, String), u8> {
    let mut first: HashMap<(String, String), (usize, u8)> = HashMap::new();
    for r in ratings.records() {
        let key = (r.observer.clone(), r.stimulus.clone());
        match first.get(&key) {
            Some(&(idx, _)) if idx <= r.presentation_index => {}
            _ => {
                first.insert(key, (r.presentation_index, r.score));
            }
        }
    }
    first.into_iter().map(|(k, (_, s))| (k, s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MosEntry {
    pub stimulus: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

pub fn mos(ratings: &RatingSet, stimulus: &str) -> Result<MosEntry, AnalysisError> {
    let scores: Vec<f64> = first_scores(ratings)
        .into_iter()
        .filter(|((_, s), _)| s == stimulus)
        .map(|(_, v)| v as f64)
        .collect();
    if scores.is_empty() {
        return Err(AnalysisError::UnknownStimulus(stimulus.to_string()));
    }
    Ok(MosEntry {
        stimulus: stimulus.to_string(),
        mean: mean(&scores),
        sd: sample_sd(&scores),
        n: scores.len(),
    })
}

/// MOS for every stimulus, in first-appearance order.
pub fn mos_table(ratings: &RatingSet) -> Vec<MosEntry> {
    ratings
        .stimuli()
        .iter()
        .map(|s| mos(ratings, s).expect("stimulus taken from the set"))
        .collect()
}

pub fn agreement_percentage(ratings: &RatingSet, observer: &str) -> Result<f64, AnalysisError> {
    let first = first_scores(ratings);
    let mut by_stimulus: BTreeMap<&str, Vec<(&str, u8)>> = BTreeMap::new();
    for ((o, s), &v) in &first {
        by_stimulus.entry(s.as_str()).or_default().push((o.as_str(), v));
    }
    let mut rated = 0usize;
    let mut inside = 0usize;
    let mut short = Vec::new();
    for (stimulus, scores) in &by_stimulus {
        let Some(&(_, own)) = scores.iter().find(|(o, _)| *o == observer) else {
            continue;
        };
        rated += 1;
        let others: Vec<f64> = scores.iter().filter(|(o, _)| *o != observer).map(|&(_, v)| v as f64).collect();
        if others.len() < 2 {
            short.push(stimulus.to_string());
            continue;
        }
        let (mu, sigma) = (mean(&others), sample_sd(&others));
        if (own as f64 - mu).abs() <= sigma + BOUND_EPS {
            inside += 1;
        }
    }
    if rated == 0 {
        return Err(AnalysisError::UnknownObserver(observer.to_string()));
    }
    if !short.is_empty() {
        return Err(AnalysisError::InsufficientRaters(short));
    }
    Ok(inside as f64 / rated as f64)
}

/// Presentations of `stimulus` by `observer`, in presentation order.
fn presentations(ratings: &RatingSet, observer: &str, stimulus: &str) -> Vec<u8> {
    let mut v: Vec<(usize, u8)> = ratings
        .records()
        .iter()
        .filter(|r| r.observer == observer && r.stimulus == stimulus)
        .map(|r| (r.presentation_index, r.score))
        .collect();
    v.sort_unstable();
    v.into_iter().map(|(_, s)| s).collect()
}

/// Stimuli this observer was shown more than once.
pub fn repeated_stimuli(ratings: &RatingSet, observer: &str) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in ratings.records().iter().filter(|r| r.observer == observer) {
        *counts.entry(r.stimulus.as_str()).or_default() += 1;
    }
    counts.into_iter().filter(|&(_, n)| n >= 2).map(|(s, _)| s.to_string()).collect()
}

/// Mean absolute difference between original and repeat scores over
/// `repeated`.
pub fn intra_observer_distance(ratings: &RatingSet, observer: &str, repeated: &[String]) -> Result<f64, AnalysisError> {
    if repeated.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for stimulus in repeated {
        let p = presentations(ratings, observer, stimulus);
        if p.len() < 2 {
            return Err(AnalysisError::MissingRepeat {
                observer: observer.to_string(),
                stimulus: stimulus.clone(),
            });
        }
        total += (p[0] as f64 - p[1] as f64).abs();
    }
    Ok(total / repeated.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatSummary {
    pub stimulus: String,
    pub mean: f64,
    pub sd: f64,
    pub min: u8,
    pub max: u8,
    pub n: usize,
}

/// Cross-observer view: |original - repeat| for one stimulus over every
/// observer who saw it twice.
pub fn repeat_summary(ratings: &RatingSet, stimulus: &str) -> Result<RepeatSummary, AnalysisError> {
    let diffs: Vec<u8> = ratings
        .observers()
        .iter()
        .filter_map(|o| {
            let p = presentations(ratings, o, stimulus);
            (p.len() >= 2).then(|| p[0].abs_diff(p[1]))
        })
        .collect();
    repeat_summary_from_diffs(stimulus, &diffs).ok_or_else(|| AnalysisError::UnknownStimulus(stimulus.to_string()))
}

pub fn repeat_summary_from_diffs(stimulus: &str, diffs: &[u8]) -> Option<RepeatSummary> {
    if diffs.is_empty() {
        return None;
    }
    let xs: Vec<f64> = diffs.iter().map(|&d| d as f64).collect();
    Some(RepeatSummary {
        stimulus: stimulus.to_string(),
        mean: mean(&xs),
        sd: sample_sd(&xs),
        min: *diffs.iter().min()?,
        max: *diffs.iter().max()?,
        n: diffs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreeningThresholds {
    /// Agreement at or below this is flagged (retention needs strictly more).
    pub agreement: f64,
    /// Distance strictly above this is flagged.
    pub distance: f64,
}

impl Default for ScreeningThresholds {
    fn default() -> Self {
        Self {
            agreement: 0.5,
            distance: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObserverReliability {
    pub observer: String,
    pub agreement: f64,
    /// `None` when the observer saw no repeats.
    pub intra_distance: Option<f64>,
    pub low_agreement: bool,
    pub high_distance: bool,
}

pub fn classify_observer(observer: &str, agreement: f64, intra_distance: Option<f64>, t: &ScreeningThresholds) -> ObserverReliability {
    ObserverReliability {
        observer: observer.to_string(),
        agreement,
        intra_distance,
        low_agreement: agreement <= t.agreement,
        high_distance: intra_distance.is_some_and(|d| d > t.distance),
    }
}

/// Reliability metrics per observer. Reporting only; no data is removed.
pub fn screen_observers(ratings: &RatingSet, t: &ScreeningThresholds) -> Result<Vec<ObserverReliability>, AnalysisError> {
    ratings
        .observers()
        .iter()
        .map(|o| {
            let agreement = agreement_percentage(ratings, o)?;
            let rep = repeated_stimuli(ratings, o);
            let dist = if rep.is_empty() {
                None
            } else {
                Some(intra_observer_distance(ratings, o, &rep)?)
            };
            Ok(classify_observer(o, agreement, dist, t))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Two-tailed p-value of a t statistic.
pub fn t_two_tailed_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Student's two-sample t-test; pooled variance unless `welch`.
pub fn two_sample_t(a: &[f64], b: &[f64], welch: bool) -> Result<TTest, AnalysisError> {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalysisError::GroupTooSmall);
    }
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_sd(a).powi(2), sample_sd(b).powi(2));
    let (se, df) = if welch {
        let (qa, qb) = (va / na, vb / nb);
        let df = if qa + qb > 0.0 {
            (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0))
        } else {
            na + nb - 2.0
        };
        ((qa + qb).sqrt(), df)
    } else {
        let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
        ((pooled * (1.0 / na + 1.0 / nb)).sqrt(), na + nb - 2.0)
    };
    let diff = ma - mb;
    if se == 0.0 {
        if diff.abs() < 1e-12 {
            return Ok(TTest { t: 0.0, df, p: 1.0 });
        }
        return Err(AnalysisError::DegenerateVariance);
    }
    let t = diff / se;
    Ok(TTest {
        t,
        df,
        p: t_two_tailed_p(t, df),
    })
}

/// First-presentation scores of `stimulus`, one per observer.
pub fn stimulus_scores(ratings: &RatingSet, stimulus: &str) -> Vec<f64> {
    let mut v: Vec<(String, f64)> = first_scores(ratings)
        .into_iter()
        .filter(|((_, s), _)| s == stimulus)
        .map(|((o, _), score)| (o, score as f64))
        .collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v.into_iter().map(|(_, s)| s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairComparison {
    pub stimulus: String,
    pub baseline: String,
    pub stimulus_mos: f64,
    pub baseline_mos: f64,
    pub test: Option<TTest>,
}

/// MOS of each spatiotemporal stimulus against its size-matched baseline,
/// with a two-sample t-test where both sides have at least two scores.
pub fn compare_pairs(ratings: &RatingSet, rows: &[ManifestRow], welch: bool) -> Vec<PairComparison> {
    rows.iter()
        .filter(|r| r.kind == RowKind::Spatiotemporal)
        .filter_map(|r| {
            let a = stimulus_scores(ratings, &r.id);
            let b = stimulus_scores(ratings, &r.paired);
            if a.is_empty() || b.is_empty() {
                return None;
            }
            Some(PairComparison {
                stimulus: r.id.clone(),
                baseline: r.paired.clone(),
                stimulus_mos: mean(&a),
                baseline_mos: mean(&b),
                test: two_sample_t(&a, &b, welch).ok(),
            })
        })
        .collect()
}

pub fn pairs_csv(pairs: &[PairComparison]) -> String {
    let mut s = String::from("stimulus,baseline,stimulus_mos,baseline_mos,t,df,p\n");
    for p in pairs {
        let (t, df, pv) = match p.test {
            Some(t) => (format!("{:.4}", t.t), format!("{:.2}", t.df), format!("{:.4}", t.p)),
            None => (String::new(), String::new(), String::new()),
        };
        let _ = writeln!(s, "{},{},{:.4},{:.4},{t},{df},{pv}", p.stimulus, p.baseline, p.stimulus_mos, p.baseline_mos);
    }
    s
}

pub fn mos_csv(entries: &[MosEntry]) -> String {
    let mut s = String::from("stimulus,mean,sd,n\n");
    for e in entries {
        let _ = writeln!(s, "{},{:.4},{:.4},{}", e.stimulus, e.mean, e.sd, e.n);
    }
    s
}

pub fn observers_csv(rows: &[ObserverReliability]) -> String {
    let mut s = String::from("observer,agreement,intra_distance,low_agreement,high_distance\n");
    for r in rows {
        let d = r.intra_distance.map(|d| format!("{d:.4}")).unwrap_or_default();
        let _ = writeln!(s, "{},{:.4},{d},{},{}", r.observer, r.agreement, r.low_agreement, r.high_distance);
    }
    s
}

pub fn repeats_csv(rows: &[RepeatSummary]) -> String {
    let mut s = String::from("stimulus,mean,sd,min,max,n\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.4},{:.4},{},{},{}", r.stimulus, r.mean, r.sd, r.min, r.max, r.n);
    }
    s
}

/// Per-stimulus repeat summaries for every stimulus someone saw twice.
pub fn repeat_table(ratings: &RatingSet) -> Vec<RepeatSummary> {
    let mut ids: Vec<String> = ratings
        .observers()
        .iter()
        .flat_map(|o| repeated_stimuli(ratings, o))
        .collect();
    ids.sort();
    ids.dedup();
    ids.iter().filter_map(|id| repeat_summary(ratings, id).ok()).collect()
}

pub fn mbps(bitrate_bps: f64) -> f64 {
    bitrate_bps / 1e6
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitrateCell {
    pub schedule: String,
    pub stimulus: String,
    pub baseline: String,
    pub stimulus_mbps: f64,
    pub baseline_mbps: f64,
    /// Baseline bitrate over stimulus bitrate.
    pub ratio: f64,
    pub stimulus_is_min: bool,
    pub baseline_is_min: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitrateRow {
    pub source: String,
    pub roi: bool,
    pub cells: Vec<BitrateCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitrateReport {
    pub schedules: Vec<String>,
    pub rows: Vec<BitrateRow>,
}

/// Groups paired rows by source and ROI scenario, one cell per schedule,
/// and flags the lowest bitrate per source.
pub fn bitrate_report(rows: &[ManifestRow]) -> Result<BitrateReport, AnalysisError> {
    let by_id: HashMap<&str, &ManifestRow> = rows.iter().map(|r| (r.id.as_str(), r)).collect();
    for r in rows.iter().filter(|r| r.kind == RowKind::Baseline) {
        match by_id.get(r.paired.as_str()) {
            Some(p) if p.kind == RowKind::Spatiotemporal && p.paired == r.id => {}
            _ => return Err(AnalysisError::Unpaired(r.id.clone())),
        }
    }
    let mut schedules: Vec<String> = Vec::new();
    let mut out: Vec<BitrateRow> = Vec::new();
    for st in rows.iter().filter(|r| r.kind == RowKind::Spatiotemporal) {
        let base = match by_id.get(st.paired.as_str()) {
            Some(b) if b.kind == RowKind::Baseline => *b,
            _ => return Err(AnalysisError::Unpaired(st.id.clone())),
        };
        if !schedules.contains(&st.schedule) {
            schedules.push(st.schedule.clone());
        }
        let (s, b) = (round4(mbps(st.bitrate)), round4(mbps(base.bitrate)));
        let cell = BitrateCell {
            schedule: st.schedule.clone(),
            stimulus: st.id.clone(),
            baseline: base.id.clone(),
            stimulus_mbps: s,
            baseline_mbps: b,
            ratio: base.bitrate / st.bitrate,
            stimulus_is_min: false,
            baseline_is_min: false,
        };
        match out.iter_mut().find(|r| r.source == st.source && r.roi == st.roi) {
            Some(row) => row.cells.push(cell),
            None => out.push(BitrateRow {
                source: st.source.clone(),
                roi: st.roi,
                cells: vec![cell],
            }),
        }
    }
    let sources: Vec<String> = out.iter().map(|r| r.source.clone()).collect();
    for source in sources {
        let min = out
            .iter()
            .filter(|r| r.source == source)
            .flat_map(|r| r.cells.iter().flat_map(|c| [c.stimulus_mbps, c.baseline_mbps]))
            .fold(f64::INFINITY, f64::min);
        for row in out.iter_mut().filter(|r| r.source == source) {
            for c in &mut row.cells {
                c.stimulus_is_min = c.stimulus_mbps == min;
                c.baseline_is_min = c.baseline_mbps == min;
            }
        }
    }
    Ok(BitrateReport { schedules, rows: out })
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

impl BitrateReport {
    /// Fixed-width text table; the per-source minimum carries a `*`.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<24}", "Source");
        for sch in &self.schedules {
            let _ = write!(s, " {:>10} {:>10}", sch, "C-QP");
        }
        s.push('\n');
        for row in &self.rows {
            let label = format!("{}-{}", row.source, if row.roi { "with CCR" } else { "No CCR" });
            let _ = write!(s, "{label:<24}");
            for sch in &self.schedules {
                match row.cells.iter().find(|c| &c.schedule == sch) {
                    Some(c) => {
                        let mark = |v: f64, m: bool| format!("{v:.4}{}", if m { "*" } else { "" });
                        let _ = write!(
                            s,
                            " {:>10} {:>10}",
                            mark(c.stimulus_mbps, c.stimulus_is_min),
                            mark(c.baseline_mbps, c.baseline_is_min)
                        );
                    }
                    None => {
                        let _ = write!(s, " {:>10} {:>10}", "-", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("source,roi,schedule,stimulus,baseline,stimulus_mbps,baseline_mbps,ratio,stimulus_is_min,baseline_is_min\n");
        for row in &self.rows {
            for c in &row.cells {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{:.4},{:.4},{:.4},{},{}",
                    row.source,
                    row.roi,
                    c.schedule,
                    c.stimulus,
                    c.baseline,
                    c.stimulus_mbps,
                    c.baseline_mbps,
                    c.ratio,
                    c.stimulus_is_min,
                    c.baseline_is_min
                );
            }
        }
        s
    }
}

/// `stimulus,mean,sd,n,ci95_low,ci95_high` rows for external plotting.
pub fn plot_data_csv(entries: &[MosEntry]) -> String {
    let mut s = String::from("stimulus,mean,sd,n,ci95_low,ci95_high\n");
    for e in entries {
        let half = if e.n >= 2 {
            let t = StudentsT::new(0.0, 1.0, (e.n - 1) as f64)
                .expect("positive degrees of freedom")
                .inverse_cdf(0.975);
            t * e.sd / (e.n as f64).sqrt()
        } else {
            0.0
        };
        let _ = writeln!(s, "{},{:.4},{:.4},{},{:.4},{:.4}", e.stimulus, e.mean, e.sd, e.n, e.mean - half, e.mean + half);
    }
    s
}
