//! Single-stimulus hidden-reference session design and ratings ingestion.
//!
//! A [`SessionPlan`] is serialized as JSON:
//!
//! ```json
//! {
//!   "version": 1,
//!   "seed": 7,
//!   "scale_labels": ["Bad", "Poor", "Fair", "Good", "Excellent"],
//!   "policy": { "single_playback": true, "unlimited_rating_time": true, "non_adjacent_repeats": true },
//!   "training": [ { "id": "...", "media": "...", "role": "training_good" }, ... ],
//!   "items": [ { "id": "...", "media": "...", "role": "test", "config": "gaussian-nf16-ccr" }, ... ]
//! }
//! ```
//!
//! Ratings CSV header: `observer,stimulus,score,timestamp,presentation_index`.
//! Row numbers in errors count data rows from 1.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PLAN_VERSION: u32 = 1;
pub const DEFAULT_REPEATS: usize = 6;
pub const MAX_RESHUFFLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid session input: {0}")]
    Input(String),
    #[error("could not separate repeats from their originals after {0} shuffles")]
    Adjacency(usize),
    #[error("ratings row {row}: {reason}")]
    Rating { row: usize, reason: String },
    #[error("plan file: {0}")]
    Plan(#[from] serde_json::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn default_scale_labels() -> Vec<String> {
    ["Bad", "Poor", "Fair", "Good", "Excellent"].map(String::from).to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StimulusRole {
    Test,
    HiddenReference,
    Repeat,
    TrainingGood,
    TrainingBad,
}

impl StimulusRole {
    pub fn is_training(self) -> bool {
        matches!(self, StimulusRole::TrainingGood | StimulusRole::TrainingBad)
    }

    pub fn is_rated(self) -> bool {
        matches!(self, StimulusRole::Test | StimulusRole::HiddenReference)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusRecord {
    pub id: String,
    pub media: String,
    pub role: StimulusRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
}

impl StimulusRecord {
    pub fn new(id: impl Into<String>, media: impl Into<String>, role: StimulusRole) -> Self {
        Self {
            id: id.into(),
            media: media.into(),
            role,
            config: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPolicy {
    pub single_playback: bool,
    pub unlimited_rating_time: bool,
    pub non_adjacent_repeats: bool,
}

impl Default for SessionPolicy {
    fn default() -> Self {
        Self {
            single_playback: true,
            unlimited_rating_time: true,
            non_adjacent_repeats: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub version: u32,
    pub seed: u64,
    pub scale_labels: Vec<String>,
    pub policy: SessionPolicy,
    pub training: Vec<StimulusRecord>,
    pub items: Vec<StimulusRecord>,
}

impl SessionPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, StudyError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StudyError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|source| StudyError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StudyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| StudyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Ids of stimuli presented twice.
    pub fn repeated_ids(&self) -> Vec<String> {
        self.items
            .iter()
            .filter(|r| r.role == StimulusRole::Repeat)
            .map(|r| r.id.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOptions {
    pub repeat_count: usize,
    /// Use exactly these ids as repeats instead of drawing them.
    pub fixed_repeats: Option<Vec<String>>,
    pub non_adjacent_repeats: bool,
    pub scale_labels: Vec<String>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            repeat_count: DEFAULT_REPEATS,
            fixed_repeats: None,
            non_adjacent_repeats: true,
            scale_labels: default_scale_labels(),
        }
    }
}

fn has_adjacent_repeat(items: &[StimulusRecord]) -> Option<usize> {
    items.windows(2).position(|w| w[0].id == w[1].id)
}

/// Builds a plan from rated stimuli (test + hidden references) and optional
/// training records. Pure in `(stimuli, options, seed)`.
pub fn build_session(stimuli: &[StimulusRecord], options: &SessionOptions, seed: u64) -> Result<SessionPlan, StudyError> {
    let mut training: Vec<StimulusRecord> = stimuli.iter().filter(|s| s.role.is_training()).cloned().collect();
    training.sort_by_key(|s| s.role != StimulusRole::TrainingGood);
    let rated: Vec<StimulusRecord> = stimuli.iter().filter(|s| s.role.is_rated()).cloned().collect();
    if stimuli.iter().any(|s| s.role == StimulusRole::Repeat) {
        return Err(StudyError::Input("repeat records are generated, not supplied".into()));
    }
    if !rated.iter().any(|s| s.role == StimulusRole::HiddenReference) {
        return Err(StudyError::Input("at least one hidden reference (source) is required".into()));
    }
    let mut seen = HashSet::new();
    for s in stimuli {
        if !seen.insert(s.id.as_str()) {
            return Err(StudyError::Input(format!("duplicate stimulus id {}", s.id)));
        }
    }
    if options.scale_labels.len() != 5 {
        return Err(StudyError::Input("the rating scale needs exactly 5 labels".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let repeats: Vec<StimulusRecord> = match &options.fixed_repeats {
        Some(ids) => ids
            .iter()
            .map(|id| {
                rated
                    .iter()
                    .find(|s| &s.id == id)
                    .cloned()
                    .ok_or_else(|| StudyError::Input(format!("fixed repeat {id} is not a rated stimulus")))
            })
            .collect::<Result<_, _>>()?,
        None => {
            if options.repeat_count > rated.len() {
                return Err(StudyError::Input(format!(
                    "{} repeats requested from {} rated stimuli",
                    options.repeat_count,
                    rated.len()
                )));
            }
            rated.choose_multiple(&mut rng, options.repeat_count).cloned().collect()
        }
    };
    if repeats.iter().map(|r| &r.id).collect::<HashSet<_>>().len() != repeats.len() {
        return Err(StudyError::Input("repeat list contains duplicates".into()));
    }

    let mut items: Vec<StimulusRecord> = rated.iter().cloned().chain(repeats.iter().cloned()).collect();
    items.shuffle(&mut rng);
    if options.non_adjacent_repeats && !repeats.is_empty() {
        let mut attempts = 0;
        while has_adjacent_repeat(&items).is_some() {
            attempts += 1;
            if attempts > MAX_RESHUFFLES {
                return Err(StudyError::Adjacency(MAX_RESHUFFLES));
            }
            items.shuffle(&mut rng);
        }
    }
    // the later of the two presentations is the repeat
    let repeat_ids: HashSet<&str> = repeats.iter().map(|r| r.id.as_str()).collect();
    let mut first_seen = HashSet::new();
    for item in &mut items {
        if repeat_ids.contains(item.id.as_str()) && !first_seen.insert(item.id.clone()) {
            item.role = StimulusRole::Repeat;
        }
    }

    Ok(SessionPlan {
        version: PLAN_VERSION,
        seed,
        scale_labels: options.scale_labels.clone(),
        policy: SessionPolicy {
            non_adjacent_repeats: options.non_adjacent_repeats,
            ..SessionPolicy::default()
        },
        training,
        items,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyMainList,
    TrainingInMainList(String),
    NonTrainingInTraining(String),
    DuplicateId(String),
    RepeatWithoutOriginal(String),
    RepeatBeforeOriginal(String),
    AdjacentRepeat { id: String, position: usize },
    ScaleLabels(usize),
    UnsupportedVersion(u32),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyMainList => f.write_str("main list is empty"),
            Violation::TrainingInMainList(id) => write!(f, "training item {id} appears in the main list"),
            Violation::NonTrainingInTraining(id) => write!(f, "{id} in the training list is not a training item"),
            Violation::DuplicateId(id) => write!(f, "stimulus {id} appears more than once without a repeat role"),
            Violation::RepeatWithoutOriginal(id) => write!(f, "repeat {id} has no original presentation"),
            Violation::RepeatBeforeOriginal(id) => write!(f, "repeat {id} precedes its original"),
            Violation::AdjacentRepeat { id, position } => {
                write!(f, "stimulus {id} is adjacent to its repeat at position {position}")
            }
            Violation::ScaleLabels(n) => write!(f, "rating scale has {n} labels, expected 5"),
            Violation::UnsupportedVersion(v) => write!(f, "plan version {v} is not supported"),
        }
    }
}

/// All invariant violations of `plan`; empty iff valid.
pub fn validate_session(plan: &SessionPlan) -> Vec<Violation> {
    let mut out = Vec::new();
    if plan.version != PLAN_VERSION {
        out.push(Violation::UnsupportedVersion(plan.version));
    }
    if plan.scale_labels.len() != 5 {
        out.push(Violation::ScaleLabels(plan.scale_labels.len()));
    }
    if plan.items.is_empty() {
        out.push(Violation::EmptyMainList);
    }
    for t in &plan.training {
        if !t.role.is_training() {
            out.push(Violation::NonTrainingInTraining(t.id.clone()));
        }
    }
    let training_ids: HashSet<&str> = plan.training.iter().map(|t| t.id.as_str()).collect();
    let mut originals: HashSet<&str> = HashSet::new();
    for item in &plan.items {
        if item.role.is_training() || training_ids.contains(item.id.as_str()) {
            out.push(Violation::TrainingInMainList(item.id.clone()));
            continue;
        }
        if item.role == StimulusRole::Repeat {
            if !originals.contains(item.id.as_str()) {
                let later = plan.items.iter().any(|o| o.id == item.id && o.role.is_rated());
                out.push(if later {
                    Violation::RepeatBeforeOriginal(item.id.clone())
                } else {
                    Violation::RepeatWithoutOriginal(item.id.clone())
                });
            }
        } else if !originals.insert(item.id.as_str()) {
            out.push(Violation::DuplicateId(item.id.clone()));
        }
    }
    let mut repeat_counts: HashMap<&str, usize> = HashMap::new();
    for item in plan.items.iter().filter(|i| i.role == StimulusRole::Repeat) {
        *repeat_counts.entry(item.id.as_str()).or_default() += 1;
    }
    for (id, n) in repeat_counts {
        if n > 1 {
            out.push(Violation::DuplicateId(id.to_string()));
        }
    }
    if plan.policy.non_adjacent_repeats {
        for (i, w) in plan.items.windows(2).enumerate() {
            if w[0].id == w[1].id {
                out.push(Violation::AdjacentRepeat {
                    id: w[0].id.clone(),
                    position: i,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub observer: String,
    pub stimulus: String,
    pub score: u8,
    pub timestamp: String,
    pub presentation_index: usize,
}

pub const RATINGS_HEADER: [&str; 5] = ["observer", "stimulus", "score", "timestamp", "presentation_index"];

/// Validated ratings: scores in `1..=5`, one record per (observer, presentation).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RatingSet {
    records: Vec<RatingRecord>,
    keys: HashSet<(String, usize)>,
}

impl RatingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = RatingRecord>) -> Result<Self, StudyError> {
        let mut set = Self::new();
        for (i, r) in records.into_iter().enumerate() {
            set.push(r).map_err(|reason| StudyError::Rating { row: i + 1, reason })?;
        }
        Ok(set)
    }

    pub fn push(&mut self, r: RatingRecord) -> Result<(), String> {
        if !(1..=5).contains(&r.score) {
            return Err(format!("score {} outside 1..=5", r.score));
        }
        if r.observer.is_empty() || r.stimulus.is_empty() {
            return Err("observer and stimulus must be non-empty".into());
        }
        if !self.keys.insert((r.observer.clone(), r.presentation_index)) {
            return Err(format!(
                "duplicate rating for observer {} at presentation {}",
                r.observer, r.presentation_index
            ));
        }
        self.records.push(r);
        Ok(())
    }

    pub fn contains(&self, observer: &str, presentation_index: usize) -> bool {
        self.keys.contains(&(observer.to_string(), presentation_index))
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Observers in first-appearance order.
    pub fn observers(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.observer.as_str()))
            .map(|r| r.observer.clone())
            .collect()
    }

    /// Stimuli in first-appearance order.
    pub fn stimuli(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.stimulus.as_str()))
            .map(|r| r.stimulus.clone())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(RATINGS_HEADER).expect("in-memory write");
        for r in &self.records {
            let score = r.score.to_string();
            let idx = r.presentation_index.to_string();
            w.write_record([r.observer.as_str(), &r.stimulus, &score, &r.timestamp, &idx])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// Label for a score on the default scale.
pub fn score_label(score: u8) -> Option<&'static str> {
    ["Bad", "Poor", "Fair", "Good", "Excellent"].get((score as usize).checked_sub(1)?).copied()
}

pub fn parse_ratings(reader: impl Read) -> Result<RatingSet, StudyError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| StudyError::Rating {
        row: 0,
        reason: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != RATINGS_HEADER {
        return Err(StudyError::Rating {
            row: 0,
            reason: format!("expected header {}", RATINGS_HEADER.join(",")),
        });
    }
    let mut set = RatingSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let fail = |reason: String| StudyError::Rating { row: row_no, reason };
        let row = row.map_err(|e| fail(e.to_string()))?;
        if row.len() != 5 {
            return Err(fail(format!("expected 5 fields, found {}", row.len())));
        }
        let score: u8 = row[2].parse().map_err(|_| fail(format!("score '{}' is not an integer in 1..=5", &row[2])))?;
        let presentation_index: usize = row[4]
            .parse()
            .map_err(|_| fail(format!("presentation_index '{}' is not a non-negative integer", &row[4])))?;
        set.push(RatingRecord {
            observer: row[0].to_string(),
            stimulus: row[1].to_string(),
            score,
            timestamp: row[3].to_string(),
            presentation_index,
        })
        .map_err(fail)?;
    }
    Ok(set)
}

pub fn ingest_ratings(path: impl AsRef<Path>) -> Result<RatingSet, StudyError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| StudyError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_ratings(std::io::BufReader::new(file))
}
