//! Pipeline manifest: one CSV row per encoded stimulus.
//!
//! Rows are appended as encodes finish so an interrupted run can resume by
//! id. [`Manifest::finalize`] rewrites the file in canonical order, which
//! makes the final file independent of completion order.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("duplicate manifest id {0}")]
    Duplicate(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Spatiotemporal,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub source: String,
    /// Configuration descriptor, e.g. `gaussian-nf16-ccr`.
    pub config: String,
    /// Schedule column label, e.g. `nf=16/G`.
    pub schedule: String,
    pub kind: RowKind,
    pub roi: bool,
    pub qp: i32,
    pub size: u64,
    pub bitrate: f64,
    /// Baseline id for a spatiotemporal row, stimulus id for a baseline row.
    pub paired: String,
    /// Baseline size over target size; empty on spatiotemporal rows.
    pub ratio: Option<f64>,
    /// Bitstream file name relative to the output directory.
    pub media: String,
}

pub const MANIFEST_HEADER: [&str; 12] = [
    "id", "source", "config", "schedule", "kind", "roi", "qp", "size", "bitrate", "paired", "ratio", "media",
];

#[derive(Debug)]
pub struct Manifest {
    path: PathBuf,
    rows: Vec<ManifestRow>,
    ids: HashSet<String>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestRow>, ManifestError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let fmt = |reason: String| ManifestError::Format {
        path: path.to_path_buf(),
        reason,
    };
    let headers = rdr.headers().map_err(|e| fmt(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(fmt(format!("expected header {}", MANIFEST_HEADER.join(","))));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| fmt(format!("row {}: {e}", i + 1))))
        .collect()
}

pub fn manifest_csv(rows: &[ManifestRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    let mut out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv");
    if rows.is_empty() {
        out = MANIFEST_HEADER.join(",") + "\n";
    }
    out
}

impl Manifest {
    /// Opens an existing manifest or starts an empty one at `path`.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, ManifestError> {
        let path = path.into();
        let rows = if path.exists() {
            let text = fs::read_to_string(&path).map_err(io(&path))?;
            if text.trim().is_empty() {
                Vec::new()
            } else {
                parse_manifest(&text, &path)?
            }
        } else {
            Vec::new()
        };
        let mut ids = HashSet::new();
        for r in &rows {
            if !ids.insert(r.id.clone()) {
                return Err(ManifestError::Duplicate(r.id.clone()));
            }
        }
        Ok(Self { path, rows, ids })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    pub fn get(&self, id: &str) -> Option<&ManifestRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    /// Appends a row to memory and to the file.
    pub fn append(&mut self, row: ManifestRow) -> Result<(), ManifestError> {
        if self.ids.contains(&row.id) {
            return Err(ManifestError::Duplicate(row.id));
        }
        let fresh = fs::metadata(&self.path).map(|m| m.len() == 0).unwrap_or(true);
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        if fresh {
            w.write_record(MANIFEST_HEADER).expect("in-memory write");
        }
        w.serialize(&row).expect("in-memory write");
        let bytes = w.into_inner().expect("in-memory flush");
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io(&self.path))?;
        f.write_all(&bytes).map_err(io(&self.path))?;
        self.ids.insert(row.id.clone());
        self.rows.push(row);
        Ok(())
    }

    /// Sorts rows by their position in `order` (unknown ids last, by id) and
    /// rewrites the file atomically.
    pub fn finalize(&mut self, order: &[String]) -> Result<(), ManifestError> {
        let rank = |id: &str| order.iter().position(|o| o == id).unwrap_or(usize::MAX);
        self.rows
            .sort_by(|a, b| rank(&a.id).cmp(&rank(&b.id)).then_with(|| a.id.cmp(&b.id)));
        let tmp = self.path.with_extension("csv.tmp");
        fs::write(&tmp, manifest_csv(&self.rows)).map_err(io(&tmp))?;
        fs::rename(&tmp, &self.path).map_err(io(&self.path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str) -> ManifestRow {
        ManifestRow {
            id: id.into(),
            source: "S".into(),
            config: "gaussian-nf16-frame".into(),
            schedule: "nf=16/G".into(),
            kind: RowKind::Spatiotemporal,
            roi: false,
            qp: 22,
            size: 1000,
            bitrate: 0.1 + 0.2,
            paired: format!("{id}-C-QP"),
            ratio: None,
            media: format!("{id}.hevc"),
        }
    }

    #[test]
    fn append_reopen_finalize() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let mut m = Manifest::open(&path).unwrap();
        m.append(row("b")).unwrap();
        m.append(row("a")).unwrap();
        assert!(matches!(m.append(row("a")), Err(ManifestError::Duplicate(_))));

        let mut m = Manifest::open(&path).unwrap();
        assert_eq!(m.rows().len(), 2);
        assert!(m.contains("a") && m.contains("b"));
        assert_eq!(m.get("a").unwrap().bitrate, 0.1 + 0.2);

        m.finalize(&["a".into(), "b".into()]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], MANIFEST_HEADER.join(","));
        assert!(lines[1].starts_with("a,"));
        assert_eq!(Manifest::open(&path).unwrap().rows(), m.rows());
    }

    #[test]
    fn ratio_round_trips() {
        let mut r = row("x");
        r.kind = RowKind::Baseline;
        r.ratio = Some(0.975);
        let text = manifest_csv(std::slice::from_ref(&r));
        assert_eq!(parse_manifest(&text, Path::new("m")).unwrap(), vec![r]);
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(parse_manifest("a,b\n1,2\n", Path::new("m")).is_err());
    }
}
