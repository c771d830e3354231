//! Utterance manifest CSV: `subject_id,label,utterance_id,frame_dir,num_frames`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 5] = ["subject_id", "label", "utterance_id", "frame_dir", "num_frames"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub label: usize,
    pub utterance_id: String,
    /// Relative paths are resolved against the manifest's directory.
    pub frame_dir: PathBuf,
    pub num_frames: usize,
}

impl ManifestEntry {
    pub fn key(&self) -> (&str, &str) {
        (&self.subject_id, &self.utterance_id)
    }

    pub fn frame_path(&self, root: &Path, index: usize) -> PathBuf {
        root.join(&self.frame_dir).join(frame_file_name(index))
    }
}

/// `frame_%06d.pgm`, numbered from 1.
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

pub fn parse_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_manifest_str(&text, path)
}

pub fn parse_manifest_str(text: &str, path: &Path) -> Result<Vec<ManifestEntry>> {
    let err = |detail: String| Error::Manifest {
        path: path.to_path_buf(),
        detail,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| err(format!("header: {e}")))?.clone();
    for name in MANIFEST_HEADER {
        if !header.iter().any(|h| h == name) {
            return Err(err(format!("missing column {name:?}")));
        }
    }
    if header.len() != MANIFEST_HEADER.len() || header.iter().zip(MANIFEST_HEADER).any(|(a, b)| a != b) {
        return Err(err(format!(
            "header {:?} does not match {}",
            header.iter().collect::<Vec<_>>(),
            MANIFEST_HEADER.join(",")
        )));
    }

    let mut entries = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        // Line 1 is the header.
        let line = i + 2;
        let record = record.map_err(|e| err(format!("line {line}: {e}")))?;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let label = field(1)
            .parse::<usize>()
            .map_err(|_| err(format!("line {line}: label {:?} is not a class index", field(1))))?;
        let num_frames = field(4)
            .parse::<usize>()
            .map_err(|_| err(format!("line {line}: num_frames {:?} is not an integer", field(4))))?;
        if num_frames < 2 {
            return Err(err(format!(
                "line {line}: num_frames {num_frames} < 2 (diff stream needs two frames)"
            )));
        }
        let entry = ManifestEntry {
            subject_id: field(0).to_string(),
            label,
            utterance_id: field(2).to_string(),
            frame_dir: PathBuf::from(field(3)),
            num_frames,
        };
        if entry.subject_id.is_empty() || entry.utterance_id.is_empty() {
            return Err(err(format!("line {line}: empty subject_id or utterance_id")));
        }
        let key = (entry.subject_id.clone(), entry.utterance_id.clone());
        if let Some(first) = seen.insert(key, line) {
            return Err(err(format!(
                "duplicate utterance ({}, {}) on lines {first} and {line}",
                entry.subject_id, entry.utterance_id
            )));
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = MANIFEST_HEADER.join(",");
    out.push('\n');
    for e in entries {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.subject_id,
            e.label,
            e.utterance_id,
            e.frame_dir.display(),
            e.num_frames
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
