//! Utterance storage, preprocessing and the two input streams.

mod manifest;
mod pgm;
mod sequence;
mod synthetic;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

pub use manifest::{
    frame_file_name, parse_manifest, parse_manifest_str, write_manifest, ManifestEntry, MANIFEST_HEADER,
};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use sequence::{
    flatten, load_sequence, make_stream_pair, preprocess, streams_from_raw, unflatten, z_normalize, DiffOrder,
    FrameSequence, FrameSpec, StreamPair, MIN_FRAME_STD,
};
pub use synthetic::{
    generate_synthetic, max_template_correlation, render_template, select_trajectories, subject_id, SynthConfig,
    Trajectory, MAX_TEMPLATE_CORRELATION,
};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";

/// A dataset directory: `manifest.csv` plus the frame directories it names.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub frame_spec: FrameSpec,
}

impl Dataset {
    /// Parses the manifest and reads the first frame to fix the frame size.
    pub fn open(root: &Path) -> Result<Self> {
        let entries = parse_manifest(&root.join(MANIFEST_FILE))?;
        let first = entries
            .first()
            .ok_or_else(|| Error::InvalidArgument(format!("{}: empty manifest", root.display())))?;
        let frame = read_pgm(&first.frame_path(root, 1))?;
        let frame_spec = FrameSpec::new(frame.rows(), frame.cols())?;
        Ok(Self {
            root: root.to_path_buf(),
            entries,
            frame_spec,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.entries.iter().map(|e| e.label + 1).max().unwrap_or(0)
    }

    pub fn subjects(&self) -> BTreeSet<String> {
        self.entries.iter().map(|e| e.subject_id.clone()).collect()
    }

    /// Loads, preprocesses and pairs every utterance whose subject passes `keep`,
    /// in manifest order.
    pub fn load_streams(&self, order: DiffOrder, keep: impl Fn(&str) -> bool) -> Result<Vec<StreamPair>> {
        self.entries
            .iter()
            .filter(|e| keep(&e.subject_id))
            .map(|e| streams_from_raw(load_sequence(&self.root, e, Some(self.frame_spec))?, order))
            .collect()
    }
}
