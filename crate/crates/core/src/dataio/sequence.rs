use std::path::Path;

use super::manifest::ManifestEntry;
use super::pgm::read_pgm;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Frames whose standard deviation falls below this are zeroed rather than scaled.
pub const MIN_FRAME_STD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpec {
    pub height: usize,
    pub width: usize,
}

impl FrameSpec {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::InvalidArgument(format!(
                "frame spec {height}x{width}: both sides must be at least 2"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Which frames the diff stream is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiffOrder {
    /// Differences of mean-subtracted, z-normalised frames.
    #[default]
    AfterPreprocess,
    /// Differences of the stored frames, each difference then z-normalised.
    BeforePreprocess,
}

impl DiffOrder {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "after" => Ok(Self::AfterPreprocess),
            "before" => Ok(Self::BeforePreprocess),
            other => Err(Error::Config(format!("diff order {other:?}, expected after|before"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::AfterPreprocess => "after",
            Self::BeforePreprocess => "before",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub entry: ManifestEntry,
    pub frames: Vec<Matrix>,
    pub preprocessed: bool,
}

impl FrameSequence {
    pub fn new(entry: ManifestEntry, frames: Vec<Matrix>) -> Result<Self> {
        if frames.len() != entry.num_frames {
            return Err(Error::InvalidArgument(format!(
                "utterance {}: {} frames, manifest says {}",
                entry.utterance_id,
                frames.len(),
                entry.num_frames
            )));
        }
        if let Some(first) = frames.first() {
            if frames.iter().any(|f| f.shape() != first.shape()) {
                return Err(Error::shape("FrameSequence::new", "frames differ in size"));
            }
        }
        Ok(Self {
            entry,
            frames,
            preprocessed: false,
        })
    }

    pub fn frame_spec(&self) -> Option<FrameSpec> {
        self.frames.first().map(|f| FrameSpec {
            height: f.rows(),
            width: f.cols(),
        })
    }
}

/// Loads every frame of one manifest entry, checking the frame size.
pub fn load_sequence(root: &Path, entry: &ManifestEntry, spec: Option<FrameSpec>) -> Result<FrameSequence> {
    let frames = (1..=entry.num_frames)
        .map(|i| read_pgm(&entry.frame_path(root, i)))
        .collect::<Result<Vec<_>>>()?;
    let seq = FrameSequence::new(entry.clone(), frames)?;
    if let (Some(want), Some(got)) = (spec, seq.frame_spec()) {
        if want != got {
            return Err(Error::shape(
                "load_sequence",
                format!(
                    "utterance {}: frames are {}x{}, expected {}x{}",
                    entry.utterance_id, got.height, got.width, want.height, want.width
                ),
            ));
        }
    }
    Ok(seq)
}

fn mean_image(frames: &[Matrix]) -> Matrix {
    let mut mean = Matrix::zeros(frames[0].rows(), frames[0].cols());
    for f in frames {
        mean.axpy(1.0, f).expect("frames share one shape");
    }
    mean.scale(1.0 / frames.len() as f64);
    mean
}

/// Per-frame z-normalisation; near-constant frames become zero.
pub fn z_normalize(frame: &mut Matrix) {
    let n = frame.len() as f64;
    let mean = frame.mean();
    let var = frame.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < MIN_FRAME_STD {
        frame.fill(0.0);
    } else {
        frame.map_inplace(|x| (x - mean) / std);
    }
}

/// Subtracts the utterance mean image from every frame, then z-normalises each frame.
pub fn preprocess(mut seq: FrameSequence) -> Result<FrameSequence> {
    if seq.preprocessed {
        return Err(Error::AlreadyPreprocessed);
    }
    if seq.frames.is_empty() {
        return Err(Error::InvalidArgument("empty utterance".into()));
    }
    let mean = mean_image(&seq.frames);
    for f in &mut seq.frames {
        f.axpy(-1.0, &mean)?;
        z_normalize(f);
    }
    seq.preprocessed = true;
    Ok(seq)
}

/// Index-aligned raw and diff streams of one utterance, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamPair {
    pub raw: Matrix,
    pub diff: Matrix,
    pub label: usize,
}

impl StreamPair {
    pub fn len(&self) -> usize {
        self.raw.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.rows() == 0
    }
}

fn stack_flattened(frames: &[Matrix]) -> Matrix {
    let dim = frames.first().map_or(0, Matrix::len);
    let mut out = Matrix::zeros(frames.len(), dim);
    for (t, f) in frames.iter().enumerate() {
        out.row_mut(t).copy_from_slice(f.as_slice());
    }
    out
}

/// Rows `t >= 1` hold `x_t - x_{t-1}`; row 0 is zero.
fn successive_differences(x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for t in 1..x.rows() {
        let (prev, cur) = (x.row(t - 1), x.row(t));
        for ((o, a), b) in out.row_mut(t).iter_mut().zip(cur).zip(prev) {
            *o = a - b;
        }
    }
    out
}

pub fn make_stream_pair(seq: &FrameSequence) -> Result<StreamPair> {
    if !seq.preprocessed {
        return Err(Error::NotPreprocessed);
    }
    let raw = stack_flattened(&seq.frames);
    let diff = successive_differences(&raw);
    Ok(StreamPair {
        raw,
        diff,
        label: seq.entry.label,
    })
}

/// Preprocesses a freshly loaded utterance and builds both streams.
pub fn streams_from_raw(seq: FrameSequence, order: DiffOrder) -> Result<StreamPair> {
    match order {
        DiffOrder::AfterPreprocess => make_stream_pair(&preprocess(seq)?),
        DiffOrder::BeforePreprocess => {
            if seq.preprocessed {
                return Err(Error::AlreadyPreprocessed);
            }
            let stored = stack_flattened(&seq.frames);
            let mut diff = successive_differences(&stored);
            let (h, w) = seq.frames[0].shape();
            for t in 1..diff.rows() {
                let mut frame = Matrix::from_vec(h, w, diff.row(t).to_vec())?;
                z_normalize(&mut frame);
                diff.row_mut(t).copy_from_slice(frame.as_slice());
            }
            let mut pair = make_stream_pair(&preprocess(seq)?)?;
            pair.diff = diff;
            Ok(pair)
        }
    }
}

/// Row-major flatten of one frame.
pub fn flatten(frame: &Matrix) -> Vec<f64> {
    frame.as_slice().to_vec()
}

pub fn unflatten(values: &[f64], spec: FrameSpec) -> Result<Matrix> {
    Matrix::from_vec(spec.height, spec.width, values.to_vec())
}
