//! Deterministic synthetic utterances.
//!
//! Each class is a bright Gaussian blob travelling along its own arc of an
//! ellipse centred in the frame. Subjects add a static background texture,
//! brightness offset and contrast; every utterance adds a time warp, small
//! positional jitter and pixel noise. Per-utterance mean-image subtraction
//! removes the subject's static appearance, so the class is only recoverable
//! from how pixels change over time.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use super::manifest::{frame_file_name, write_manifest, ManifestEntry};
use super::pgm::write_pgm;
use super::sequence::FrameSpec;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};

/// Templates of distinct classes must correlate below this on average.
pub const MAX_TEMPLATE_CORRELATION: f64 = 0.5;
const MAX_PATTERN_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub subjects: usize,
    pub reps: usize,
    pub frame_spec: FrameSpec,
    pub min_frames: usize,
    pub max_frames: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 5,
            subjects: 6,
            reps: 3,
            frame_spec: FrameSpec {
                height: 26,
                width: 44,
            },
            min_frames: 14,
            max_frames: 22,
            noise_std: 6.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_classes < 2 {
            return bad(format!("num_classes {} < 2", self.num_classes));
        }
        if self.subjects < 3 {
            return bad(format!("subjects {} < 3", self.subjects));
        }
        if self.reps < 1 {
            return bad("reps must be at least 1".into());
        }
        FrameSpec::new(self.frame_spec.height, self.frame_spec.width)?;
        if self.min_frames < 2 || self.max_frames < self.min_frames {
            return bad(format!(
                "frame range [{}, {}] must satisfy 2 <= min <= max",
                self.min_frames, self.max_frames
            ));
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return bad(format!("noise_std {}", self.noise_std));
        }
        Ok(())
    }
}

/// Arc followed by one class: angle `start + sweep * s` for `s` in `[0, 1]`,
/// on an ellipse scaled by `radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub start: f64,
    pub sweep: f64,
    pub radius: f64,
}

impl Trajectory {
    fn center(&self, spec: FrameSpec, s: f64) -> (f64, f64) {
        let angle = self.start + self.sweep * s;
        let cy = (spec.height as f64 - 1.0) / 2.0;
        let cx = (spec.width as f64 - 1.0) / 2.0;
        let ry = 0.32 * spec.height as f64 * self.radius;
        let rx = 0.32 * spec.width as f64 * self.radius;
        (cy + ry * angle.sin(), cx + rx * angle.cos())
    }
}

fn class_trajectories(num_classes: usize, attempt: u64, seed: u64) -> Vec<Trajectory> {
    if attempt == 0 {
        return (0..num_classes)
            .map(|k| Trajectory {
                start: 2.0 * PI * k as f64 / num_classes as f64,
                sweep: if k % 2 == 0 { PI } else { -PI },
                radius: if (k / 2) % 2 == 0 { 1.0 } else { 0.6 },
            })
            .collect();
    }
    let mut rng = Rng::derive(seed, "synthetic-patterns").substream("attempt", attempt);
    (0..num_classes)
        .map(|_| Trajectory {
            start: rng.uniform_range(0.0, 2.0 * PI),
            sweep: rng.uniform_range(0.6 * PI, 1.4 * PI) * if rng.uniform() < 0.5 { 1.0 } else { -1.0 },
            radius: rng.uniform_range(0.5, 1.0),
        })
        .collect()
}

fn blob_sigma(spec: FrameSpec) -> f64 {
    0.11 * spec.height.min(spec.width) as f64
}

fn render_blob(frame: &mut Matrix, center: (f64, f64), sigma: f64, amplitude: f64) {
    let denom = 2.0 * sigma * sigma;
    for y in 0..frame.rows() {
        for x in 0..frame.cols() {
            let d2 = (y as f64 - center.0).powi(2) + (x as f64 - center.1).powi(2);
            frame[(y, x)] += amplitude * (-d2 / denom).exp();
        }
    }
}

/// Noise-free blob frames of one class at `len` evenly spaced time points.
pub fn render_template(traj: &Trajectory, spec: FrameSpec, len: usize) -> Vec<Matrix> {
    (0..len)
        .map(|t| {
            let s = t as f64 / (len - 1).max(1) as f64;
            let mut f = Matrix::zeros(spec.height, spec.width);
            render_blob(&mut f, traj.center(spec, s), blob_sigma(spec), 1.0);
            f
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Largest, over class pairs, of the frame-wise Pearson correlation averaged over time.
pub fn max_template_correlation(templates: &[Vec<Matrix>]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..templates.len() {
        for j in i + 1..templates.len() {
            let (a, b) = (&templates[i], &templates[j]);
            let mean = a
                .iter()
                .zip(b)
                .map(|(x, y)| pearson(x.as_slice(), y.as_slice()))
                .sum::<f64>()
                / a.len() as f64;
            worst = worst.max(mean);
        }
    }
    worst
}

/// Class trajectories whose templates satisfy the distinctness bound.
pub fn select_trajectories(config: &SynthConfig) -> Result<Vec<Trajectory>> {
    let len = config.max_frames;
    for attempt in 0..MAX_PATTERN_ATTEMPTS {
        let trajs = class_trajectories(config.num_classes, attempt, config.seed);
        let templates: Vec<_> = trajs
            .iter()
            .map(|t| render_template(t, config.frame_spec, len))
            .collect();
        if max_template_correlation(&templates) < MAX_TEMPLATE_CORRELATION {
            return Ok(trajs);
        }
    }
    Err(Error::InvalidArgument(format!(
        "no distinct class patterns found for {} classes at {}x{}",
        config.num_classes, config.frame_spec.height, config.frame_spec.width
    )))
}

struct SubjectStyle {
    background: Matrix,
    brightness: f64,
    contrast: f64,
}

fn subject_style(config: &SynthConfig, subject: usize) -> SubjectStyle {
    let spec = config.frame_spec;
    let mut rng = Rng::derive(config.seed, "synthetic-subject").substream("subject", subject as u64);
    let mut background = Matrix::filled(spec.height, spec.width, 100.0);
    let gy = rng.uniform_range(-1.5, 1.5);
    let gx = rng.uniform_range(-1.0, 1.0);
    for y in 0..spec.height {
        for x in 0..spec.width {
            background[(y, x)] += gy * y as f64 + gx * x as f64;
        }
    }
    for _ in 0..4 {
        let c = (
            rng.uniform_range(0.0, spec.height as f64),
            rng.uniform_range(0.0, spec.width as f64),
        );
        let sigma = rng.uniform_range(2.0, 0.3 * spec.height.max(spec.width) as f64);
        let amp = rng.uniform_range(-30.0, 30.0);
        render_blob(&mut background, c, sigma, amp);
    }
    SubjectStyle {
        background,
        brightness: rng.normal(0.0, 12.0),
        contrast: rng.uniform_range(0.75, 1.25),
    }
}

fn render_utterance(
    config: &SynthConfig,
    traj: &Trajectory,
    style: &SubjectStyle,
    rng: &mut Rng,
) -> Vec<Matrix> {
    let spec = config.frame_spec;
    let len = config.min_frames + rng.below((config.max_frames - config.min_frames + 1) as u64) as usize;
    let warp = rng.uniform_range(0.8, 1.25);
    let jitter = traj.sweep.abs() * rng.uniform_range(-0.05, 0.05);
    let shift = (rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0));
    let sigma = blob_sigma(spec) * rng.uniform_range(0.9, 1.1);
    let amplitude = 90.0 * style.contrast;
    let local = Trajectory {
        start: traj.start + jitter,
        ..*traj
    };
    (0..len)
        .map(|t| {
            let s = (t as f64 / (len - 1) as f64).powf(warp);
            let (cy, cx) = local.center(spec, s);
            let mut f = style.background.clone();
            render_blob(&mut f, (cy + shift.0, cx + shift.1), sigma, amplitude);
            f.map_inplace(|v| v + style.brightness + config.noise_std * rng.standard_normal());
            f
        })
        .collect()
}

/// Subject identifiers are `1..=subjects`.
pub fn subject_id(index: usize) -> String {
    (index + 1).to_string()
}

/// Writes `manifest.csv` and PGM frames under `out_dir`; returns the manifest rows.
pub fn generate_synthetic(config: &SynthConfig, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    config.validate()?;
    let trajectories = select_trajectories(config)?;
    let io = |what: &Path, e| Error::io(format!("writing {}", what.display()), e);
    fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;

    let utterance_rng = Rng::derive(config.seed, "synthetic-utterance");
    let mut entries = Vec::with_capacity(config.subjects * config.num_classes * config.reps);
    for subject in 0..config.subjects {
        let style = subject_style(config, subject);
        for (label, traj) in trajectories.iter().enumerate() {
            for rep in 0..config.reps {
                let stream_id = ((subject * config.num_classes + label) * config.reps + rep) as u64;
                let mut rng = utterance_rng.substream("utterance", stream_id);
                let frames = render_utterance(config, traj, &style, &mut rng);
                let utterance_id = format!("c{label}_r{rep}");
                let rel = Path::new(&format!("s{:02}", subject + 1)).join(&utterance_id);
                let dir = out_dir.join(&rel);
                fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
                for (i, f) in frames.iter().enumerate() {
                    write_pgm(&dir.join(frame_file_name(i + 1)), f)?;
                }
                entries.push(ManifestEntry {
                    subject_id: subject_id(subject),
                    label,
                    utterance_id,
                    frame_dir: rel,
                    num_frames: frames.len(),
                });
            }
        }
    }
    write_manifest(&out_dir.join("manifest.csv"), &entries)?;
    Ok(entries)
}
