use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use super::checkpoint::{load_encoder, load_model, save_encoder, save_model};
use super::config::RunConfig;
use crate::dataio::{generate_synthetic, load_sequence, streams_from_raw, Dataset, ManifestEntry, StreamPair};
use crate::error::{Error, Result};
use crate::evaluation::{build_split, ConfusionMatrix, SplitPart, SplitSpec};
use crate::numeric::{Matrix, Rng};
use crate::rbm::{pretrain_stack, PretrainRecord};
use crate::seqnet::Model;
use crate::trainer::{fit, predict, EpochRecord, Subset};

pub const MODEL_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const ACCURACY_FILE: &str = "accuracy.txt";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const CONFUSION_NORMALIZED_FILE: &str = "confusion_normalized.csv";
pub const PROBABILITIES_FILE: &str = "probabilities.csv";

pub fn encoder_file(stream: StreamKind) -> String {
    format!("encoder_{}.ckpt", stream.as_str())
}

pub fn pretrain_log_file(stream: StreamKind) -> String {
    format!("pretrain_{}.csv", stream.as_str())
}

/// One of the two input streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Raw,
    Diff,
}

impl StreamKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Self::Raw),
            "diff" => Ok(Self::Diff),
            other => Err(Error::Config(format!("stream {other:?}, expected raw|diff"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Raw => "raw",
            Self::Diff => "diff",
        }
    }
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("no {what} given (flag or config key)")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Opens the dataset and splits it by subject.
fn open_split(cfg: &RunConfig) -> Result<(Dataset, SplitSpec)> {
    let dataset = Dataset::open(required(&cfg.dataset, "dataset")?)?;
    let split = build_split(&dataset.entries, &cfg.protocol(), cfg.seed)?;
    Ok((dataset, split))
}

fn load_subset(cfg: &RunConfig, dataset: &Dataset, split: &SplitSpec, part: SplitPart) -> Result<Subset> {
    let subjects = split.subjects(part).clone();
    let pairs = dataset.load_streams(cfg.diff_order, |s| subjects.contains(s))?;
    Ok(Subset { subjects, pairs })
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<String> {
    let out = required(&cfg.out, "output directory")?;
    cfg.synth.validate()?;
    create_dir(out)?;
    let entries = generate_synthetic(&cfg.synth, out)?;
    cfg.write_effective(out)?;
    Ok(format!(
        "wrote {} utterances ({} classes, {} subjects, {}x{} frames) to {}",
        entries.len(),
        cfg.synth.num_classes,
        cfg.synth.subjects,
        cfg.synth.frame_spec.height,
        cfg.synth.frame_spec.width,
        out.display()
    ))
}

/// Frames of one stream from every training utterance, one per row. The
/// first difference frame is zero by construction and is skipped.
pub fn stream_frames(pairs: &[StreamPair], stream: StreamKind) -> Result<Matrix> {
    let (source, skip): (Vec<&Matrix>, usize) = match stream {
        StreamKind::Raw => (pairs.iter().map(|p| &p.raw).collect(), 0),
        StreamKind::Diff => (pairs.iter().map(|p| &p.diff).collect(), 1),
    };
    let cols = source.first().map_or(0, |m| m.cols());
    let rows: usize = source.iter().map(|m| m.rows().saturating_sub(skip)).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for m in source {
        for t in skip..m.rows() {
            data.extend_from_slice(m.row(t));
        }
    }
    Matrix::from_vec(rows, cols, data)
}

fn pretrain_log_csv(records: &[PretrainRecord]) -> String {
    let mut out = String::from("layer,epoch,reconstruction_error\n");
    for r in records {
        out.push_str(&format!("{},{},{}\n", r.layer, r.epoch, r.reconstruction_error));
    }
    out
}

pub fn cmd_pretrain(cfg: &RunConfig, stream: StreamKind) -> Result<String> {
    let out = required(&cfg.out, "output directory")?;
    let (dataset, split) = open_split(cfg)?;
    let pretrain = cfg.pretrain_config(dataset.frame_spec)?;
    let train = load_subset(cfg, &dataset, &split, SplitPart::Train)?;
    let data = stream_frames(&train.pairs, stream)?;
    info!("pretraining {} encoder {:?} on {} frames", stream.as_str(), pretrain.layer_sizes, data.rows());
    let mut rng = Rng::derive(cfg.seed, &format!("pretrain-{}", stream.as_str()));
    let (stack, records) = pretrain_stack(&data, &pretrain, &mut rng)?;
    create_dir(out)?;
    let path = out.join(encoder_file(stream));
    save_encoder(&path, &stack, stream.as_str())?;
    write_text(&out.join(pretrain_log_file(stream)), &pretrain_log_csv(&records))?;
    cfg.write_effective(out)?;
    let last = records.last().map_or(f64::NAN, |r| r.reconstruction_error);
    Ok(format!(
        "pretrained {} encoder {:?} on {} frames, final reconstruction error {last:.6}, saved {}",
        stream.as_str(),
        pretrain.layer_sizes,
        data.rows(),
        path.display()
    ))
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_accuracy\n");
    for r in history {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.val_accuracy));
    }
    out
}

fn encoder_for(cfg_path: &Option<PathBuf>, stream: StreamKind, used: bool) -> Result<Option<crate::rbm::EncoderStack>> {
    if !used {
        return Ok(None);
    }
    let path = required(cfg_path, &format!("{} encoder", stream.as_str()))?;
    let (stack, tag) = load_encoder(path)?;
    if tag != stream.as_str() {
        return Err(Error::Config(format!(
            "{} was pretrained on the {tag} stream, not {}",
            path.display(),
            stream.as_str()
        )));
    }
    Ok(Some(stack))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let out = required(&cfg.out, "output directory")?;
    let (dataset, split) = open_split(cfg)?;
    let arch = cfg.architecture(dataset.frame_spec, dataset.num_classes())?;
    let raw = encoder_for(&cfg.raw_encoder, StreamKind::Raw, arch.streams.uses_raw())?;
    let diff = encoder_for(&cfg.diff_encoder, StreamKind::Diff, arch.streams.uses_diff())?;
    let mut rng = Rng::derive(cfg.seed, "init");
    let model = Model::new(arch, raw, diff, &mut rng)?;
    cfg.train.validate()?;

    let train = load_subset(cfg, &dataset, &split, SplitPart::Train)?;
    let val = load_subset(cfg, &dataset, &split, SplitPart::Val)?;
    info!(
        "training on {} utterances, validating on {}, {} parameters",
        train.pairs.len(),
        val.pairs.len(),
        model.num_parameters()
    );
    let (best, history) = fit(model, &train, &val, &cfg.train)?;
    create_dir(out)?;
    save_model(&out.join(MODEL_FILE), &best)?;
    write_text(&out.join(HISTORY_FILE), &history_csv(&history))?;
    cfg.write_effective(out)?;
    let best_acc = history
        .iter()
        .find(|r| r.epoch == best.meta.best_epoch)
        .map_or(f64::NAN, |r| r.val_accuracy);
    Ok(format!(
        "{} epochs, best epoch {} with validation loss {:.6} and accuracy {best_acc:.4}",
        best.meta.epochs_run, best.meta.best_epoch, best.meta.best_val_loss
    ))
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Scores `model` on one split of the configured dataset.
pub fn evaluate_split(cfg: &RunConfig, model: &Model, part: SplitPart) -> Result<EvalReport> {
    let (dataset, split) = open_split(cfg)?;
    if dataset.frame_spec != model.arch.frame {
        return Err(Error::shape(
            "eval",
            format!(
                "dataset frames are {}x{}, model expects {}x{}",
                dataset.frame_spec.height, dataset.frame_spec.width, model.arch.frame.height, model.arch.frame.width
            ),
        ));
    }
    if dataset.num_classes() > model.arch.num_classes {
        return Err(Error::shape(
            "eval",
            format!("dataset has {} classes, model {}", dataset.num_classes(), model.arch.num_classes),
        ));
    }
    let subset = load_subset(cfg, &dataset, &split, part)?;
    if subset.pairs.is_empty() {
        return Err(Error::Split(format!("{part:?} split is empty")));
    }
    let mut predictions = Vec::with_capacity(subset.pairs.len());
    for pair in &subset.pairs {
        predictions.push(predict(model, pair)?.0);
    }
    let labels: Vec<usize> = subset.pairs.iter().map(|p| p.label).collect();
    let confusion = ConfusionMatrix::from_predictions(&predictions, &labels, model.arch.num_classes)?;
    Ok(EvalReport {
        accuracy: crate::evaluation::accuracy(&predictions, &labels)?,
        confusion,
        predictions,
        labels,
    })
}

pub fn cmd_eval(cfg: &RunConfig, model_path: &Path) -> Result<String> {
    let out = required(&cfg.out, "output directory")?;
    let ckpt = load_model(model_path)?;
    let report = evaluate_split(cfg, &ckpt.model, cfg.eval_split)?;
    create_dir(out)?;
    write_text(&out.join(ACCURACY_FILE), &format!("{}\n", report.accuracy))?;
    write_text(&out.join(CONFUSION_FILE), &report.confusion.to_csv())?;
    write_text(&out.join(CONFUSION_NORMALIZED_FILE), &report.confusion.to_normalized_csv())?;
    cfg.write_effective(out)?;
    Ok(format!(
        "{:?} accuracy {:.4} ({} of {} utterances)",
        cfg.eval_split,
        report.accuracy,
        report.confusion.trace(),
        report.confusion.total()
    ))
}

/// Number of consecutively numbered frames in `dir`.
fn count_frames(dir: &Path) -> usize {
    let probe = ManifestEntry {
        subject_id: String::new(),
        label: 0,
        utterance_id: String::new(),
        frame_dir: PathBuf::new(),
        num_frames: 0,
    };
    (1..).take_while(|&i| probe.frame_path(dir, i).is_file()).count()
}

pub fn probabilities_csv(probs: &Matrix) -> String {
    let header: Vec<String> = (0..probs.cols()).map(|c| c.to_string()).collect();
    let mut out = header.join(",");
    out.push('\n');
    for row in probs.iter_rows() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Labels one utterance directory; returns the class and writes per-frame
/// probabilities.
pub fn cmd_predict(cfg: &RunConfig, model_path: &Path, utterance: &Path) -> Result<(usize, String)> {
    let out = required(&cfg.out, "output directory")?;
    let ckpt = load_model(model_path)?;
    let entry = ManifestEntry {
        subject_id: "predict".into(),
        label: 0,
        utterance_id: utterance.display().to_string(),
        frame_dir: PathBuf::new(),
        num_frames: count_frames(utterance),
    };
    let seq = load_sequence(utterance, &entry, Some(ckpt.model.arch.frame))?;
    let pair = streams_from_raw(seq, cfg.diff_order)?;
    let (class, probs) = predict(&ckpt.model, &pair)?;
    create_dir(out)?;
    let path = out.join(PROBABILITIES_FILE);
    write_text(&path, &probabilities_csv(&probs))?;
    Ok((class, format!("{} frames, per-frame probabilities in {}", pair.len(), path.display())))
}
