//! `key = value` run configuration. Blank lines and `#` comments are ignored;
//! unknown or repeated keys are errors.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataio::{DiffOrder, FrameSpec, SynthConfig};
use crate::error::{Error, Result};
use crate::evaluation::{Protocol, SplitPart};
use crate::rbm::PretrainConfig;
use crate::seqnet::{Architecture, DeltaConfig, LossWeighting, Streams};
use crate::trainer::TrainConfig;

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.txt";

/// Every key with its default and meaning, in echo order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "7", "root seed; every random stream derives from it"),
    ("dataset", "", "dataset directory (overridden by --dataset)"),
    ("out", "", "output directory (overridden by --out)"),
    ("synth_classes", "5", "synthetic vocabulary size"),
    ("synth_subjects", "6", "synthetic speakers"),
    ("synth_reps", "3", "repetitions per speaker and class"),
    ("synth_frame_height", "26", "synthetic frame height in pixels"),
    ("synth_frame_width", "44", "synthetic frame width in pixels"),
    ("synth_min_frames", "14", "shortest synthetic utterance"),
    ("synth_max_frames", "22", "longest synthetic utterance"),
    ("synth_noise_std", "6", "pixel noise in grey levels"),
    ("diff_order", "after", "take frame differences after|before normalisation"),
    ("encoder_hidden", "2000,1000,500", "sigmoid encoder layer widths"),
    ("bottleneck", "50", "linear bottleneck width"),
    ("lstm_hidden", "250", "per-stream LSTM width"),
    ("blstm_hidden", "250", "fusion BLSTM width per direction"),
    ("streams", "both", "both|raw|diff"),
    ("delta_window", "2", "delta regression half-window"),
    ("pretrain_epochs", "20", "CD-1 epochs per RBM"),
    ("pretrain_batch", "100", "CD-1 minibatch size in frames"),
    ("pretrain_l2", "0.0002", "weight decay on RBM weights"),
    ("pretrain_lr_bernoulli", "0.1", "learning rate of Bernoulli-Bernoulli RBMs"),
    ("pretrain_lr_realvalued", "0.001", "learning rate of RBMs with real-valued units"),
    ("batch_utterances", "20", "utterances per fine-tuning minibatch"),
    ("patience", "5", "epochs without validation improvement before stopping"),
    ("max_epochs", "100", "upper bound on fine-tuning epochs"),
    ("clip", "5", "elementwise bound on recurrent gradients"),
    ("loss_weighting", "uniform", "uniform|last frame weighting of the loss"),
    ("adadelta_rho", "0.95", "AdaDelta decay"),
    ("adadelta_epsilon", "0.000001", "AdaDelta conditioner"),
    ("threads", "0", "worker threads, 0 = all cores; never changes results"),
    ("protocol", "explicit", "ouluvs2|cuave|explicit"),
    ("train_subjects", "1,2,3", "explicit protocol training speakers"),
    ("val_subjects", "4", "explicit protocol validation speakers"),
    ("test_subjects", "5,6", "explicit protocol test speakers"),
    ("eval_split", "test", "split scored by eval: train|val|test"),
    ("raw_encoder", "", "pretrained raw-stream encoder (overridden by --raw-encoder)"),
    ("diff_encoder", "", "pretrained diff-stream encoder (overridden by --diff-encoder)"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub synth: SynthConfig,
    pub diff_order: DiffOrder,
    pub encoder_hidden: Vec<usize>,
    pub bottleneck: usize,
    pub lstm_hidden: usize,
    pub blstm_hidden: usize,
    pub streams: Streams,
    pub delta_window: usize,
    pub pretrain_epochs: usize,
    pub pretrain_batch: usize,
    pub pretrain_l2: f64,
    pub pretrain_lr_bernoulli: f64,
    pub pretrain_lr_realvalued: f64,
    pub train: TrainConfig,
    pub protocol: String,
    pub train_subjects: Vec<String>,
    pub val_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
    pub eval_split: SplitPart,
    pub raw_encoder: Option<PathBuf>,
    pub diff_encoder: Option<PathBuf>,
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_sizes(key: &str, value: &str) -> Result<Vec<usize>> {
    parse_list(value).iter().map(|s| parse_num(key, s)).collect()
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = Self {
            seed: 0,
            dataset: None,
            out: None,
            synth: SynthConfig::default(),
            diff_order: DiffOrder::default(),
            encoder_hidden: Vec::new(),
            bottleneck: 0,
            lstm_hidden: 0,
            blstm_hidden: 0,
            streams: Streams::Both,
            delta_window: 0,
            pretrain_epochs: 0,
            pretrain_batch: 0,
            pretrain_l2: 0.0,
            pretrain_lr_bernoulli: 0.0,
            pretrain_lr_realvalued: 0.0,
            train: TrainConfig::default(),
            protocol: String::new(),
            train_subjects: Vec::new(),
            val_subjects: Vec::new(),
            test_subjects: Vec::new(),
            eval_split: SplitPart::Test,
            raw_encoder: None,
            diff_encoder: None,
        };
        for (key, default, _) in KEYS {
            cfg.set(key, default).expect("documented defaults parse");
        }
        cfg
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => {
                self.seed = parse_num(key, v)?;
                self.synth.seed = self.seed;
                self.train.seed = self.seed;
            }
            "dataset" => self.dataset = opt_path(v),
            "out" => self.out = opt_path(v),
            "synth_classes" => self.synth.num_classes = parse_num(key, v)?,
            "synth_subjects" => self.synth.subjects = parse_num(key, v)?,
            "synth_reps" => self.synth.reps = parse_num(key, v)?,
            "synth_frame_height" => self.synth.frame_spec.height = parse_num(key, v)?,
            "synth_frame_width" => self.synth.frame_spec.width = parse_num(key, v)?,
            "synth_min_frames" => self.synth.min_frames = parse_num(key, v)?,
            "synth_max_frames" => self.synth.max_frames = parse_num(key, v)?,
            "synth_noise_std" => self.synth.noise_std = parse_num(key, v)?,
            "diff_order" => self.diff_order = DiffOrder::parse(v)?,
            "encoder_hidden" => self.encoder_hidden = parse_sizes(key, v)?,
            "bottleneck" => self.bottleneck = parse_num(key, v)?,
            "lstm_hidden" => self.lstm_hidden = parse_num(key, v)?,
            "blstm_hidden" => self.blstm_hidden = parse_num(key, v)?,
            "streams" => self.streams = Streams::parse(v)?,
            "delta_window" => self.delta_window = parse_num(key, v)?,
            "pretrain_epochs" => self.pretrain_epochs = parse_num(key, v)?,
            "pretrain_batch" => self.pretrain_batch = parse_num(key, v)?,
            "pretrain_l2" => self.pretrain_l2 = parse_num(key, v)?,
            "pretrain_lr_bernoulli" => self.pretrain_lr_bernoulli = parse_num(key, v)?,
            "pretrain_lr_realvalued" => self.pretrain_lr_realvalued = parse_num(key, v)?,
            "batch_utterances" => self.train.batch_utterances = parse_num(key, v)?,
            "patience" => self.train.patience = parse_num(key, v)?,
            "max_epochs" => self.train.max_epochs = parse_num(key, v)?,
            "clip" => self.train.clip = parse_num(key, v)?,
            "loss_weighting" => self.train.weighting = LossWeighting::parse(v)?,
            "adadelta_rho" => self.train.rho = parse_num(key, v)?,
            "adadelta_epsilon" => self.train.epsilon = parse_num(key, v)?,
            "threads" => self.train.threads = parse_num(key, v)?,
            "protocol" => match v {
                "ouluvs2" | "cuave" | "explicit" => self.protocol = v.to_string(),
                other => return Err(Error::Config(format!("protocol {other:?}, expected ouluvs2|cuave|explicit"))),
            },
            "train_subjects" => self.train_subjects = parse_list(v),
            "val_subjects" => self.val_subjects = parse_list(v),
            "test_subjects" => self.test_subjects = parse_list(v),
            "eval_split" => self.eval_split = SplitPart::parse(v)?,
            "raw_encoder" => self.raw_encoder = opt_path(v),
            "diff_encoder" => self.diff_encoder = opt_path(v),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = match key {
            "seed" => self.seed.to_string(),
            "dataset" => show_path(&self.dataset),
            "out" => show_path(&self.out),
            "synth_classes" => self.synth.num_classes.to_string(),
            "synth_subjects" => self.synth.subjects.to_string(),
            "synth_reps" => self.synth.reps.to_string(),
            "synth_frame_height" => self.synth.frame_spec.height.to_string(),
            "synth_frame_width" => self.synth.frame_spec.width.to_string(),
            "synth_min_frames" => self.synth.min_frames.to_string(),
            "synth_max_frames" => self.synth.max_frames.to_string(),
            "synth_noise_std" => self.synth.noise_std.to_string(),
            "diff_order" => self.diff_order.as_str().to_string(),
            "encoder_hidden" => join(&self.encoder_hidden),
            "bottleneck" => self.bottleneck.to_string(),
            "lstm_hidden" => self.lstm_hidden.to_string(),
            "blstm_hidden" => self.blstm_hidden.to_string(),
            "streams" => self.streams.as_str().to_string(),
            "delta_window" => self.delta_window.to_string(),
            "pretrain_epochs" => self.pretrain_epochs.to_string(),
            "pretrain_batch" => self.pretrain_batch.to_string(),
            "pretrain_l2" => self.pretrain_l2.to_string(),
            "pretrain_lr_bernoulli" => self.pretrain_lr_bernoulli.to_string(),
            "pretrain_lr_realvalued" => self.pretrain_lr_realvalued.to_string(),
            "batch_utterances" => self.train.batch_utterances.to_string(),
            "patience" => self.train.patience.to_string(),
            "max_epochs" => self.train.max_epochs.to_string(),
            "clip" => self.train.clip.to_string(),
            "loss_weighting" => self.train.weighting.as_str().to_string(),
            "adadelta_rho" => self.train.rho.to_string(),
            "adadelta_epsilon" => self.train.epsilon.to_string(),
            "threads" => self.train.threads.to_string(),
            "protocol" => self.protocol.clone(),
            "train_subjects" => self.train_subjects.join(","),
            "val_subjects" => self.val_subjects.join(","),
            "test_subjects" => self.test_subjects.join(","),
            "eval_split" => format!("{:?}", self.eval_split).to_lowercase(),
            "raw_encoder" => show_path(&self.raw_encoder),
            "diff_encoder" => show_path(&self.diff_encoder),
            _ => return None,
        };
        Some(s)
    }

    /// Defaults overridden by the `key = value` lines of `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: key {key:?} repeated", n + 1)));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text)
    }

    /// Every key with its effective value; parsing this reproduces `self`.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|(key, _, _)| format!("{key} = {}\n", self.get(key).expect("every documented key has a getter")))
            .collect()
    }

    pub fn write_effective(&self, dir: &Path) -> Result<()> {
        let path = dir.join(EFFECTIVE_CONFIG_FILE);
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn architecture(&self, frame: FrameSpec, num_classes: usize) -> Result<Architecture> {
        let arch = Architecture {
            frame,
            encoder_hidden: self.encoder_hidden.clone(),
            bottleneck: self.bottleneck,
            lstm_hidden: self.lstm_hidden,
            blstm_hidden: self.blstm_hidden,
            num_classes,
            streams: self.streams,
            delta: DeltaConfig::new(self.delta_window)?,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn pretrain_config(&self, frame: FrameSpec) -> Result<PretrainConfig> {
        let mut sizes = vec![frame.pixels()];
        sizes.extend(&self.encoder_hidden);
        sizes.push(self.bottleneck);
        let cfg = PretrainConfig {
            epochs: self.pretrain_epochs,
            batch_size: self.pretrain_batch,
            l2: self.pretrain_l2,
            lr_bernoulli: self.pretrain_lr_bernoulli,
            lr_realvalued: self.pretrain_lr_realvalued,
            layer_sizes: sizes,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn protocol(&self) -> Protocol {
        let set = |v: &[String]| v.iter().cloned().collect();
        match self.protocol.as_str() {
            "ouluvs2" => Protocol::OuluVs2,
            "cuave" => Protocol::Cuave,
            _ => Protocol::Explicit {
                train: set(&self.train_subjects),
                val: set(&self.val_subjects),
                test: set(&self.test_subjects),
            },
        }
    }
}
