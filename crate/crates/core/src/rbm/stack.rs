use log::info;

use super::params::{cd1_update, Cd1Settings, RbmKind, RbmParams};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub lr_bernoulli: f64,
    pub lr_realvalued: f64,
    /// `[input, hidden..., bottleneck]`
    pub layer_sizes: Vec<usize>,
}

impl PretrainConfig {
    /// Paper-scale encoder for a given input size and bottleneck width.
    pub fn with_layers(layer_sizes: Vec<usize>) -> Self {
        Self {
            epochs: 20,
            batch_size: 100,
            l2: 0.0002,
            lr_bernoulli: 0.1,
            lr_realvalued: 0.001,
            layer_sizes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::Config("pretraining needs epochs >= 1 and batch_size >= 1".into()));
        }
        if !(self.lr_bernoulli > 0.0 && self.lr_realvalued > 0.0) {
            return Err(Error::Config("pretraining learning rates must be positive".into()));
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return Err(Error::Config(format!("l2 {} must be nonnegative", self.l2)));
        }
        layer_kinds(&self.layer_sizes)?;
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config(format!("zero-width layer in {:?}", self.layer_sizes)));
        }
        Ok(())
    }

    /// Both layers Bernoulli use the larger rate; any real-valued layer the smaller.
    pub fn learning_rate(&self, kind: RbmKind) -> f64 {
        match kind {
            RbmKind::BernoulliBernoulli => self.lr_bernoulli,
            RbmKind::GaussianBernoulli | RbmKind::BernoulliGaussian => self.lr_realvalued,
        }
    }
}

/// Unit types for a stack with the given layer sizes: Gaussian input,
/// Bernoulli hidden layers, linear (Gaussian) bottleneck.
pub fn layer_kinds(layer_sizes: &[usize]) -> Result<Vec<RbmKind>> {
    let n = layer_sizes.len().saturating_sub(1);
    if n < 2 {
        return Err(Error::Config(format!(
            "encoder needs at least one hidden layer and a bottleneck, got sizes {layer_sizes:?}"
        )));
    }
    Ok((0..n)
        .map(|i| match i {
            0 => RbmKind::GaussianBernoulli,
            i if i == n - 1 => RbmKind::BernoulliGaussian,
            _ => RbmKind::BernoulliBernoulli,
        })
        .collect())
}

/// Pretrained encoding layers of one stream, applied feed-forward.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStack {
    pub layers: Vec<RbmParams>,
}

impl EncoderStack {
    pub fn new(layers: Vec<RbmParams>) -> Result<Self> {
        let stack = Self { layers };
        stack.validate()?;
        Ok(stack)
    }

    /// Freshly initialised (untrained) stack.
    pub fn init(layer_sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        let kinds = layer_kinds(layer_sizes)?;
        let layers = kinds
            .iter()
            .zip(layer_sizes.windows(2))
            .map(|(&k, w)| RbmParams::init(k, w[0], w[1], rng))
            .collect();
        Self::new(layers)
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = self.layer_sizes();
        let want = layer_kinds(&sizes)?;
        for (i, (layer, kind)) in self.layers.iter().zip(want).enumerate() {
            layer.validate()?;
            if layer.kind != kind {
                return Err(Error::shape(
                    "EncoderStack",
                    format!("layer {i} is {}, expected {}", layer.kind.tag(), kind.tag()),
                ));
            }
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].hidden_dim() != pair[1].visible_dim() {
                return Err(Error::shape(
                    "EncoderStack",
                    format!(
                        "layer {i} has {} hidden units but layer {} has {} visible",
                        pair[0].hidden_dim(),
                        i + 1,
                        pair[1].visible_dim()
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, RbmParams::visible_dim)
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.layers.last().map_or(0, RbmParams::hidden_dim)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(RbmParams::hidden_dim));
        sizes
    }

    /// Feed-forward pass over a batch of frames (one per row).
    pub fn encode_batch(&self, frames: &Matrix) -> Result<Matrix> {
        let mut x = frames.clone();
        for layer in &self.layers {
            x = layer.propup(&x)?;
        }
        Ok(x)
    }

    pub fn encode(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() != self.input_dim() {
            return Err(Error::shape(
                "encode",
                format!("frame has {} values, encoder expects {}", frame.len(), self.input_dim()),
            ));
        }
        Ok(self.encode_batch(&Matrix::row_vector(frame))?.into_vec())
    }
}

/// Mean reconstruction error of one layer for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainRecord {
    pub layer: usize,
    pub epoch: usize,
    pub reconstruction_error: f64,
}

/// Largest tolerated per-sample mean for real-valued input units.
const INPUT_MEAN_TOL: f64 = 1e-6;
/// Frames and frame differences of z-normalised frames have std at most 2.
const INPUT_STD_MAX: f64 = 2.0 + 1e-9;
const INPUT_CHECK_ROWS: usize = 256;

fn check_standardised(data: &Matrix) -> Result<()> {
    let step = (data.rows() / INPUT_CHECK_ROWS).max(1);
    for i in (0..data.rows()).step_by(step) {
        let row = data.row(i);
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let std = (row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        if mean.abs() > INPUT_MEAN_TOL || std > INPUT_STD_MAX {
            return Err(Error::InvalidArgument(format!(
                "input row {i} has mean {mean:.3e} and std {std:.3}; Gaussian visible units need z-normalised data"
            )));
        }
    }
    Ok(())
}

fn train_rbm(
    mut rbm: RbmParams,
    data: &Matrix,
    config: &PretrainConfig,
    layer: usize,
    rng: &mut Rng,
    log: &mut Vec<PretrainRecord>,
) -> Result<RbmParams> {
    let settings = Cd1Settings {
        learning_rate: config.learning_rate(rbm.kind),
        l2: config.l2,
    };
    let mut order: Vec<usize> = (0..data.rows()).collect();
    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut batch = Matrix::zeros(chunk.len(), data.cols());
            for (r, &i) in chunk.iter().enumerate() {
                batch.row_mut(r).copy_from_slice(data.row(i));
            }
            let (next, err) = cd1_update(&rbm, &batch, settings, rng)?;
            rbm = next;
            total += err;
            batches += 1;
        }
        let reconstruction_error = total / batches as f64;
        info!(
            "rbm layer {layer} ({}) epoch {}: reconstruction error {reconstruction_error:.6}",
            rbm.kind.tag(),
            epoch + 1
        );
        log.push(PretrainRecord {
            layer,
            epoch: epoch + 1,
            reconstruction_error,
        });
    }
    Ok(rbm)
}

/// Greedy layer-wise pretraining. Each layer trains on the hidden
/// probabilities (or means) of the already-trained layer below it.
pub fn pretrain_stack(
    data: &Matrix,
    config: &PretrainConfig,
    rng: &mut Rng,
) -> Result<(EncoderStack, Vec<PretrainRecord>)> {
    config.validate()?;
    if data.rows() == 0 {
        return Err(Error::InvalidArgument("no pretraining data".into()));
    }
    if data.cols() != config.layer_sizes[0] {
        return Err(Error::shape(
            "pretrain_stack",
            format!("data has {} columns, first layer expects {}", data.cols(), config.layer_sizes[0]),
        ));
    }
    check_standardised(data)?;

    let kinds = layer_kinds(&config.layer_sizes)?;
    let mut layers = Vec::with_capacity(kinds.len());
    let mut log = Vec::new();
    let mut input = data.clone();
    for (i, (&kind, dims)) in kinds.iter().zip(config.layer_sizes.windows(2)).enumerate() {
        let rbm = RbmParams::init(kind, dims[0], dims[1], rng);
        let rbm = train_rbm(rbm, &input, config, i, rng, &mut log)?;
        if i + 1 < kinds.len() {
            input = rbm.propup(&input)?;
        }
        layers.push(rbm);
    }
    Ok((EncoderStack::new(layers)?, log))
}
