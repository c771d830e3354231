//! The full two-stream network: per-stream encoder, delta features and LSTM,
//! BLSTM fusion and a per-frame softmax output layer.

use std::fmt;

use super::delta::{append_deltas, append_deltas_backward, DeltaConfig};
use super::loss::{sequence_loss, sequence_loss_grad, LossWeighting};
use super::lstm::{blstm_backward, blstm_forward, lstm_backward, lstm_forward, BlstmCache, BlstmParams, LstmCache, LstmParams, INIT_RANGE};
use crate::dataio::{FrameSpec, StreamPair};
use crate::error::{Error, Result};
use crate::numeric::{softmax_rows, Matrix, Rng};
use crate::rbm::{layer_kinds, EncoderStack};

/// Which input streams a model uses. Single-stream models feed their LSTM
/// straight into the output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Streams {
    #[default]
    Both,
    RawOnly,
    DiffOnly,
}

impl Streams {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(Self::Both),
            "raw" => Ok(Self::RawOnly),
            "diff" => Ok(Self::DiffOnly),
            other => Err(Error::Config(format!("streams {other:?}, expected both|raw|diff"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Both => "both",
            Self::RawOnly => "raw",
            Self::DiffOnly => "diff",
        }
    }

    pub fn uses_raw(&self) -> bool {
        matches!(self, Self::Both | Self::RawOnly)
    }

    pub fn uses_diff(&self) -> bool {
        matches!(self, Self::Both | Self::DiffOnly)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub frame: FrameSpec,
    /// Sigmoid encoder layers between the pixels and the bottleneck.
    pub encoder_hidden: Vec<usize>,
    pub bottleneck: usize,
    pub lstm_hidden: usize,
    pub blstm_hidden: usize,
    pub num_classes: usize,
    pub streams: Streams,
    pub delta: DeltaConfig,
}

impl Architecture {
    /// `[pixels, hidden..., bottleneck]`
    pub fn encoder_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.frame.pixels()];
        sizes.extend(&self.encoder_hidden);
        sizes.push(self.bottleneck);
        sizes
    }

    pub fn feature_dim(&self) -> usize {
        3 * self.bottleneck
    }

    fn stream_count(&self) -> usize {
        if self.streams == Streams::Both {
            2
        } else {
            1
        }
    }

    /// Width of the layer feeding the softmax.
    pub fn top_dim(&self) -> usize {
        match self.streams {
            Streams::Both => 2 * self.blstm_hidden,
            _ => self.lstm_hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        FrameSpec::new(self.frame.height, self.frame.width)?;
        layer_kinds(&self.encoder_sizes())?;
        if self.encoder_sizes().contains(&0) || self.lstm_hidden == 0 {
            return Err(Error::Config("zero-width layer".into()));
        }
        if self.streams == Streams::Both && self.blstm_hidden == 0 {
            return Err(Error::Config("zero-width BLSTM".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!("{} classes, need at least 2", self.num_classes)));
        }
        DeltaConfig::new(self.delta.window)?;
        Ok(())
    }

    /// `key=value` lines describing every dimension.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let hidden = self.encoder_hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        vec![
            ("frame_height".into(), self.frame.height.to_string()),
            ("frame_width".into(), self.frame.width.to_string()),
            ("encoder_hidden".into(), hidden),
            ("bottleneck".into(), self.bottleneck.to_string()),
            ("lstm_hidden".into(), self.lstm_hidden.to_string()),
            ("blstm_hidden".into(), self.blstm_hidden.to_string()),
            ("num_classes".into(), self.num_classes.to_string()),
            ("streams".into(), self.streams.as_str().into()),
            ("delta_window".into(), self.delta.window.to_string()),
        ]
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let get = |key: &str| -> Result<&str> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("architecture is missing {key}")))
        };
        let num = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("architecture field {key} is not a count")))
        };
        let hidden = get("encoder_hidden")?;
        let encoder_hidden = if hidden.is_empty() {
            Vec::new()
        } else {
            hidden
                .split(',')
                .map(|s| s.parse().map_err(|_| Error::Checkpoint(format!("bad encoder_hidden {hidden:?}"))))
                .collect::<Result<_>>()?
        };
        let arch = Self {
            frame: FrameSpec {
                height: num("frame_height")?,
                width: num("frame_width")?,
            },
            encoder_hidden,
            bottleneck: num("bottleneck")?,
            lstm_hidden: num("lstm_hidden")?,
            blstm_hidden: num("blstm_hidden")?,
            num_classes: num("num_classes")?,
            streams: Streams::parse(get("streams")?)?,
            delta: DeltaConfig { window: num("delta_window")? },
        };
        arch.validate()?;
        Ok(arch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputLayer {
    /// `top_dim x num_classes`
    pub weights: Matrix,
    /// `1 x num_classes`
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceNetParams {
    pub lstm_raw: Option<LstmParams>,
    pub lstm_diff: Option<LstmParams>,
    pub blstm: Option<BlstmParams>,
    pub output: OutputLayer,
}

/// Parameter groups; gradient clipping applies to `Recurrent` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    Recurrent,
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub encoder_raw: Option<EncoderStack>,
    pub encoder_diff: Option<EncoderStack>,
    pub seqnet: SequenceNetParams,
}

/// Parameter-shaped container of loss gradients.
#[derive(Clone, PartialEq)]
pub struct Gradients(pub Model);

impl fmt::Debug for Gradients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.0.tensors().iter().map(|(n, _, m)| (n.clone(), m.frobenius_norm())))
            .finish()
    }
}

struct StreamCache {
    activations: Vec<Matrix>,
    lstm: LstmCache,
}

/// Everything a backward pass needs from a forward pass.
pub struct ForwardCache {
    steps: usize,
    raw: Option<StreamCache>,
    diff: Option<StreamCache>,
    fusion: Option<BlstmCache>,
    top: Matrix,
    pub logits: Matrix,
    pub probs: Matrix,
}

fn init_output(top: usize, classes: usize, rng: &mut Rng) -> OutputLayer {
    let mut weights = Matrix::zeros(top, classes);
    weights.map_inplace(|_| rng.uniform_range(-INIT_RANGE, INIT_RANGE));
    OutputLayer {
        weights,
        bias: Matrix::zeros(1, classes),
    }
}

fn check_encoder(name: &str, arch: &Architecture, enc: &EncoderStack) -> Result<()> {
    enc.validate()?;
    if enc.layer_sizes() != arch.encoder_sizes() {
        return Err(Error::shape(
            "Model",
            format!(
                "{name} encoder has layer sizes {:?}, architecture needs {:?}",
                enc.layer_sizes(),
                arch.encoder_sizes()
            ),
        ));
    }
    Ok(())
}

fn check_lstm(name: &str, p: &LstmParams, input: usize, hidden: usize) -> Result<()> {
    p.validate()?;
    if p.input_dim() != input || p.hidden_dim() != hidden {
        return Err(Error::shape(
            "Model",
            format!(
                "{name} is {}->{}, architecture needs {input}->{hidden}",
                p.input_dim(),
                p.hidden_dim()
            ),
        ));
    }
    Ok(())
}

fn encoder_forward(enc: &EncoderStack, frames: &Matrix) -> Result<Vec<Matrix>> {
    let mut acts = Vec::with_capacity(enc.layers.len() + 1);
    acts.push(frames.clone());
    for layer in &enc.layers {
        let next = layer.propup(acts.last().expect("nonempty"))?;
        acts.push(next);
    }
    Ok(acts)
}

/// Accumulates encoder gradients into `grad` given `d loss / d bottleneck`.
fn encoder_backward(enc: &EncoderStack, acts: &[Matrix], grad_bottleneck: Matrix, grad: &mut EncoderStack) -> Result<()> {
    let mut d_pre = grad_bottleneck;
    for l in (0..enc.layers.len()).rev() {
        let layer = &enc.layers[l];
        if !layer.kind.hidden_gaussian() {
            let h = &acts[l + 1];
            for (d, &a) in d_pre.as_mut_slice().iter_mut().zip(h.as_slice()) {
                *d *= a * (1.0 - a);
            }
        }
        grad.layers[l].weights.add_assign(&acts[l].t_matmul(&d_pre)?)?;
        grad.layers[l].hbias.add_assign(&d_pre.sum_rows())?;
        if l > 0 {
            d_pre = d_pre.matmul_t(&layer.weights)?;
        }
    }
    Ok(())
}

impl Model {
    /// Assembles a model around pretrained encoders, initialising the
    /// recurrent and output layers from `rng`.
    pub fn new(
        arch: Architecture,
        encoder_raw: Option<EncoderStack>,
        encoder_diff: Option<EncoderStack>,
        rng: &mut Rng,
    ) -> Result<Self> {
        arch.validate()?;
        let feat = arch.feature_dim();
        let h = arch.lstm_hidden;
        let lstm_raw = arch.streams.uses_raw().then(|| LstmParams::init(feat, h, rng));
        let lstm_diff = arch.streams.uses_diff().then(|| LstmParams::init(feat, h, rng));
        let blstm = (arch.streams == Streams::Both).then(|| BlstmParams {
            fwd: LstmParams::init(2 * h, arch.blstm_hidden, rng),
            bwd: LstmParams::init(2 * h, arch.blstm_hidden, rng),
        });
        let output = init_output(arch.top_dim(), arch.num_classes, rng);
        let model = Self {
            arch,
            encoder_raw,
            encoder_diff,
            seqnet: SequenceNetParams {
                lstm_raw,
                lstm_diff,
                blstm,
                output,
            },
        };
        model.validate()?;
        Ok(model)
    }

    /// Model with freshly initialised (not pretrained) encoders.
    pub fn init_random(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let sizes = arch.encoder_sizes();
        let raw = if arch.streams.uses_raw() {
            Some(EncoderStack::init(&sizes, rng)?)
        } else {
            None
        };
        let diff = if arch.streams.uses_diff() {
            Some(EncoderStack::init(&sizes, rng)?)
        } else {
            None
        };
        Self::new(arch, raw, diff, rng)
    }

    pub fn validate(&self) -> Result<()> {
        let arch = &self.arch;
        arch.validate()?;
        let missing = |what: &str| Error::shape("Model", format!("{what} required by streams={}", arch.streams.as_str()));
        let extra = |what: &str| Error::shape("Model", format!("{what} present but streams={}", arch.streams.as_str()));
        let net = &self.seqnet;
        for (uses, enc, lstm, name) in [
            (arch.streams.uses_raw(), &self.encoder_raw, &net.lstm_raw, "raw"),
            (arch.streams.uses_diff(), &self.encoder_diff, &net.lstm_diff, "diff"),
        ] {
            match (uses, enc, lstm) {
                (true, Some(e), Some(l)) => {
                    check_encoder(name, arch, e)?;
                    check_lstm(&format!("lstm_{name}"), l, arch.feature_dim(), arch.lstm_hidden)?;
                }
                (true, _, _) => return Err(missing(name)),
                (false, None, None) => {}
                (false, _, _) => return Err(extra(name)),
            }
        }
        match (&net.blstm, arch.streams == Streams::Both) {
            (Some(b), true) => {
                check_lstm("blstm_fwd", &b.fwd, 2 * arch.lstm_hidden, arch.blstm_hidden)?;
                check_lstm("blstm_bwd", &b.bwd, 2 * arch.lstm_hidden, arch.blstm_hidden)?;
            }
            (None, false) => {}
            (None, true) => return Err(missing("blstm")),
            (Some(_), false) => return Err(extra("blstm")),
        }
        if net.output.weights.shape() != (arch.top_dim(), arch.num_classes)
            || net.output.bias.shape() != (1, arch.num_classes)
        {
            return Err(Error::shape(
                "Model",
                format!(
                    "output layer {:?}, architecture needs {}x{}",
                    net.output.weights.shape(),
                    arch.top_dim(),
                    arch.num_classes
                ),
            ));
        }
        Ok(())
    }

    /// Every parameter tensor with a stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ParamGroup, &Matrix)> {
        let mut out = Vec::new();
        for (name, enc) in [("encoder_raw", &self.encoder_raw), ("encoder_diff", &self.encoder_diff)] {
            if let Some(enc) = enc {
                for (i, l) in enc.layers.iter().enumerate() {
                    out.push((format!("{name}.{i}.weights"), ParamGroup::Encoder, &l.weights));
                    out.push((format!("{name}.{i}.vbias"), ParamGroup::Encoder, &l.vbias));
                    out.push((format!("{name}.{i}.hbias"), ParamGroup::Encoder, &l.hbias));
                }
            }
        }
        let net = &self.seqnet;
        let blstm = net.blstm.as_ref();
        for (name, lstm) in [
            ("lstm_raw", net.lstm_raw.as_ref()),
            ("lstm_diff", net.lstm_diff.as_ref()),
            ("blstm_fwd", blstm.map(|b| &b.fwd)),
            ("blstm_bwd", blstm.map(|b| &b.bwd)),
        ] {
            if let Some(l) = lstm {
                out.push((format!("{name}.weights"), ParamGroup::Recurrent, &l.weights));
                out.push((format!("{name}.bias"), ParamGroup::Recurrent, &l.bias));
            }
        }
        out.push(("output.weights".into(), ParamGroup::Output, &net.output.weights));
        out.push(("output.bias".into(), ParamGroup::Output, &net.output.bias));
        out
    }

    /// Mutable counterpart of [`Model::tensors`], same order and names.
    pub fn tensors_mut(&mut self) -> Vec<(String, ParamGroup, &mut Matrix)> {
        let mut out = Vec::new();
        for (name, enc) in [("encoder_raw", &mut self.encoder_raw), ("encoder_diff", &mut self.encoder_diff)] {
            if let Some(enc) = enc {
                for (i, l) in enc.layers.iter_mut().enumerate() {
                    out.push((format!("{name}.{i}.weights"), ParamGroup::Encoder, &mut l.weights));
                    out.push((format!("{name}.{i}.vbias"), ParamGroup::Encoder, &mut l.vbias));
                    out.push((format!("{name}.{i}.hbias"), ParamGroup::Encoder, &mut l.hbias));
                }
            }
        }
        let net = &mut self.seqnet;
        let (bf, bb) = match net.blstm.as_mut() {
            Some(b) => (Some(&mut b.fwd), Some(&mut b.bwd)),
            None => (None, None),
        };
        for (name, lstm) in [
            ("lstm_raw", net.lstm_raw.as_mut()),
            ("lstm_diff", net.lstm_diff.as_mut()),
            ("blstm_fwd", bf),
            ("blstm_bwd", bb),
        ] {
            if let Some(l) = lstm {
                out.push((format!("{name}.weights"), ParamGroup::Recurrent, &mut l.weights));
                out.push((format!("{name}.bias"), ParamGroup::Recurrent, &mut l.bias));
            }
        }
        out.push(("output.weights".into(), ParamGroup::Output, &mut net.output.weights));
        out.push(("output.bias".into(), ParamGroup::Output, &mut net.output.bias));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, _, m)| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, m)| m.is_finite())
    }

    fn check_input(&self, pair: &StreamPair) -> Result<()> {
        let pixels = self.arch.frame.pixels();
        if pair.raw.cols() != pixels || pair.diff.cols() != pixels || pair.raw.rows() != pair.diff.rows() {
            return Err(Error::shape(
                "Model::forward",
                format!(
                    "streams {:?}/{:?}, model expects {pixels}-pixel frames",
                    pair.raw.shape(),
                    pair.diff.shape()
                ),
            ));
        }
        if pair.raw.rows() == 0 {
            return Err(Error::InvalidArgument("empty utterance".into()));
        }
        Ok(())
    }

    fn stream_forward(&self, enc: &EncoderStack, lstm: &LstmParams, frames: &Matrix) -> Result<(Matrix, StreamCache)> {
        let activations = encoder_forward(enc, frames)?;
        let features = append_deltas(activations.last().expect("nonempty"), self.arch.delta)?;
        let (hidden, lstm_cache) = lstm_forward(lstm, &features)?;
        Ok((
            hidden,
            StreamCache {
                activations,
                lstm: lstm_cache,
            },
        ))
    }

    /// Deterministic forward pass; logits and probabilities have one row per frame.
    pub fn forward(&self, pair: &StreamPair) -> Result<ForwardCache> {
        self.check_input(pair)?;
        let net = &self.seqnet;
        let raw = match (&self.encoder_raw, &net.lstm_raw) {
            (Some(e), Some(l)) => Some(self.stream_forward(e, l, &pair.raw)?),
            _ => None,
        };
        let diff = match (&self.encoder_diff, &net.lstm_diff) {
            (Some(e), Some(l)) => Some(self.stream_forward(e, l, &pair.diff)?),
            _ => None,
        };
        let (top, raw, diff, fusion) = match (raw, diff, &net.blstm) {
            (Some((hr, cr)), Some((hd, cd)), Some(blstm)) => {
                let fused_in = Matrix::hstack(&[&hr, &hd])?;
                let (y, cache) = blstm_forward(blstm, &fused_in)?;
                (y, Some(cr), Some(cd), Some(cache))
            }
            (Some((hr, cr)), None, None) => (hr, Some(cr), None, None),
            (None, Some((hd, cd)), None) => (hd, None, Some(cd), None),
            _ => return Err(Error::shape("Model::forward", "inconsistent stream configuration")),
        };
        let mut logits = top.matmul(&net.output.weights)?;
        logits.add_row_broadcast(&net.output.bias)?;
        let probs = softmax_rows(&logits)?;
        Ok(ForwardCache {
            steps: pair.len(),
            raw,
            diff,
            fusion,
            top,
            logits,
            probs,
        })
    }

    pub fn loss(&self, pair: &StreamPair, weighting: LossWeighting) -> Result<(f64, ForwardCache)> {
        let cache = self.forward(pair)?;
        let (loss, _) = sequence_loss(&cache.logits, pair.label, weighting)?;
        Ok((loss, cache))
    }

    pub fn zero_gradients(&self) -> Gradients {
        let mut g = self.clone();
        for (_, _, m) in g.tensors_mut() {
            m.fill(0.0);
        }
        Gradients(g)
    }

    /// Exact gradient of the utterance loss with respect to every parameter.
    pub fn backward(&self, pair: &StreamPair, cache: &ForwardCache, weighting: LossWeighting) -> Result<Gradients> {
        if cache.steps != pair.len() || cache.logits.cols() != self.arch.num_classes {
            return Err(Error::shape(
                "Model::backward",
                format!("cache covers {} frames, utterance has {}", cache.steps, pair.len()),
            ));
        }
        let mut grads = self.zero_gradients();
        let g = &mut grads.0;
        let net = &self.seqnet;

        let d_logits = sequence_loss_grad(&cache.probs, pair.label, weighting)?;
        g.seqnet.output.weights = cache.top.t_matmul(&d_logits)?;
        g.seqnet.output.bias = d_logits.sum_rows();
        let d_top = d_logits.matmul_t(&net.output.weights)?;

        let h = self.arch.lstm_hidden;
        let (d_raw, d_diff) = match (&net.blstm, &cache.fusion) {
            (Some(blstm), Some(fc)) => {
                let (d_fused, gb) = blstm_backward(blstm, fc, &d_top)?;
                g.seqnet.blstm = Some(gb);
                (Some(d_fused.col_slice(0, h)?), Some(d_fused.col_slice(h, h)?))
            }
            _ if self.arch.streams == Streams::RawOnly => (Some(d_top), None),
            _ => (None, Some(d_top)),
        };

        for (d_hidden, sc, enc, lstm, g_enc, g_lstm) in [
            (d_raw, &cache.raw, &self.encoder_raw, &net.lstm_raw, &mut g.encoder_raw, &mut g.seqnet.lstm_raw),
            (d_diff, &cache.diff, &self.encoder_diff, &net.lstm_diff, &mut g.encoder_diff, &mut g.seqnet.lstm_diff),
        ] {
            let (Some(d_hidden), Some(sc), Some(enc), Some(lstm), Some(g_enc)) = (d_hidden, sc, enc, lstm, g_enc) else {
                continue;
            };
            let (d_features, gl) = lstm_backward(lstm, &sc.lstm, &d_hidden)?;
            *g_lstm = Some(gl);
            let d_bottleneck = append_deltas_backward(&d_features, self.arch.delta)?;
            encoder_backward(enc, &sc.activations, d_bottleneck, g_enc)?;
        }
        Ok(grads)
    }

    /// Class of the final frame and the per-frame probabilities.
    pub fn predict(&self, pair: &StreamPair) -> Result<(usize, Matrix)> {
        let cache = self.forward(pair)?;
        let last = cache.probs.row(cache.probs.rows() - 1);
        let class = argmax(last);
        Ok((class, cache.probs))
    }

    /// Number of streams feeding the classifier.
    pub fn stream_count(&self) -> usize {
        self.arch.stream_count()
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Gradients {
    pub fn tensors(&self) -> Vec<(String, ParamGroup, &Matrix)> {
        self.0.tensors()
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ParamGroup, &mut Matrix)> {
        self.0.tensors_mut()
    }

    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        for ((_, _, a), (_, _, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for (_, _, m) in self.tensors_mut() {
            m.scale(alpha);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, _, m)| m.as_slice().iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors().iter().map(|(_, _, m)| m.max_abs()).fold(0.0, f64::max)
    }
}

/// Clamps every recurrent-layer gradient entry to `[-threshold, threshold]`;
/// encoder and output gradients pass through unchanged.
pub fn clip_gradients(mut grads: Gradients, threshold: f64) -> Result<Gradients> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::InvalidArgument(format!("clip threshold {threshold} must be positive")));
    }
    for (_, group, m) in grads.tensors_mut() {
        if group == ParamGroup::Recurrent {
            m.map_inplace(|x| x.clamp(-threshold, threshold));
        }
    }
    Ok(grads)
}
