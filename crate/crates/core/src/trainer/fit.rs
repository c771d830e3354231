use std::collections::BTreeSet;
use std::thread;

use log::info;

use super::adadelta::{adadelta_step, AdaDeltaState, DEFAULT_EPSILON, DEFAULT_RHO};
use crate::dataio::StreamPair;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};
use crate::seqnet::{argmax, clip_gradients, Gradients, LossWeighting, Model};

/// Improvements in validation loss at or below this are plateaus.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_utterances: usize,
    pub patience: usize,
    pub max_epochs: usize,
    /// Elementwise bound on recurrent-layer gradients.
    pub clip: f64,
    pub seed: u64,
    pub weighting: LossWeighting,
    pub rho: f64,
    pub epsilon: f64,
    /// Worker threads for per-utterance passes; 0 picks the core count.
    /// Results do not depend on this value.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_utterances: 20,
            patience: 5,
            max_epochs: 100,
            clip: 5.0,
            seed: 1,
            weighting: LossWeighting::Uniform,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            threads: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_utterances < 1 {
            return Err(Error::Config("batch_utterances must be at least 1".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.clip.is_nan() || self.clip <= 0.0 {
            return Err(Error::Config(format!("clip {} must be positive", self.clip)));
        }
        if !(0.0..1.0).contains(&self.rho) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!("adadelta rho={} epsilon={}", self.rho, self.epsilon)));
        }
        Ok(())
    }

    fn worker_count(&self) -> usize {
        match self.threads {
            0 => thread::available_parallelism().map_or(1, usize::from),
            n => n,
        }
    }
}

/// Utterances of one split together with the subjects they come from.
#[derive(Debug, Clone, Default)]
pub struct Subset {
    pub subjects: BTreeSet<String>,
    pub pairs: Vec<StreamPair>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Shuffled partition of `0..count` into batches of `batch_size`; only the
/// last batch may be smaller.
pub fn make_batches(count: usize, batch_size: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if count == 0 {
        return Err(Error::InvalidArgument("no utterances to batch".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size 0".into()));
    }
    let mut order: Vec<usize> = (0..count).collect();
    rng.shuffle(&mut order);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Applies `f` to every item on up to `threads` workers, keeping input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

fn utterance_gradient(model: &Model, pair: &StreamPair, weighting: LossWeighting) -> Result<(f64, Gradients)> {
    let (loss, cache) = model.loss(pair, weighting)?;
    let grads = model.backward(pair, &cache, weighting)?;
    Ok((loss, grads))
}

/// Loss and gradient averaged over the utterances of one batch, summed in
/// batch order so the result does not depend on the worker count.
pub fn batch_gradient(
    model: &Model,
    pairs: &[&StreamPair],
    weighting: LossWeighting,
    threads: usize,
) -> Result<(f64, Gradients)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let results = parallel_map(pairs, threads, |p| utterance_gradient(model, p, weighting));
    let mut total = model.zero_gradients();
    let mut loss = 0.0;
    for r in results {
        let (l, g) = r?;
        loss += l;
        total.accumulate(&g)?;
    }
    let n = pairs.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// One pass over `batches`; returns the mean pre-update utterance loss.
pub fn train_epoch(
    model: &mut Model,
    state: &mut AdaDeltaState,
    data: &[StreamPair],
    batches: &[Vec<usize>],
    config: &TrainConfig,
) -> Result<f64> {
    let threads = config.worker_count();
    let mut loss_sum = 0.0;
    let mut count = 0usize;
    for batch in batches {
        let pairs: Vec<&StreamPair> = batch
            .iter()
            .map(|&i| data.get(i).ok_or_else(|| Error::InvalidArgument(format!("batch index {i} out of range"))))
            .collect::<Result<_>>()?;
        let (loss, grads) = batch_gradient(model, &pairs, config.weighting, threads)?;
        let grads = clip_gradients(grads, config.clip)?;
        adadelta_step(state, model, &grads)?;
        loss_sum += loss * pairs.len() as f64;
        count += pairs.len();
    }
    if count == 0 {
        return Err(Error::InvalidArgument("epoch without batches".into()));
    }
    Ok(loss_sum / count as f64)
}

/// Mean loss and accuracy of `model` on `data`.
pub fn evaluate(model: &Model, data: &[StreamPair], weighting: LossWeighting, threads: usize) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("evaluation on an empty set".into()));
    }
    let results = parallel_map(data, threads, |pair| -> Result<(f64, bool)> {
        let (loss, cache) = model.loss(pair, weighting)?;
        let last = cache.probs.row(cache.probs.rows() - 1);
        Ok((loss, argmax(last) == pair.label))
    });
    let mut loss = 0.0;
    let mut correct = 0usize;
    for r in results {
        let (l, ok) = r?;
        loss += l;
        correct += usize::from(ok);
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Patience bookkeeping on a sequence of validation losses.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
    epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
            epoch: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> StopDecision {
        self.epoch += 1;
        let improved = val_loss < self.best - MIN_IMPROVEMENT;
        if improved {
            self.best = val_loss;
            self.best_epoch = self.epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopDecision {
            improved,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

fn check_disjoint(train: &Subset, val: &Subset) -> Result<()> {
    let shared: Vec<&String> = train.subjects.intersection(&val.subjects).collect();
    if !shared.is_empty() {
        return Err(Error::Split(format!("subjects {shared:?} appear in both training and validation")));
    }
    Ok(())
}

/// Fine-tunes `model` with early stopping on validation loss. Returns the
/// best-validation checkpoint and one record per epoch run.
pub fn fit(model: Model, train: &Subset, val: &Subset, config: &TrainConfig) -> Result<(ModelCheckpoint, Vec<EpochRecord>)> {
    config.validate()?;
    check_disjoint(train, val)?;
    if train.pairs.is_empty() || val.pairs.is_empty() {
        return Err(Error::Split("training and validation sets must be nonempty".into()));
    }
    let threads = config.worker_count();
    let mut model = model;
    let mut state = AdaDeltaState::new(&model, config.rho, config.epsilon)?;
    let mut rng = Rng::derive(config.seed, "shuffle");
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    let mut best = model.clone();

    for epoch in 1..=config.max_epochs {
        let batches = make_batches(train.pairs.len(), config.batch_utterances, &mut rng)?;
        let train_loss = train_epoch(&mut model, &mut state, &train.pairs, &batches, config)?;
        if !model.is_finite() || !state.is_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let (val_loss, val_accuracy) = evaluate(&model, &val.pairs, config.weighting, threads)?;
        info!("epoch {epoch}: train loss {train_loss:.6} val loss {val_loss:.6} val accuracy {val_accuracy:.4}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
        let decision = stopper.observe(val_loss);
        if decision.improved {
            best = model.clone();
        }
        if decision.stop {
            info!("no validation improvement for {} epochs, stopping", config.patience);
            break;
        }
    }
    let (best_epoch, best_val_loss) = stopper.best();
    Ok((
        ModelCheckpoint {
            model: best,
            meta: TrainingMeta {
                epochs_run: history.len(),
                best_epoch,
                best_val_loss,
                seed: config.seed,
            },
        },
        history,
    ))
}

/// Class of the utterance (argmax of the final frame) and per-frame probabilities.
pub fn predict(model: &Model, pair: &StreamPair) -> Result<(usize, Matrix)> {
    model.predict(pair)
}
