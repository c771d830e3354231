use crate::error::{Error, Result};
use crate::numeric::{softmax_rows, Matrix};

/// How frame-level cross-entropies combine into the utterance loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossWeighting {
    /// Every frame carries the utterance label; mean over frames.
    #[default]
    Uniform,
    /// Only the final frame is scored.
    LastFrame,
}

impl LossWeighting {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "last" => Ok(Self::LastFrame),
            other => Err(Error::Config(format!("loss weighting {other:?}, expected uniform|last"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::LastFrame => "last",
        }
    }

    fn frame_weight(&self, t: usize, len: usize) -> f64 {
        match self {
            Self::Uniform => 1.0 / len as f64,
            Self::LastFrame if t + 1 == len => 1.0,
            Self::LastFrame => 0.0,
        }
    }
}

/// Cross-entropy `log sum_j exp(l_j) - l_label` of one logit row.
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let target = logits[label];
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if target == max {
        // Summing the non-target terms first keeps tiny losses representable.
        let rest: f64 = logits
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != label)
            .map(|(_, &l)| (l - target).exp())
            .sum();
        rest.ln_1p()
    } else {
        let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
        lse - target
    }
}

fn check_label(logits: &Matrix, label: usize) -> Result<()> {
    if logits.cols() < 2 {
        return Err(Error::InvalidArgument(format!("{} classes, need at least 2", logits.cols())));
    }
    if label >= logits.cols() {
        return Err(Error::InvalidArgument(format!(
            "label {label} outside [0, {})",
            logits.cols()
        )));
    }
    if logits.rows() == 0 {
        return Err(Error::InvalidArgument("loss of an empty sequence".into()));
    }
    Ok(())
}

/// Per-frame softmax and the weighted cross-entropy against the utterance label.
pub fn sequence_loss(logits: &Matrix, label: usize, weighting: LossWeighting) -> Result<(f64, Matrix)> {
    check_label(logits, label)?;
    let probs = softmax_rows(logits)?;
    let len = logits.rows();
    let loss = logits
        .iter_rows()
        .enumerate()
        .map(|(t, row)| weighting.frame_weight(t, len) * cross_entropy(row, label))
        .sum();
    Ok((loss, probs))
}

/// Gradient of [`sequence_loss`] with respect to the logits.
pub fn sequence_loss_grad(probs: &Matrix, label: usize, weighting: LossWeighting) -> Result<Matrix> {
    check_label(probs, label)?;
    let len = probs.rows();
    let mut grad = probs.clone();
    for t in 0..len {
        let w = weighting.frame_weight(t, len);
        let row = grad.row_mut(t);
        row[label] -= 1.0;
        for g in row.iter_mut() {
            *g *= w;
        }
    }
    Ok(grad)
}
