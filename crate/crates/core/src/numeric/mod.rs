//! Dense linear algebra, activations and seeded sampling.

mod matrix;
mod rng;

pub use matrix::{dot, Matrix};
pub use rng::Rng;

use crate::error::{Error, Result};

/// Logistic function, evaluated on the branch that cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow for large `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let mut out = logits.to_vec();
    softmax_inplace(&mut out)?;
    Ok(out)
}

pub fn softmax_inplace(v: &mut [f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("softmax of empty logits".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
    Ok(())
}

/// Row-wise softmax of a `T x K` logit matrix.
pub fn softmax_rows(logits: &Matrix) -> Result<Matrix> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        softmax_inplace(out.row_mut(i))?;
    }
    Ok(out)
}

/// Independent Bernoulli draws with the given success probabilities.
pub fn sample_bernoulli(p: &Matrix, rng: &mut Rng) -> Result<Matrix> {
    if let Some(bad) = p.as_slice().iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidArgument(format!(
            "bernoulli probability {bad} outside [0, 1]"
        )));
    }
    // One uniform per entry even at p in {0, 1} keeps the stream position
    // independent of the probability values.
    Ok(p.map(|prob| if rng.uniform() < prob { 1.0 } else { 0.0 }))
}

/// Independent unit-variance Gaussian draws around `mean`.
pub fn sample_gaussian(mean: &Matrix, rng: &mut Rng) -> Matrix {
    mean.map(|m| m + rng.standard_normal())
}
