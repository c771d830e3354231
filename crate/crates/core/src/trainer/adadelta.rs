use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::seqnet::{Gradients, Model};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Running averages of squared gradients and squared updates, one pair of
/// matrices per model tensor in [`Model::tensors`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaDeltaState {
    pub rho: f64,
    pub epsilon: f64,
    pub sq_grad: Vec<Matrix>,
    pub sq_update: Vec<Matrix>,
}

impl AdaDeltaState {
    pub fn new(model: &Model, rho: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) || epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::Config(format!("adadelta rho={rho} epsilon={epsilon}")));
        }
        let zeros: Vec<Matrix> = model
            .tensors()
            .iter()
            .map(|(_, _, m)| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        Ok(Self {
            rho,
            epsilon,
            sq_grad: zeros.clone(),
            sq_update: zeros,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.sq_grad.iter().chain(&self.sq_update).all(Matrix::is_finite)
    }
}

/// Per-scalar AdaDelta update on parallel slices.
pub fn adadelta_update(rho: f64, epsilon: f64, params: &mut [f64], grads: &[f64], sq_grad: &mut [f64], sq_update: &mut [f64]) {
    for (((x, &g), eg), ex) in params.iter_mut().zip(grads).zip(sq_grad.iter_mut()).zip(sq_update.iter_mut()) {
        *eg = rho * *eg + (1.0 - rho) * g * g;
        let dx = -((*ex + epsilon).sqrt() / (*eg + epsilon).sqrt()) * g;
        *ex = rho * *ex + (1.0 - rho) * dx * dx;
        *x += dx;
    }
}

/// One AdaDelta step over every model tensor. Nothing is modified when the
/// gradient contains a non-finite entry.
pub fn adadelta_step(state: &mut AdaDeltaState, model: &mut Model, grads: &Gradients) -> Result<()> {
    let grad_tensors = grads.tensors();
    let mut params = model.tensors_mut();
    if params.len() != grad_tensors.len() || params.len() != state.sq_grad.len() {
        return Err(Error::shape(
            "adadelta_step",
            format!("{} parameters, {} gradients, {} accumulators", params.len(), grad_tensors.len(), state.sq_grad.len()),
        ));
    }
    for ((name, _, p), (_, _, g)) in params.iter().zip(&grad_tensors) {
        if p.shape() != g.shape() {
            return Err(Error::shape("adadelta_step", format!("{name}: {:?} vs gradient {:?}", p.shape(), g.shape())));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    for (i, ((_, _, p), (_, _, g))) in params.iter_mut().zip(&grad_tensors).enumerate() {
        if state.sq_grad[i].shape() != p.shape() {
            return Err(Error::shape("adadelta_step", format!("accumulator {i} does not match its parameter")));
        }
        adadelta_update(
            state.rho,
            state.epsilon,
            p.as_mut_slice(),
            g.as_slice(),
            state.sq_grad[i].as_mut_slice(),
            state.sq_update[i].as_mut_slice(),
        );
    }
    Ok(())
}
