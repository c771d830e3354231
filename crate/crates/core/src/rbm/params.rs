use crate::error::{Error, Result};
use crate::numeric::{sample_bernoulli, sample_gaussian, sigmoid, softplus, Matrix, Rng};

/// Unit types of an RBM, named visible-hidden.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbmKind {
    GaussianBernoulli,
    BernoulliBernoulli,
    BernoulliGaussian,
}

impl RbmKind {
    pub fn visible_gaussian(self) -> bool {
        self == RbmKind::GaussianBernoulli
    }

    pub fn hidden_gaussian(self) -> bool {
        self == RbmKind::BernoulliGaussian
    }

    pub fn tag(self) -> &'static str {
        match self {
            RbmKind::GaussianBernoulli => "GB",
            RbmKind::BernoulliBernoulli => "BB",
            RbmKind::BernoulliGaussian => "BG",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "GB" => Ok(RbmKind::GaussianBernoulli),
            "BB" => Ok(RbmKind::BernoulliBernoulli),
            "BG" => Ok(RbmKind::BernoulliGaussian),
            other => Err(Error::InvalidArgument(format!("unknown RBM kind {other:?}"))),
        }
    }
}

/// One RBM. Gaussian units have unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    pub kind: RbmKind,
    /// `visible x hidden`
    pub weights: Matrix,
    /// `1 x visible`
    pub vbias: Matrix,
    /// `1 x hidden`
    pub hbias: Matrix,
}

/// Standard deviation of the initial weights.
pub const INIT_WEIGHT_STD: f64 = 0.01;

impl RbmParams {
    pub fn zeros(kind: RbmKind, visible: usize, hidden: usize) -> Self {
        Self {
            kind,
            weights: Matrix::zeros(visible, hidden),
            vbias: Matrix::zeros(1, visible),
            hbias: Matrix::zeros(1, hidden),
        }
    }

    /// Weights drawn from Normal(0, 0.01), biases zero.
    pub fn init(kind: RbmKind, visible: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(kind, visible, hidden);
        p.weights.map_inplace(|_| rng.normal(0.0, INIT_WEIGHT_STD));
        p
    }

    pub fn visible_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (v, h) = self.weights.shape();
        if self.vbias.shape() != (1, v) || self.hbias.shape() != (1, h) {
            return Err(Error::shape(
                "RbmParams",
                format!(
                    "weights {v}x{h}, vbias {:?}, hbias {:?}",
                    self.vbias.shape(),
                    self.hbias.shape()
                ),
            ));
        }
        Ok(())
    }

    /// Hidden pre-activation `v W + hbias`.
    pub fn hidden_input(&self, v: &Matrix) -> Result<Matrix> {
        if v.cols() != self.visible_dim() {
            return Err(Error::shape(
                "propup",
                format!("batch has {} columns, RBM has {} visible units", v.cols(), self.visible_dim()),
            ));
        }
        let mut a = v.matmul(&self.weights)?;
        a.add_row_broadcast(&self.hbias)?;
        Ok(a)
    }

    /// Hidden probabilities (Bernoulli) or means (Gaussian) given visibles.
    pub fn propup(&self, v: &Matrix) -> Result<Matrix> {
        let mut a = self.hidden_input(v)?;
        if !self.kind.hidden_gaussian() {
            a.map_inplace(sigmoid);
        }
        Ok(a)
    }

    /// Visible probabilities (Bernoulli) or means (Gaussian) given hiddens.
    pub fn propdown(&self, h: &Matrix) -> Result<Matrix> {
        if h.cols() != self.hidden_dim() {
            return Err(Error::shape(
                "propdown",
                format!("batch has {} columns, RBM has {} hidden units", h.cols(), self.hidden_dim()),
            ));
        }
        let mut a = h.matmul_t(&self.weights)?;
        a.add_row_broadcast(&self.vbias)?;
        if !self.kind.visible_gaussian() {
            a.map_inplace(sigmoid);
        }
        Ok(a)
    }

    /// Free energy of one visible vector with the hiddens summed (or
    /// integrated) out. For Gaussian hiddens the constant `H/2 log 2pi` is
    /// dropped.
    pub fn free_energy(&self, v: &[f64]) -> Result<f64> {
        let x = Matrix::row_vector(v);
        let a = self.hidden_input(&x)?;
        let visible_term = if self.kind.visible_gaussian() {
            0.5 * v
                .iter()
                .zip(self.vbias.as_slice())
                .map(|(x, b)| (x - b).powi(2))
                .sum::<f64>()
        } else {
            -v.iter().zip(self.vbias.as_slice()).map(|(x, b)| x * b).sum::<f64>()
        };
        let hidden_term: f64 = if self.kind.hidden_gaussian() {
            a.as_slice().iter().map(|z| 0.5 * z * z).sum()
        } else {
            a.as_slice().iter().map(|&z| softplus(z)).sum()
        };
        Ok(visible_term - hidden_term)
    }
}

/// Hyperparameters of one CD-1 step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cd1Settings {
    pub learning_rate: f64,
    pub l2: f64,
}

/// One contrastive-divergence step on a minibatch (one sample per row).
///
/// Hiddens are sampled from the data-driven probabilities; visibles are
/// reconstructed by Bernoulli sampling (Bernoulli units) or their mean
/// (Gaussian units); the negative hidden statistics use probabilities.
/// Returns the updated parameters and the mean squared difference between
/// the batch and its reconstruction mean.
pub fn cd1_update(rbm: &RbmParams, batch: &Matrix, settings: Cd1Settings, rng: &mut Rng) -> Result<(RbmParams, f64)> {
    if batch.rows() == 0 {
        return Err(Error::InvalidArgument("cd1_update on an empty batch".into()));
    }
    let n = batch.rows() as f64;
    let h0 = rbm.propup(batch)?;
    let h0_sample = if rbm.kind.hidden_gaussian() {
        sample_gaussian(&h0, rng)
    } else {
        sample_bernoulli(&h0, rng)?
    };
    let v1_mean = rbm.propdown(&h0_sample)?;
    let v1 = if rbm.kind.visible_gaussian() {
        v1_mean.clone()
    } else {
        sample_bernoulli(&v1_mean, rng)?
    };
    let h1 = rbm.propup(&v1)?;

    let positive = batch.t_matmul(&h0)?;
    let negative = v1.t_matmul(&h1)?;
    let lr = settings.learning_rate;

    let mut next = rbm.clone();
    for ((w, (p, q)), w_old) in next
        .weights
        .as_mut_slice()
        .iter_mut()
        .zip(positive.as_slice().iter().zip(negative.as_slice()))
        .zip(rbm.weights.as_slice())
    {
        *w += lr * ((p - q) / n - settings.l2 * w_old);
    }
    let dv = batch.sub(&v1)?.sum_rows();
    next.vbias.axpy(lr / n, &dv)?;
    let dh = h0.sub(&h1)?.sum_rows();
    next.hbias.axpy(lr / n, &dh)?;

    let err = batch
        .as_slice()
        .iter()
        .zip(v1_mean.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / batch.len() as f64;
    Ok((next, err))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_bits(n: usize) -> Vec<Vec<f64>> {
        (0..1usize << n)
            .map(|m| (0..n).map(|i| ((m >> i) & 1) as f64).collect())
            .collect()
    }

    fn random_rbm(kind: RbmKind, v: usize, h: usize, std: f64, rng: &mut Rng) -> RbmParams {
        let mut p = RbmParams::zeros(kind, v, h);
        p.weights.map_inplace(|_| rng.normal(0.0, std));
        p.vbias.map_inplace(|_| rng.normal(0.0, std));
        p.hbias.map_inplace(|_| rng.normal(0.0, std));
        p
    }

    #[test]
    fn propup_zero_weights() {
        let mut rng = Rng::new(1);
        let v = Matrix::from_vec(3, 4, (0..12).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
        let bb = RbmParams::zeros(RbmKind::BernoulliBernoulli, 4, 2);
        assert!(bb.propup(&v).unwrap().as_slice().iter().all(|&x| x == 0.5));

        let mut bg = RbmParams::zeros(RbmKind::BernoulliGaussian, 4, 2);
        bg.hbias = Matrix::row_vector(&[1.5, -2.0]);
        let h = bg.propup(&v).unwrap();
        for row in h.iter_rows() {
            assert_eq!(row, &[1.5, -2.0]);
        }
    }

    #[test]
    fn propup_cancellation() {
        let mut p = RbmParams::zeros(RbmKind::BernoulliBernoulli, 1, 1);
        p.weights = Matrix::row_vector(&[2.0]);
        p.hbias = Matrix::row_vector(&[-2.0]);
        let h = p.propup(&Matrix::row_vector(&[1.0])).unwrap();
        assert_eq!(h.as_slice(), &[0.5]);
    }

    #[test]
    fn propdown_zero_weights() {
        let h = Matrix::filled(2, 3, 1.0);
        let gb = RbmParams::zeros(RbmKind::GaussianBernoulli, 4, 3);
        assert!(gb.propdown(&h).unwrap().as_slice().iter().all(|&x| x == 0.0));
        let bb = RbmParams::zeros(RbmKind::BernoulliBernoulli, 4, 3);
        assert!(bb.propdown(&h).unwrap().as_slice().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = RbmParams::zeros(RbmKind::BernoulliBernoulli, 4, 3);
        assert!(p.propup(&Matrix::zeros(1, 3)).is_err());
        assert!(p.propdown(&Matrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn propdown_is_propup_of_the_transposed_machine() {
        let mut rng = Rng::new(21);
        let p = random_rbm(RbmKind::BernoulliBernoulli, 5, 3, 0.7, &mut rng);
        let flipped = RbmParams {
            kind: RbmKind::BernoulliBernoulli,
            weights: p.weights.transpose(),
            vbias: p.hbias.clone(),
            hbias: p.vbias.clone(),
        };
        let h = Matrix::from_vec(4, 3, (0..12).map(|_| rng.uniform()).collect()).unwrap();
        let a = p.propdown(&h).unwrap();
        let b = flipped.propup(&h).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-15);

        let gb = RbmParams { kind: RbmKind::GaussianBernoulli, ..p.clone() };
        let bg = RbmParams { kind: RbmKind::BernoulliGaussian, ..flipped };
        let a = gb.propdown(&h).unwrap();
        let b = bg.propup(&h).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn free_energy_at_zero_parameters() {
        let bb = RbmParams::zeros(RbmKind::BernoulliBernoulli, 3, 4);
        for v in all_bits(3) {
            let f = bb.free_energy(&v).unwrap();
            assert!((f + 4.0 * 2f64.ln()).abs() < 1e-14);
        }
        let gb = RbmParams::zeros(RbmKind::GaussianBernoulli, 3, 4);
        let v = [0.5, -1.0, 2.0];
        let expect = 0.5 * (0.25 + 1.0 + 4.0) - 4.0 * 2f64.ln();
        assert!((gb.free_energy(&v).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn free_energy_reproduces_partition_function() {
        let mut rng = Rng::new(99);
        let p = random_rbm(RbmKind::BernoulliBernoulli, 3, 2, 1.0, &mut rng);
        let via_free_energy: f64 = all_bits(3)
            .iter()
            .map(|v| (-p.free_energy(v).unwrap()).exp())
            .sum();
        let mut joint = 0.0;
        for v in all_bits(3) {
            for h in all_bits(2) {
                let mut e = 0.0;
                for i in 0..3 {
                    e -= p.vbias.as_slice()[i] * v[i];
                    for j in 0..2 {
                        e -= v[i] * p.weights[(i, j)] * h[j];
                    }
                }
                for j in 0..2 {
                    e -= p.hbias.as_slice()[j] * h[j];
                }
                joint += (-e).exp();
            }
        }
        assert!((via_free_energy - joint).abs() < 1e-10);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut rng = Rng::new(4);
        let p = random_rbm(RbmKind::GaussianBernoulli, 6, 4, 0.3, &mut rng);
        let batch = Matrix::from_vec(5, 6, (0..30).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
        let settings = Cd1Settings { learning_rate: 0.0, l2: 0.0 };
        let (next, err) = cd1_update(&p, &batch, settings, &mut rng).unwrap();
        assert_eq!(next, p);
        assert!(err > 0.0);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let p = RbmParams::zeros(RbmKind::BernoulliBernoulli, 2, 2);
        let settings = Cd1Settings { learning_rate: 0.1, l2: 0.0 };
        assert!(cd1_update(&p, &Matrix::zeros(0, 2), settings, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn training_reduces_reconstruction_error() {
        let mut rng = Rng::new(12);
        let a = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let b = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|i| {
                let proto = if i % 2 == 0 { &a } else { &b };
                proto.iter().map(|&x| if rng.uniform() < 0.05 { 1.0 - x } else { x }).collect()
            })
            .collect();
        let mut p = RbmParams::init(RbmKind::BernoulliBernoulli, 6, 4, &mut rng);
        let settings = Cd1Settings { learning_rate: 0.1, l2: 0.0002 };
        let mut epoch_errors = Vec::new();
        for _ in 0..20 {
            let mut total = 0.0;
            for start in (0..100).step_by(10) {
                let batch = Matrix::from_rows(&rows[start..start + 10]).unwrap();
                let (next, err) = cd1_update(&p, &batch, settings, &mut rng).unwrap();
                p = next;
                total += err;
            }
            epoch_errors.push(total / 10.0);
        }
        assert!(epoch_errors[19] < epoch_errors[0], "{epoch_errors:?}");
    }
}
