//! LSTM and bidirectional LSTM layers with exact backpropagation through time.
//!
//! Per step, with `z_t = [x_t, h_{t-1}]`:
//!
//! ```text
//! i = sigmoid(z W_i + b_i)    f = sigmoid(z W_f + b_f)
//! o = sigmoid(z W_o + b_o)    g = tanh(z W_g + b_g)
//! c_t = f * c_{t-1} + i * g   h_t = o * tanh(c_t)
//! ```
//!
//! The four gate blocks are packed column-wise in that order into one
//! `(input + hidden) x 4 hidden` matrix. No peepholes; `h_0 = c_0 = 0`.

use crate::error::{Error, Result};
use crate::numeric::{sigmoid, Matrix, Rng};

const GATE_INPUT: usize = 0;
const GATE_FORGET: usize = 1;
const GATE_OUTPUT: usize = 2;
const GATE_CANDIDATE: usize = 3;

pub const INIT_RANGE: f64 = 0.05;
pub const FORGET_BIAS_INIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `(input_dim + hidden_dim) x 4 hidden_dim`, gate blocks `[i, f, o, g]`.
    pub weights: Matrix,
    /// `1 x 4 hidden_dim`
    pub bias: Matrix,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(input_dim + hidden_dim, 4 * hidden_dim),
            bias: Matrix::zeros(1, 4 * hidden_dim),
        }
    }

    /// Weights Uniform(-0.05, 0.05), forget-gate bias 1, other biases 0.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        p.weights.map_inplace(|_| rng.uniform_range(-INIT_RANGE, INIT_RANGE));
        let h = hidden_dim;
        p.bias.as_mut_slice()[GATE_FORGET * h..(GATE_FORGET + 1) * h].fill(FORGET_BIAS_INIT);
        p
    }

    pub fn hidden_dim(&self) -> usize {
        self.bias.cols() / 4
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows() - self.hidden_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let h4 = self.bias.cols();
        if self.bias.rows() != 1 || !h4.is_multiple_of(4) || self.weights.cols() != h4 || self.weights.rows() < h4 / 4 {
            return Err(Error::shape(
                "LstmParams",
                format!("weights {:?}, bias {:?}", self.weights.shape(), self.bias.shape()),
            ));
        }
        Ok(())
    }
}

/// Intermediates of a forward pass, enough for exact BPTT.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// Row t: `[x_t, h_{t-1}]`
    concat: Matrix,
    /// Row t: activated gates `[i, f, o, g]`
    gates: Matrix,
    /// Row t: `c_t`
    cells: Matrix,
    /// Row t: `tanh(c_t)`
    cell_tanh: Matrix,
}

pub fn lstm_forward(p: &LstmParams, inputs: &Matrix) -> Result<(Matrix, LstmCache)> {
    let (n_in, h) = (p.input_dim(), p.hidden_dim());
    if inputs.cols() != n_in {
        return Err(Error::shape(
            "lstm_forward",
            format!("inputs have {} features, layer expects {n_in}", inputs.cols()),
        ));
    }
    let steps = inputs.rows();
    let mut cache = LstmCache {
        concat: Matrix::zeros(steps, n_in + h),
        gates: Matrix::zeros(steps, 4 * h),
        cells: Matrix::zeros(steps, h),
        cell_tanh: Matrix::zeros(steps, h),
    };
    let mut hidden = Matrix::zeros(steps, h);
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut pre = vec![0.0; 4 * h];

    for t in 0..steps {
        {
            let z = cache.concat.row_mut(t);
            z[..n_in].copy_from_slice(inputs.row(t));
            z[n_in..].copy_from_slice(&h_prev);
        }
        pre.copy_from_slice(p.bias.as_slice());
        for (k, &zk) in cache.concat.row(t).iter().enumerate() {
            if zk == 0.0 {
                continue;
            }
            for (a, w) in pre.iter_mut().zip(p.weights.row(k)) {
                *a += zk * w;
            }
        }
        let gates = cache.gates.row_mut(t);
        for j in 0..h {
            gates[GATE_INPUT * h + j] = sigmoid(pre[GATE_INPUT * h + j]);
            gates[GATE_FORGET * h + j] = sigmoid(pre[GATE_FORGET * h + j]);
            gates[GATE_OUTPUT * h + j] = sigmoid(pre[GATE_OUTPUT * h + j]);
            gates[GATE_CANDIDATE * h + j] = pre[GATE_CANDIDATE * h + j].tanh();
        }
        for j in 0..h {
            let c = gates[GATE_FORGET * h + j] * c_prev[j] + gates[GATE_INPUT * h + j] * gates[GATE_CANDIDATE * h + j];
            let ct = c.tanh();
            cache.cells[(t, j)] = c;
            cache.cell_tanh[(t, j)] = ct;
            c_prev[j] = c;
            h_prev[j] = gates[GATE_OUTPUT * h + j] * ct;
        }
        hidden.row_mut(t).copy_from_slice(&h_prev);
    }
    Ok((hidden, cache))
}

/// Backpropagates `d loss / d hidden` (one row per step) through the layer.
/// Returns the input gradient and the parameter gradient.
pub fn lstm_backward(p: &LstmParams, cache: &LstmCache, grad_hidden: &Matrix) -> Result<(Matrix, LstmParams)> {
    let (n_in, h) = (p.input_dim(), p.hidden_dim());
    let steps = cache.gates.rows();
    if grad_hidden.shape() != (steps, h) {
        return Err(Error::shape(
            "lstm_backward",
            format!("gradient {:?} for {steps} steps of {h} units", grad_hidden.shape()),
        ));
    }
    let mut grads = LstmParams::zeros(n_in, h);
    let mut grad_inputs = Matrix::zeros(steps, n_in);
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut d_pre = vec![0.0; 4 * h];

    for t in (0..steps).rev() {
        let gates = cache.gates.row(t);
        let ct = cache.cell_tanh.row(t);
        for j in 0..h {
            let i = gates[GATE_INPUT * h + j];
            let f = gates[GATE_FORGET * h + j];
            let o = gates[GATE_OUTPUT * h + j];
            let g = gates[GATE_CANDIDATE * h + j];
            let c_prev = if t > 0 { cache.cells[(t - 1, j)] } else { 0.0 };

            let dh = grad_hidden[(t, j)] + dh_next[j];
            let d_o = dh * ct[j];
            let dc = dh * o * (1.0 - ct[j] * ct[j]) + dc_next[j];
            let d_i = dc * g;
            let d_f = dc * c_prev;
            let d_g = dc * i;
            dc_next[j] = dc * f;

            d_pre[GATE_INPUT * h + j] = d_i * i * (1.0 - i);
            d_pre[GATE_FORGET * h + j] = d_f * f * (1.0 - f);
            d_pre[GATE_OUTPUT * h + j] = d_o * o * (1.0 - o);
            d_pre[GATE_CANDIDATE * h + j] = d_g * (1.0 - g * g);
        }
        for (b, d) in grads.bias.as_mut_slice().iter_mut().zip(&d_pre) {
            *b += d;
        }
        let z = cache.concat.row(t);
        for (k, &zk) in z.iter().enumerate() {
            if zk != 0.0 {
                for (w, d) in grads.weights.row_mut(k).iter_mut().zip(&d_pre) {
                    *w += zk * d;
                }
            }
            let dz = p.weights.row(k).iter().zip(&d_pre).map(|(w, d)| w * d).sum::<f64>();
            if k < n_in {
                grad_inputs[(t, k)] = dz;
            } else {
                dh_next[k - n_in] = dz;
            }
        }
    }
    Ok((grad_inputs, grads))
}

/// Forward-time and backward-time LSTMs over the same input.
#[derive(Debug, Clone, PartialEq)]
pub struct BlstmParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

#[derive(Debug, Clone)]
pub struct BlstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
}

/// Per-frame `[h_fwd_t, h_bwd_t]`: `T x (fwd hidden + bwd hidden)`.
pub fn blstm_forward(p: &BlstmParams, inputs: &Matrix) -> Result<(Matrix, BlstmCache)> {
    let (hf, fwd) = lstm_forward(&p.fwd, inputs)?;
    let (hb_rev, bwd) = lstm_forward(&p.bwd, &inputs.reversed_rows())?;
    let out = Matrix::hstack(&[&hf, &hb_rev.reversed_rows()])?;
    Ok((out, BlstmCache { fwd, bwd }))
}

pub fn blstm_backward(p: &BlstmParams, cache: &BlstmCache, grad_out: &Matrix) -> Result<(Matrix, BlstmParams)> {
    let hf = p.fwd.hidden_dim();
    let hb = p.bwd.hidden_dim();
    if grad_out.cols() != hf + hb {
        return Err(Error::shape(
            "blstm_backward",
            format!("gradient has {} columns, expected {}", grad_out.cols(), hf + hb),
        ));
    }
    let (dx_f, g_fwd) = lstm_backward(&p.fwd, &cache.fwd, &grad_out.col_slice(0, hf)?)?;
    let (dx_b_rev, g_bwd) = lstm_backward(&p.bwd, &cache.bwd, &grad_out.col_slice(hf, hb)?.reversed_rows())?;
    let mut dx = dx_f;
    dx.add_assign(&dx_b_rev.reversed_rows())?;
    Ok((dx, BlstmParams { fwd: g_fwd, bwd: g_bwd }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_params(n_in: usize, h: usize, rng: &mut Rng) -> LstmParams {
        let mut p = LstmParams::zeros(n_in, h);
        p.weights.map_inplace(|_| rng.normal(0.0, 0.5));
        p.bias.map_inplace(|_| rng.normal(0.0, 0.5));
        p
    }

    fn random_seq(t: usize, d: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_vec(t, d, (0..t * d).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap()
    }

    /// Scalar loss `sum(H .* R)` for a fixed random `R`.
    fn probe_loss(h: &Matrix, r: &Matrix) -> f64 {
        h.hadamard(r).unwrap().sum()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn zero_parameters_give_zero_hidden_states() {
        let p = LstmParams::zeros(3, 4);
        let mut rng = Rng::new(1);
        let (h, cache) = lstm_forward(&p, &random_seq(5, 3, &mut rng)).unwrap();
        assert!(h.as_slice().iter().all(|&x| x == 0.0));
        assert!(cache.gates.col_slice(0, 12).unwrap().as_slice().iter().all(|&x| x == 0.5));
        assert!(cache.cells.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_step_matches_hand_recursion() {
        let mut rng = Rng::new(2);
        let p = random_params(2, 2, &mut rng);
        let x = random_seq(1, 2, &mut rng);
        let (h, _) = lstm_forward(&p, &x).unwrap();
        let z = [x[(0, 0)], x[(0, 1)], 0.0, 0.0];
        let pre = |col: usize| p.bias[(0, col)] + (0..4).map(|k| z[k] * p.weights[(k, col)]).sum::<f64>();
        for j in 0..2 {
            let i = sigmoid(pre(j));
            let o = sigmoid(pre(4 + j));
            let g = pre(6 + j).tanh();
            let c = i * g;
            assert!((h[(0, j)] - o * c.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn init_sets_forget_bias() {
        let p = LstmParams::init(3, 2, &mut Rng::new(0));
        assert_eq!(p.bias.as_slice(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(p.weights.max_abs() <= INIT_RANGE);
        assert_eq!((p.input_dim(), p.hidden_dim()), (3, 2));
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let p = LstmParams::zeros(3, 2);
        assert!(lstm_forward(&p, &Matrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn lstm_gradients_match_central_differences() {
        let mut rng = Rng::new(31);
        let p = random_params(2, 2, &mut rng);
        let x = random_seq(3, 2, &mut rng);
        let r = random_seq(3, 2, &mut rng);
        let (_, cache) = lstm_forward(&p, &x).unwrap();
        let (dx, g) = lstm_backward(&p, &cache, &r).unwrap();
        let eps = 1e-5;
        let loss = |p: &LstmParams, x: &Matrix| probe_loss(&lstm_forward(p, x).unwrap().0, &r);
        let mut worst: f64 = 0.0;
        for idx in 0..p.weights.len() {
            let mut plus = p.clone();
            plus.weights.as_mut_slice()[idx] += eps;
            let mut minus = p.clone();
            minus.weights.as_mut_slice()[idx] -= eps;
            let num = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * eps);
            worst = worst.max(rel_err(g.weights.as_slice()[idx], num));
        }
        for idx in 0..p.bias.len() {
            let mut plus = p.clone();
            plus.bias.as_mut_slice()[idx] += eps;
            let mut minus = p.clone();
            minus.bias.as_mut_slice()[idx] -= eps;
            let num = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * eps);
            worst = worst.max(rel_err(g.bias.as_slice()[idx], num));
        }
        for idx in 0..x.len() {
            let mut plus = x.clone();
            plus.as_mut_slice()[idx] += eps;
            let mut minus = x.clone();
            minus.as_mut_slice()[idx] -= eps;
            let num = (loss(&p, &plus) - loss(&p, &minus)) / (2.0 * eps);
            worst = worst.max(rel_err(dx.as_slice()[idx], num));
        }
        assert!(worst < 1e-6, "max relative error {worst:e}");
    }

    #[test]
    fn blstm_single_step() {
        let mut rng = Rng::new(6);
        let p = BlstmParams {
            fwd: random_params(3, 2, &mut rng),
            bwd: random_params(3, 4, &mut rng),
        };
        let x = random_seq(1, 3, &mut rng);
        let (y, _) = blstm_forward(&p, &x).unwrap();
        let (hf, _) = lstm_forward(&p.fwd, &x).unwrap();
        let (hb, _) = lstm_forward(&p.bwd, &x).unwrap();
        assert_eq!(y.row(0), Matrix::hstack(&[&hf, &hb]).unwrap().row(0));
    }

    #[test]
    fn blstm_reversal_symmetry() {
        let mut rng = Rng::new(7);
        let a = random_params(3, 2, &mut rng);
        let b = random_params(3, 2, &mut rng);
        let x = random_seq(5, 3, &mut rng);
        let (y1, _) = blstm_forward(&BlstmParams { fwd: a.clone(), bwd: b.clone() }, &x.reversed_rows()).unwrap();
        let (y2, _) = blstm_forward(&BlstmParams { fwd: b, bwd: a }, &x).unwrap();
        let y2 = y2.reversed_rows();
        let swapped = Matrix::hstack(&[&y2.col_slice(2, 2).unwrap(), &y2.col_slice(0, 2).unwrap()]).unwrap();
        assert_eq!(y1, swapped);
    }

    #[test]
    fn blstm_gradients_match_central_differences() {
        let mut rng = Rng::new(41);
        let p = BlstmParams {
            fwd: random_params(3, 2, &mut rng),
            bwd: random_params(3, 3, &mut rng),
        };
        let x = random_seq(4, 3, &mut rng);
        let r = random_seq(4, 5, &mut rng);
        let (_, cache) = blstm_forward(&p, &x).unwrap();
        let (dx, g) = blstm_backward(&p, &cache, &r).unwrap();
        let eps = 1e-5;
        let loss = |p: &BlstmParams, x: &Matrix| probe_loss(&blstm_forward(p, x).unwrap().0, &r);
        let mut worst: f64 = 0.0;
        let analytic: Vec<f64> = [&g.fwd.weights, &g.fwd.bias, &g.bwd.weights, &g.bwd.bias]
            .iter()
            .flat_map(|m| m.as_slice().to_vec())
            .collect();
        let mut k = 0;
        for which in 0..4 {
            let len = [&p.fwd.weights, &p.fwd.bias, &p.bwd.weights, &p.bwd.bias][which].len();
            for idx in 0..len {
                let perturb = |delta: f64| {
                    let mut q = p.clone();
                    let m = match which {
                        0 => &mut q.fwd.weights,
                        1 => &mut q.fwd.bias,
                        2 => &mut q.bwd.weights,
                        _ => &mut q.bwd.bias,
                    };
                    m.as_mut_slice()[idx] += delta;
                    loss(&q, &x)
                };
                let num = (perturb(eps) - perturb(-eps)) / (2.0 * eps);
                worst = worst.max(rel_err(analytic[k], num));
                k += 1;
            }
        }
        for idx in 0..x.len() {
            let mut plus = x.clone();
            plus.as_mut_slice()[idx] += eps;
            let mut minus = x.clone();
            minus.as_mut_slice()[idx] -= eps;
            let num = (loss(&p, &plus) - loss(&p, &minus)) / (2.0 * eps);
            worst = worst.max(rel_err(dx.as_slice()[idx], num));
        }
        assert!(worst < 1e-6, "max relative error {worst:e}");
    }
}
