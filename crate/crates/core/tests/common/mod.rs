//! Independent reference implementations and fixtures shared by the
//! integration tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use e2evsr::dataio::{FrameSpec, ManifestEntry, StreamPair};
use e2evsr::numeric::{Matrix, Rng};
use e2evsr::rbm::{cd1_update, Cd1Settings, RbmKind, RbmParams};
use e2evsr::seqnet::{Architecture, DeltaConfig, LossWeighting, Model, ParamGroup, Streams};

/// Central-difference step for gradient checks.
pub const FD_STEP: f64 = 1e-5;
/// Relative errors are taken against at least this magnitude, so entries whose
/// true gradient is near zero are judged by absolute error instead.
pub const REL_ERR_FLOOR: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

pub fn random_matrix(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal(0.0, std)).collect()).unwrap()
}

/// A random architecture within the gradient-check limits: at most 16
/// pixels, bottleneck at most 4, recurrent widths at most 5, at most 4 classes.
pub fn random_tiny_arch(rng: &mut Rng) -> Architecture {
    let height = 2 + rng.below(3) as usize;
    let width = 2 + rng.below((16 / height - 1) as u64) as usize;
    let depth = 1 + rng.below(2) as usize;
    Architecture {
        frame: FrameSpec { height, width },
        encoder_hidden: (0..depth).map(|_| 2 + rng.below(5) as usize).collect(),
        bottleneck: 1 + rng.below(4) as usize,
        lstm_hidden: 1 + rng.below(5) as usize,
        blstm_hidden: 1 + rng.below(5) as usize,
        num_classes: 2 + rng.below(3) as usize,
        streams: Streams::Both,
        delta: DeltaConfig::default(),
    }
}

pub fn random_pair(len: usize, pixels: usize, label: usize, rng: &mut Rng) -> StreamPair {
    StreamPair {
        raw: random_matrix(len, pixels, 1.0, rng),
        diff: random_matrix(len, pixels, 1.0, rng),
        label,
    }
}

/// Model with every parameter drawn at a scale where all nonlinearities are
/// exercised.
pub fn random_model(arch: Architecture, rng: &mut Rng) -> Model {
    let mut model = Model::init_random(arch, &mut Rng::new(rng.next_u64())).unwrap();
    for (_, group, m) in model.tensors_mut() {
        let std = match group {
            ParamGroup::Encoder => 0.7,
            ParamGroup::Recurrent => 0.4,
            ParamGroup::Output => 0.5,
        };
        m.map_inplace(|_| rng.normal(0.0, std));
    }
    model
}

/// Largest relative error between backpropagated and central-difference
/// gradients over every parameter, with the name of the worst entry.
pub fn max_gradient_error(model: &Model, pair: &StreamPair, weighting: LossWeighting) -> (f64, String) {
    let (_, cache) = model.loss(pair, weighting).unwrap();
    let grads = model.backward(pair, &cache, weighting).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, _, m)| (n, m.as_slice().to_vec()))
        .collect();
    let mut worst = (0.0, String::new());
    let mut probe = model.clone();
    for (t, (name, values)) in analytic.iter().enumerate() {
        for (i, &g) in values.iter().enumerate() {
            let original = probe.tensors()[t].2.as_slice()[i];
            let mut loss_at = |x: f64| {
                probe.tensors_mut()[t].2.as_mut_slice()[i] = x;
                probe.loss(pair, weighting).unwrap().0
            };
            let numeric = (loss_at(original + FD_STEP) - loss_at(original - FD_STEP)) / (2.0 * FD_STEP);
            loss_at(original);
            let e = rel_err(g, numeric);
            if e > worst.0 {
                worst = (e, format!("{name}[{i}] analytic {g:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}

/// Delta coefficients straight from the regression formula, one scalar at a
/// time, with clamped frame indices.
pub fn scalar_delta(seq: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    let len = seq.len() as i64;
    let dim = seq[0].len();
    let den: f64 = 2.0 * (1..=window).map(|k| (k * k) as f64).sum::<f64>();
    let at = |t: i64, d: usize| seq[t.clamp(0, len - 1) as usize][d];
    (0..len)
        .map(|t| {
            (0..dim)
                .map(|d| {
                    let mut num = 0.0;
                    for k in 1..=window as i64 {
                        num += k as f64 * (at(t + k, d) - at(t - k, d));
                    }
                    num / den
                })
                .collect()
        })
        .collect()
}

pub fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

pub fn bit_vectors(n: usize) -> Vec<Vec<f64>> {
    (0..1usize << n)
        .map(|m| (0..n).map(|i| ((m >> i) & 1) as f64).collect())
        .collect()
}

pub fn random_bb_rbm(visible: usize, hidden: usize, std: f64, rng: &mut Rng) -> RbmParams {
    let mut p = RbmParams::zeros(RbmKind::BernoulliBernoulli, visible, hidden);
    p.weights = random_matrix(visible, hidden, std, rng);
    p.vbias = random_matrix(1, visible, std, rng);
    p.hbias = random_matrix(1, hidden, std, rng);
    p
}

/// `E(v, h) = -v W h - b.v - c.h`
pub fn bb_energy(rbm: &RbmParams, v: &[f64], h: &[f64]) -> f64 {
    let mut e = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        e -= vi * rbm.vbias.as_slice()[i];
        for (j, &hj) in h.iter().enumerate() {
            e -= vi * rbm.weights[(i, j)] * hj;
        }
    }
    for (j, &hj) in h.iter().enumerate() {
        e -= hj * rbm.hbias.as_slice()[j];
    }
    e
}

/// Partition function by summing `exp(-E)` over every joint configuration.
pub fn joint_partition(rbm: &RbmParams) -> f64 {
    let hs = bit_vectors(rbm.hidden_dim());
    bit_vectors(rbm.visible_dim())
        .iter()
        .map(|v| hs.iter().map(|h| (-bb_energy(rbm, v, h)).exp()).sum::<f64>())
        .sum()
}

/// Exact gradient of the mean data log-likelihood with respect to weights,
/// visible biases and hidden biases (in that order), by enumerating the
/// joint distribution.
pub fn exact_likelihood_gradient(rbm: &RbmParams, data: &[Vec<f64>]) -> (Matrix, Matrix, Matrix) {
    let (nv, nh) = (rbm.visible_dim(), rbm.hidden_dim());
    let hs = bit_vectors(nh);
    let vs = bit_vectors(nv);
    let mut model_w = Matrix::zeros(nv, nh);
    let mut model_v = Matrix::zeros(1, nv);
    let mut model_h = Matrix::zeros(1, nh);
    let mut z = 0.0;
    for v in &vs {
        for h in &hs {
            let p = (-bb_energy(rbm, v, h)).exp();
            z += p;
            for i in 0..nv {
                model_v.as_mut_slice()[i] += p * v[i];
                for j in 0..nh {
                    model_w.as_mut_slice()[i * nh + j] += p * v[i] * h[j];
                }
            }
            for j in 0..nh {
                model_h.as_mut_slice()[j] += p * h[j];
            }
        }
    }
    for m in [&mut model_w, &mut model_v, &mut model_h] {
        m.scale(1.0 / z);
    }
    // Data term: hiddens enter through their conditional means.
    let mut data_w = Matrix::zeros(nv, nh);
    let mut data_v = Matrix::zeros(1, nv);
    let mut data_h = Matrix::zeros(1, nh);
    for v in data {
        let mean: Vec<f64> = (0..nh)
            .map(|j| {
                let a: f64 = rbm.hbias.as_slice()[j] + (0..nv).map(|i| v[i] * rbm.weights[(i, j)]).sum::<f64>();
                1.0 / (1.0 + (-a).exp())
            })
            .collect();
        for i in 0..nv {
            data_v.as_mut_slice()[i] += v[i];
            for j in 0..nh {
                data_w.as_mut_slice()[i * nh + j] += v[i] * mean[j];
            }
        }
        for j in 0..nh {
            data_h.as_mut_slice()[j] += mean[j];
        }
    }
    let n = data.len() as f64;
    for m in [&mut data_w, &mut data_v, &mut data_h] {
        m.scale(1.0 / n);
    }
    (
        data_w.sub(&model_w).unwrap(),
        data_v.sub(&model_v).unwrap(),
        data_h.sub(&model_h).unwrap(),
    )
}

/// Mean CD-1 parameter change (learning rate 1, no decay) over `repeats` runs.
pub fn mean_cd1_update(rbm: &RbmParams, data: &Matrix, repeats: usize, rng: &mut Rng) -> (Matrix, Matrix, Matrix) {
    let settings = Cd1Settings {
        learning_rate: 1.0,
        l2: 0.0,
    };
    let mut dw = Matrix::zeros(rbm.visible_dim(), rbm.hidden_dim());
    let mut dv = Matrix::zeros(1, rbm.visible_dim());
    let mut dh = Matrix::zeros(1, rbm.hidden_dim());
    for _ in 0..repeats {
        let (next, _) = cd1_update(rbm, data, settings, rng).unwrap();
        dw.add_assign(&next.weights.sub(&rbm.weights).unwrap()).unwrap();
        dv.add_assign(&next.vbias.sub(&rbm.vbias).unwrap()).unwrap();
        dh.add_assign(&next.hbias.sub(&rbm.hbias).unwrap()).unwrap();
    }
    for m in [&mut dw, &mut dv, &mut dh] {
        m.scale(1.0 / repeats as f64);
    }
    (dw, dv, dh)
}

/// Manifest rows for `subjects x classes x reps` utterances with ids 1..=subjects.
pub fn protocol_manifest(subjects: usize, classes: usize, reps: usize) -> Vec<ManifestEntry> {
    let mut out = Vec::new();
    for s in 1..=subjects {
        for c in 0..classes {
            for r in 0..reps {
                out.push(ManifestEntry {
                    subject_id: s.to_string(),
                    label: c,
                    utterance_id: format!("c{c}_r{r}"),
                    frame_dir: PathBuf::from(format!("s{s:02}/c{c}_r{r}")),
                    num_frames: 2,
                });
            }
        }
    }
    out
}

/// Every file below `root`, keyed by relative path.
pub fn tree_contents(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}
