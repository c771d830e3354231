//! Regression-based temporal derivatives (delta coefficients).
//!
//! `d_t = sum_{k=1..W} k (c_{t+k} - c_{t-k}) / (2 sum_{k=1..W} k^2)` with frame
//! indices clamped to the sequence, i.e. the first and last frames are
//! replicated beyond the edges. The filter is linear with fixed coefficients,
//! so its backward pass is the transposed filter.

use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeltaConfig {
    pub window: usize,
}

impl Default for DeltaConfig {
    fn default() -> Self {
        Self { window: 2 }
    }
}

impl DeltaConfig {
    pub fn new(window: usize) -> Result<Self> {
        if window < 1 {
            return Err(Error::Config("delta window must be at least 1".into()));
        }
        Ok(Self { window })
    }

    fn denominator(&self) -> f64 {
        2.0 * (1..=self.window).map(|k| (k * k) as f64).sum::<f64>()
    }
}

fn clamp(t: isize, len: usize) -> usize {
    t.clamp(0, len as isize - 1) as usize
}

/// Delta coefficients of a `T x D` sequence (one frame per row).
pub fn delta(seq: &Matrix, cfg: DeltaConfig) -> Result<Matrix> {
    if seq.rows() == 0 {
        return Err(Error::InvalidArgument("delta of an empty sequence".into()));
    }
    let len = seq.rows();
    let den = cfg.denominator();
    let mut out = Matrix::zeros(len, seq.cols());
    for t in 0..len {
        let row = out.row_mut(t);
        for k in 1..=cfg.window {
            let ahead = seq.row(clamp(t as isize + k as isize, len));
            let behind = seq.row(clamp(t as isize - k as isize, len));
            for ((o, x), y) in row.iter_mut().zip(ahead).zip(behind) {
                *o += k as f64 * (x - y);
            }
        }
        // Dividing the accumulated numerator keeps integer ramps exact.
        for o in row.iter_mut() {
            *o /= den;
        }
    }
    Ok(out)
}

/// Adjoint of [`delta`]: maps a gradient with respect to the deltas onto the
/// input frames.
pub fn delta_transpose(grad: &Matrix, cfg: DeltaConfig) -> Result<Matrix> {
    if grad.rows() == 0 {
        return Err(Error::InvalidArgument("delta of an empty sequence".into()));
    }
    let len = grad.rows();
    let den = cfg.denominator();
    let mut out = Matrix::zeros(len, grad.cols());
    for t in 0..len {
        for k in 1..=cfg.window {
            let coef = k as f64 / den;
            let ahead = clamp(t as isize + k as isize, len);
            let behind = clamp(t as isize - k as isize, len);
            if ahead == behind {
                continue;
            }
            let g = grad.row(t).to_vec();
            for (o, x) in out.row_mut(ahead).iter_mut().zip(&g) {
                *o += coef * x;
            }
            for (o, x) in out.row_mut(behind).iter_mut().zip(&g) {
                *o -= coef * x;
            }
        }
    }
    Ok(out)
}

/// `[b_t, delta(b)_t, delta(delta(b))_t]` per frame: `T x 3B`.
pub fn append_deltas(seq: &Matrix, cfg: DeltaConfig) -> Result<Matrix> {
    let d1 = delta(seq, cfg)?;
    let d2 = delta(&d1, cfg)?;
    Matrix::hstack(&[seq, &d1, &d2])
}

/// Gradient with respect to the bottleneck sequence given a gradient with
/// respect to the appended features.
pub fn append_deltas_backward(grad: &Matrix, cfg: DeltaConfig) -> Result<Matrix> {
    if !grad.cols().is_multiple_of(3) {
        return Err(Error::shape(
            "append_deltas_backward",
            format!("{} feature columns is not a multiple of 3", grad.cols()),
        ));
    }
    let b = grad.cols() / 3;
    let g0 = grad.col_slice(0, b)?;
    let g1 = grad.col_slice(b, b)?;
    let g2 = grad.col_slice(2 * b, b)?;
    let mut through_first = g1;
    through_first.add_assign(&delta_transpose(&g2, cfg)?)?;
    let mut out = g0;
    out.add_assign(&delta_transpose(&through_first, cfg)?)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{dot, Rng};
    use proptest::prelude::*;

    fn column(values: &[f64]) -> Matrix {
        Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn constant_sequence_has_zero_delta() {
        let seq = Matrix::filled(7, 3, 4.25);
        let d = delta(&seq, DeltaConfig::default()).unwrap();
        assert!(d.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ramp_recovers_slope_in_the_interior() {
        let a = 0.75;
        let seq = column(&(0..9).map(|t| a * t as f64).collect::<Vec<_>>());
        let d = delta(&seq, DeltaConfig::default()).unwrap();
        for t in 2..7 {
            assert_eq!(d[(t, 0)], a);
        }
    }

    #[test]
    fn impulse_hand_values() {
        let d = delta(&column(&[0.0, 0.0, 1.0, 0.0, 0.0]), DeltaConfig::default()).unwrap();
        assert!(d[(2, 0)].abs() < 1e-15);
        assert!((d[(1, 0)] - 0.1).abs() < 1e-15);
        assert!((d[(3, 0)] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        assert!(delta(&Matrix::zeros(0, 2), DeltaConfig::default()).is_err());
        assert!(DeltaConfig::new(0).is_err());
    }

    #[test]
    fn constant_bottleneck_appends_zeros() {
        let b = Matrix::from_rows(&vec![vec![1.0, -2.0]; 4]).unwrap();
        let f = append_deltas(&b, DeltaConfig::default()).unwrap();
        assert_eq!(f.shape(), (4, 6));
        for row in f.iter_rows() {
            assert_eq!(row, &[1.0, -2.0, 0.0, 0.0, 0.0, 0.0]);
        }
    }

    proptest! {
        #[test]
        fn append_deltas_is_linear(seed in any::<u64>(), len in 1usize..8, window in 1usize..4) {
            let mut rng = Rng::new(seed);
            let cfg = DeltaConfig::new(window).unwrap();
            let x = Matrix::from_vec(len, 2, (0..2 * len).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
            let y = Matrix::from_vec(len, 2, (0..2 * len).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
            let lhs = append_deltas(&x.add(&y).unwrap(), cfg).unwrap();
            let rhs = append_deltas(&x, cfg).unwrap().add(&append_deltas(&y, cfg).unwrap()).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
        }

        #[test]
        fn transpose_is_the_adjoint(seed in any::<u64>(), len in 1usize..9, window in 1usize..4) {
            // <delta(x), g> == <x, delta^T(g)>
            let mut rng = Rng::new(seed);
            let cfg = DeltaConfig::new(window).unwrap();
            let x = Matrix::from_vec(len, 3, (0..3 * len).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
            let g = Matrix::from_vec(len, 3, (0..3 * len).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
            let lhs = dot(delta(&x, cfg).unwrap().as_slice(), g.as_slice());
            let rhs = dot(x.as_slice(), delta_transpose(&g, cfg).unwrap().as_slice());
            prop_assert!((lhs - rhs).abs() < 1e-12);

            let g3 = Matrix::from_vec(len, 9, (0..9 * len).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
            let lhs = dot(append_deltas(&x, cfg).unwrap().as_slice(), g3.as_slice());
            let rhs = dot(x.as_slice(), append_deltas_backward(&g3, cfg).unwrap().as_slice());
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn interior_frames_are_shift_equivariant(seed in any::<u64>(), len in 6usize..12) {
            let mut rng = Rng::new(seed);
            let cfg = DeltaConfig::default();
            let x: Vec<f64> = (0..len + 1).map(|_| rng.normal(0.0, 1.0)).collect();
            let d = delta(&column(&x[..len]), cfg).unwrap();
            let ds = delta(&column(&x[1..]), cfg).unwrap();
            for t in cfg.window + 1..len - cfg.window {
                prop_assert!((d[(t, 0)] - ds[(t - 1, 0)]).abs() < 1e-12);
            }
        }
    }
}
