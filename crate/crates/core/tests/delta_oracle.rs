mod common;

use common::*;
use e2evsr::numeric::{Matrix, Rng};
use e2evsr::seqnet::{append_deltas, delta, DeltaConfig};

#[test]
fn matrix_delta_matches_the_scalar_formula() {
    let mut rng = Rng::new(13);
    for _ in 0..50 {
        let len = 1 + rng.below(12) as usize;
        let dim = 1 + rng.below(4) as usize;
        let window = 1 + rng.below(3) as usize;
        let seq = random_matrix(len, dim, 2.0, &mut rng);
        let cfg = DeltaConfig::new(window).unwrap();
        let expected = scalar_delta(&rows_of(&seq), window);
        let got = rows_of(&delta(&seq, cfg).unwrap());
        for (a, b) in expected.iter().flatten().zip(got.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn appended_features_stack_both_orders() {
    let mut rng = Rng::new(2);
    let seq = random_matrix(9, 3, 1.0, &mut rng);
    let rows = rows_of(&seq);
    let d1 = scalar_delta(&rows, 2);
    let d2 = scalar_delta(&d1, 2);
    let feats = append_deltas(&seq, DeltaConfig::default()).unwrap();
    for t in 0..9 {
        let expected: Vec<f64> = [&rows[t], &d1[t], &d2[t]].into_iter().flatten().copied().collect();
        for (a, b) in expected.iter().zip(feats.row(t)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert_eq!(feats.shape(), (9, 9));
    let single = append_deltas(&Matrix::from_rows(&[vec![3.0]]).unwrap(), DeltaConfig::default()).unwrap();
    assert_eq!(single.as_slice(), &[3.0, 0.0, 0.0]);
}
