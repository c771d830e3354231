mod common;

use common::*;
use e2evsr::numeric::Rng;
use e2evsr::seqnet::{LossWeighting, Model, Streams};

#[test]
fn random_tiny_models_backpropagate_exactly() {
    let mut rng = Rng::new(77);
    for case in 0..6 {
        let mut arch = random_tiny_arch(&mut rng);
        arch.streams = [Streams::Both, Streams::RawOnly, Streams::DiffOnly][case % 3];
        let weighting = if case % 2 == 0 { LossWeighting::Uniform } else { LossWeighting::LastFrame };
        let model = random_model(arch.clone(), &mut rng);
        let len = 1 + rng.below(5) as usize;
        let label = rng.below(arch.num_classes as u64) as usize;
        let pair = random_pair(len, arch.frame.pixels(), label, &mut rng);
        let (err, at) = max_gradient_error(&model, &pair, weighting);
        assert!(err < 1e-5, "case {case} {arch:?}: {err:e} at {at}");
    }
}

#[test]
fn pretrained_scale_parameters_also_check() {
    let mut rng = Rng::new(3);
    let arch = random_tiny_arch(&mut rng);
    let model = Model::init_random(arch.clone(), &mut rng).unwrap();
    let pair = random_pair(4, arch.frame.pixels(), 1, &mut rng);
    let (err, at) = max_gradient_error(&model, &pair, LossWeighting::Uniform);
    assert!(err < 1e-5, "{err:e} at {at}");
}
