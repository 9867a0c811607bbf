//! Tape gradients against central finite differences.

mod common;

use common::{primitive_grad_error, primitives, rand_t, tiny_loss_error};
use dct_core::graph::Graph;
use dct_core::tensor::Tensor;
use dct_core::training::{ConditioningMode, GeneratorKind};

const TOL: f64 = 1e-4;

#[test]
fn every_primitive_matches_finite_differences() {
    for (name, inputs, build) in primitives() {
        let e = primitive_grad_error(&inputs, &*build);
        assert!(e < TOL, "{name}: relative error {e:e}");
    }
}

#[test]
fn self_distance_has_zero_gradient() {
    // The diagonal of ‖x_i − x_j‖ is flat; the gradient must not be NaN.
    let x = rand_t(3, 2, -1.0, 1.0, 40);
    let mut g = Graph::new();
    let v = g.variable(x).unwrap();
    let d = g.pairwise_dist(v, v).unwrap();
    let s = g.sum(d).unwrap();
    let gr = g.backward(s, &Tensor::scalar(1.0)).unwrap();
    assert!(gr.variable(v).unwrap().is_finite());
}

fn check_loss(gen: GeneratorKind, cond: ConditioningMode, stochastic: bool) {
    let e = tiny_loss_error(gen, cond, stochastic);
    assert!(e < TOL, "{gen:?}/{cond:?}: relative error {e:e}");
}

#[test]
fn swd_loss_gradient() {
    check_loss(GeneratorKind::Swd, ConditioningMode::Stc, false);
    check_loss(GeneratorKind::Swd, ConditioningMode::OneHot, false);
}

#[test]
fn energy_loss_gradient() {
    check_loss(GeneratorKind::Energy, ConditioningMode::Stc, false);
    check_loss(GeneratorKind::Energy, ConditioningMode::Stc, true);
}

#[test]
fn flow_matching_loss_gradient() {
    check_loss(GeneratorKind::Fm, ConditioningMode::Stc, false);
    check_loss(GeneratorKind::Fm, ConditioningMode::OneHot, false);
}
