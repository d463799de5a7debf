//! Finite-difference checks for every backward pass: per-layer and through
//! the full model at the tiny configuration.

mod support;

use support::*;
use voxelprior::data::VoxelGrid;
use voxelprior::model::{self, ArchConfig, Variant};
use voxelprior::ops::{self, Activation, Padding};
use voxelprior::Tensor;

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;

/// Scalar loss for layer checks: fixed random weighting of the output.
fn weighted_sum(out: &Tensor, weights: &Tensor) -> f64 {
    out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

#[test]
fn conv2d_gradients_match_finite_differences() {
    let mut r = rng(100);
    for &padding in &[Padding::Same, Padding::Valid] {
        let input = random_tensor(&[2, 5, 5], &mut r);
        let weights = random_tensor(&[3, 2, 3, 3], &mut r);
        let bias = random_tensor(&[3], &mut r);
        let out = ops::conv2d(&input, &weights, &bias, padding).unwrap();
        let lw = random_tensor(out.shape(), &mut r);
        let grads = ops::conv2d_backward(&input, &weights, padding, &lw).unwrap();

        let ni = ops::numeric_gradient(
            |x| weighted_sum(&ops::conv2d(x, &weights, &bias, padding).unwrap(), &lw),
            &input,
            H,
        );
        let nw = ops::numeric_gradient(
            |w| weighted_sum(&ops::conv2d(&input, w, &bias, padding).unwrap(), &lw),
            &weights,
            H,
        );
        let nb = ops::numeric_gradient(
            |b| weighted_sum(&ops::conv2d(&input, &weights, b, padding).unwrap(), &lw),
            &bias,
            H,
        );
        assert!(ops::max_rel_error(&grads.input_grad, &ni) < TOL);
        assert!(ops::max_rel_error(&grads.weight_grad, &nw) < TOL);
        assert!(ops::max_rel_error(&grads.bias_grad, &nb) < TOL);
    }
}

#[test]
fn conv3d_gradients_match_finite_differences() {
    let mut r = rng(101);
    for &(padding, stride) in &[(Padding::Same, 1), (Padding::Same, 2), (Padding::Valid, 1)] {
        let input = random_tensor(&[2, 4, 4, 4], &mut r);
        let weights = random_tensor(&[2, 2, 3, 3, 3], &mut r);
        let bias = random_tensor(&[2], &mut r);
        let out = ops::conv3d(&input, &weights, &bias, padding, stride).unwrap();
        let lw = random_tensor(out.shape(), &mut r);
        let grads = ops::conv3d_backward(&input, &weights, padding, stride, &lw).unwrap();

        let ni = ops::numeric_gradient(
            |x| weighted_sum(&ops::conv3d(x, &weights, &bias, padding, stride).unwrap(), &lw),
            &input,
            H,
        );
        let nw = ops::numeric_gradient(
            |w| weighted_sum(&ops::conv3d(&input, w, &bias, padding, stride).unwrap(), &lw),
            &weights,
            H,
        );
        let nb = ops::numeric_gradient(
            |b| weighted_sum(&ops::conv3d(&input, &weights, b, padding, stride).unwrap(), &lw),
            &bias,
            H,
        );
        assert!(ops::max_rel_error(&grads.input_grad, &ni) < TOL, "stride {}", stride);
        assert!(ops::max_rel_error(&grads.weight_grad, &nw) < TOL, "stride {}", stride);
        assert!(ops::max_rel_error(&grads.bias_grad, &nb) < TOL, "stride {}", stride);
    }
}

#[test]
fn maxpool_gradient_matches_finite_differences() {
    let mut r = rng(102);
    let input = random_tensor(&[2, 6, 6], &mut r);
    let out = ops::maxpool2d(&input).unwrap();
    let lw = random_tensor(out.shape(), &mut r);
    let analytic = ops::maxpool2d_backward(&input, &lw).unwrap();
    let numeric = ops::numeric_gradient(
        |x| weighted_sum(&ops::maxpool2d(x).unwrap(), &lw),
        &input,
        H,
    );
    assert!(ops::max_rel_error(&analytic, &numeric) < TOL);
}

#[test]
fn dense_gradients_match_finite_differences() {
    let mut r = rng(103);
    let input = random_tensor(&[10], &mut r);
    let weights = random_tensor(&[6, 10], &mut r);
    let bias = random_tensor(&[6], &mut r);
    let lw = random_tensor(&[6], &mut r);
    let grads = ops::dense_backward(&input, &weights, &lw).unwrap();

    let ni = ops::numeric_gradient(
        |x| weighted_sum(&ops::dense(x, &weights, &bias).unwrap(), &lw),
        &input,
        H,
    );
    let nw = ops::numeric_gradient(
        |w| weighted_sum(&ops::dense(&input, w, &bias).unwrap(), &lw),
        &weights,
        H,
    );
    let nb = ops::numeric_gradient(
        |b| weighted_sum(&ops::dense(&input, &weights, b).unwrap(), &lw),
        &bias,
        H,
    );
    assert!(ops::max_rel_error(&grads.input_grad, &ni) < TOL);
    assert!(ops::max_rel_error(&grads.weight_grad, &nw) < TOL);
    assert!(ops::max_rel_error(&grads.bias_grad, &nb) < TOL);
}

#[test]
fn activation_gradients_match_finite_differences() {
    let mut r = rng(104);
    for &kind in &[
        Activation::Relu,
        Activation::LeakyRelu(0.01),
        Activation::LeakyRelu(0.3),
        Activation::Sigmoid,
    ] {
        // keep inputs away from the relu kink so finite differences are valid
        let mut input = random_tensor(&[32], &mut r);
        for v in input.data_mut() {
            if v.abs() < 0.01 {
                *v += 0.05;
            }
        }
        let lw = random_tensor(&[32], &mut r);
        let analytic = ops::activation_backward(&input, kind, &lw);
        let numeric = ops::numeric_gradient(
            |x| weighted_sum(&ops::activation(x, kind), &lw),
            &input,
            H,
        );
        assert!(ops::max_rel_error(&analytic, &numeric) < TOL, "{:?}", kind);
    }
}

#[test]
fn bce_gradient_matches_finite_differences() {
    let mut r = rng(105);
    let mut pred = random_unit_tensor(&[40], &mut r);
    for v in pred.data_mut() {
        *v = v.clamp(0.05, 0.95);
    }
    let target = random_unit_tensor(&[40], &mut r);
    let analytic = ops::bce_loss_backward(&pred, &target).unwrap();
    let numeric = ops::numeric_gradient(
        |p| ops::bce_loss(p, &target).unwrap(),
        &pred,
        H,
    );
    assert!(ops::max_rel_error(&analytic, &numeric) < TOL);
}

#[test]
fn upsample_gradient_matches_finite_differences() {
    let mut r = rng(106);
    let input = random_tensor(&[2, 2, 2, 2], &mut r);
    let out = ops::upsample3d(&input).unwrap();
    let lw = random_tensor(out.shape(), &mut r);
    let analytic = ops::upsample3d_backward(input.shape(), &lw).unwrap();
    let numeric = ops::numeric_gradient(
        |x| weighted_sum(&ops::upsample3d(x).unwrap(), &lw),
        &input,
        H,
    );
    assert!(ops::max_rel_error(&analytic, &numeric) < TOL);
}

/// Whole-model check: loss(params) = bce(forward(params, inputs), target),
/// perturbing every parameter tensor coordinate by coordinate.
///
/// The step is larger than in the layer checks: through the full net many
/// gradients sit below 1e-8, where h=1e-4 central differences are dominated
/// by f64 cancellation noise. h=4e-4 stays below the relu kink scale here
/// while cutting that noise fourfold.
const MODEL_H: f64 = 4e-4;

fn check_full_model(variant: Variant, seed: u64) {
    let config = ArchConfig::tiny();
    let params = model::init_model(&config, variant, seed).unwrap();
    let mut r = rng(seed ^ 0xf00d);
    let image = random_unit_tensor(&[3, config.image_size, config.image_size], &mut r);
    let target = random_unit_tensor(&[1, config.voxel_dim, config.voxel_dim, config.voxel_dim], &mut r);
    let prior_values = random_unit_tensor(
        &[config.voxel_dim, config.voxel_dim, config.voxel_dim],
        &mut r,
    );
    let prior = VoxelGrid::from_tensor(&prior_values).unwrap();
    let prior_ref = match variant {
        Variant::PriorRefinement => Some(&prior),
        Variant::ImageOnly => None,
    };

    let (pred, cache) = model::forward_cached(&params, &image, prior_ref).unwrap();
    let grad_pred = ops::bce_loss_backward(&pred, &target).unwrap();
    let analytic = model::backward(&params, &cache, &grad_pred).unwrap();

    let names: Vec<String> = params.named_tensors().iter().map(|(n, _)| n.clone()).collect();
    for (idx, name) in names.iter().enumerate() {
        let base = params.named_tensors()[idx].1.clone();
        let numeric = ops::numeric_gradient(
            |t| {
                let mut p = params.clone();
                *p.tensors_mut()[idx] = t.clone();
                let (pred, _) = model::forward_cached(&p, &image, prior_ref).unwrap();
                ops::bce_loss(&pred, &target).unwrap()
            },
            &base,
            MODEL_H,
        );
        let a = analytic.named_tensors()[idx].1.clone();
        let err = ops::max_rel_error(&a, &numeric);
        assert!(err < TOL, "{} rel error {}", name, err);
    }
}

#[test]
fn full_model_prior_refinement_gradients() {
    check_full_model(Variant::PriorRefinement, 6);
}

#[test]
fn full_model_image_only_gradients() {
    check_full_model(Variant::ImageOnly, 6);
}
