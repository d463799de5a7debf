//! gradcheck: finite-difference verification of every backward pass, run
//! per layer op and through the full model at the tiny configuration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CmdResult;
use crate::rundir::RunDir;
use crate::{Failure, EXIT_CHECK_FAILED};
use voxelprior::data::VoxelGrid;
use voxelprior::model::{self, ArchConfig, Variant};
use voxelprior::ops::{self, Activation, Padding};
use voxelprior::Tensor;

const LAYER_H: f64 = 1e-4;
// through the full net many gradients sit below 1e-8, where h=1e-4 central
// differences drown in f64 cancellation noise; 4e-4 stays below the relu
// kink scale at the tiny configuration
const MODEL_H: f64 = 4e-4;

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn random_unit_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn weighted_sum(out: &Tensor, weights: &Tensor) -> f64 {
    out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

fn layer_checks() -> Result<f64, Failure> {
    let mut worst: f64 = 0.0;
    let mut note = |err: f64| worst = worst.max(err);
    let mut r = ChaCha8Rng::seed_from_u64(2024);

    // conv2d
    let input = random_tensor(&[2, 5, 5], &mut r);
    let weights = random_tensor(&[3, 2, 3, 3], &mut r);
    let bias = random_tensor(&[3], &mut r);
    let out = ops::conv2d(&input, &weights, &bias, Padding::Same)?;
    let lw = random_tensor(out.shape(), &mut r);
    let grads = ops::conv2d_backward(&input, &weights, Padding::Same, &lw)?;
    note(ops::max_rel_error(
        &grads.input_grad,
        &ops::numeric_gradient(
            |x| weighted_sum(&ops::conv2d(x, &weights, &bias, Padding::Same).unwrap(), &lw),
            &input,
            LAYER_H,
        ),
    ));
    note(ops::max_rel_error(
        &grads.weight_grad,
        &ops::numeric_gradient(
            |w| weighted_sum(&ops::conv2d(&input, w, &bias, Padding::Same).unwrap(), &lw),
            &weights,
            LAYER_H,
        ),
    ));

    // conv3d, stride 2
    let input = random_tensor(&[2, 4, 4, 4], &mut r);
    let weights = random_tensor(&[2, 2, 3, 3, 3], &mut r);
    let bias = random_tensor(&[2], &mut r);
    let out = ops::conv3d(&input, &weights, &bias, Padding::Same, 2)?;
    let lw = random_tensor(out.shape(), &mut r);
    let grads = ops::conv3d_backward(&input, &weights, Padding::Same, 2, &lw)?;
    note(ops::max_rel_error(
        &grads.input_grad,
        &ops::numeric_gradient(
            |x| weighted_sum(&ops::conv3d(x, &weights, &bias, Padding::Same, 2).unwrap(), &lw),
            &input,
            LAYER_H,
        ),
    ));
    note(ops::max_rel_error(
        &grads.weight_grad,
        &ops::numeric_gradient(
            |w| weighted_sum(&ops::conv3d(&input, w, &bias, Padding::Same, 2).unwrap(), &lw),
            &weights,
            LAYER_H,
        ),
    ));

    // maxpool
    let input = random_tensor(&[2, 6, 6], &mut r);
    let out = ops::maxpool2d(&input)?;
    let lw = random_tensor(out.shape(), &mut r);
    note(ops::max_rel_error(
        &ops::maxpool2d_backward(&input, &lw)?,
        &ops::numeric_gradient(|x| weighted_sum(&ops::maxpool2d(x).unwrap(), &lw), &input, LAYER_H),
    ));

    // dense
    let input = random_tensor(&[10], &mut r);
    let weights = random_tensor(&[6, 10], &mut r);
    let bias = random_tensor(&[6], &mut r);
    let lw = random_tensor(&[6], &mut r);
    let grads = ops::dense_backward(&input, &weights, &lw)?;
    note(ops::max_rel_error(
        &grads.weight_grad,
        &ops::numeric_gradient(
            |w| weighted_sum(&ops::dense(&input, w, &bias).unwrap(), &lw),
            &weights,
            LAYER_H,
        ),
    ));

    // activations, nudged off the kink
    for kind in [Activation::Relu, Activation::LeakyRelu(0.3), Activation::Sigmoid] {
        let mut input = random_tensor(&[32], &mut r);
        for v in input.data_mut() {
            if v.abs() < 0.01 {
                *v += 0.05;
            }
        }
        let lw = random_tensor(&[32], &mut r);
        note(ops::max_rel_error(
            &ops::activation_backward(&input, kind, &lw),
            &ops::numeric_gradient(|x| weighted_sum(&ops::activation(x, kind), &lw), &input, LAYER_H),
        ));
    }

    // bce
    let mut pred = random_unit_tensor(&[40], &mut r);
    for v in pred.data_mut() {
        *v = v.clamp(0.05, 0.95);
    }
    let target = random_unit_tensor(&[40], &mut r);
    note(ops::max_rel_error(
        &ops::bce_loss_backward(&pred, &target)?,
        &ops::numeric_gradient(|p| ops::bce_loss(p, &target).unwrap(), &pred, LAYER_H),
    ));

    // upsample
    let input = random_tensor(&[2, 2, 2, 2], &mut r);
    let out = ops::upsample3d(&input)?;
    let lw = random_tensor(out.shape(), &mut r);
    note(ops::max_rel_error(
        &ops::upsample3d_backward(input.shape(), &lw)?,
        &ops::numeric_gradient(|x| weighted_sum(&ops::upsample3d(x).unwrap(), &lw), &input, LAYER_H),
    ));

    Ok(worst)
}

fn full_model_check(variant: Variant, seed: u64) -> Result<f64, Failure> {
    let config = ArchConfig::tiny();
    let params = model::init_model(&config, variant, seed)?;
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xf00d);
    let d = config.voxel_dim;
    let image = random_unit_tensor(&[3, config.image_size, config.image_size], &mut r);
    let target = random_unit_tensor(&[1, d, d, d], &mut r);
    let prior = VoxelGrid::from_tensor(&random_unit_tensor(&[d, d, d], &mut r))?;
    let prior_ref = match variant {
        Variant::PriorRefinement => Some(&prior),
        Variant::ImageOnly => None,
    };

    let (pred, cache) = model::forward_cached(&params, &image, prior_ref)?;
    let grad_pred = ops::bce_loss_backward(&pred, &target)?;
    let analytic = model::backward(&params, &cache, &grad_pred)?;

    let mut worst: f64 = 0.0;
    let n_tensors = params.named_tensors().len();
    for idx in 0..n_tensors {
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
        worst = worst.max(ops::max_rel_error(&a, &numeric));
    }
    Ok(worst)
}

pub fn run(run_dir: &RunDir, tol: f64) -> CmdResult {
    let layers = layer_checks()?;
    println!("layer ops max rel error: {:.3e}", layers);
    let prior = full_model_check(Variant::PriorRefinement, 6)?;
    println!("full model (prior refinement) max rel error: {:.3e}", prior);
    let image = full_model_check(Variant::ImageOnly, 6)?;
    println!("full model (image only) max rel error: {:.3e}", image);

    let max = layers.max(prior).max(image);
    println!("max relative error: {:.3e}", max);
    run_dir.write_text(
        "gradcheck.txt",
        &format!(
            "layers {:.6e}\nfull_prior {:.6e}\nfull_image {:.6e}\nmax {:.6e}\ntol {:.1e}\n",
            layers, prior, image, max, tol
        ),
    )?;
    if max >= tol {
        return Err(Failure {
            code: EXIT_CHECK_FAILED,
            kind: "check-failed",
            message: format!("max relative error {:.3e} exceeds tolerance {:.1e}", max, tol),
        });
    }
    Ok(vec!["gradcheck.txt".to_string()])
}
