//! Benchmarks for the hot paths: convolution kernels, a full model forward
//! pass at the desk scale, and one Adadelta update.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voxelprior::data::VoxelGrid;
use voxelprior::model::{self, ArchConfig, Variant};
use voxelprior::ops::{self, Padding};
use voxelprior::training::{adadelta_step, AdadeltaState};
use voxelprior::Tensor;

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn bench_conv2d(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let input = random_tensor(&[16, 32, 32], &mut r);
    let weights = random_tensor(&[32, 16, 3, 3], &mut r);
    let bias = random_tensor(&[32], &mut r);
    c.bench_function("conv2d 16x32x32 -> 32ch 3x3", |b| {
        b.iter(|| ops::conv2d(&input, &weights, &bias, Padding::Same).unwrap())
    });
    let out = ops::conv2d(&input, &weights, &bias, Padding::Same).unwrap();
    let grad = random_tensor(out.shape(), &mut r);
    c.bench_function("conv2d backward", |b| {
        b.iter(|| ops::conv2d_backward(&input, &weights, Padding::Same, &grad).unwrap())
    });
}

fn bench_conv3d(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let input = random_tensor(&[32, 16, 16, 16], &mut r);
    let weights = random_tensor(&[16, 32, 3, 3, 3], &mut r);
    let bias = random_tensor(&[16], &mut r);
    c.bench_function("conv3d 32x16^3 -> 16ch 3^3", |b| {
        b.iter(|| ops::conv3d(&input, &weights, &bias, Padding::Same, 1).unwrap())
    });
    let out = ops::conv3d(&input, &weights, &bias, Padding::Same, 1).unwrap();
    let grad = random_tensor(out.shape(), &mut r);
    c.bench_function("conv3d backward", |b| {
        b.iter(|| ops::conv3d_backward(&input, &weights, Padding::Same, 1, &grad).unwrap())
    });
}

fn bench_model_forward(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let config = ArchConfig::desk();
    let params = model::init_model(&config, Variant::PriorRefinement, 0).unwrap();
    let image = random_tensor(&[3, config.image_size, config.image_size], &mut r);
    let d = config.voxel_dim;
    let prior_values: Vec<f64> = (0..d * d * d).map(|_| r.gen_range(0.0..1.0)).collect();
    let prior = VoxelGrid::new(d, prior_values).unwrap();
    c.bench_function("model forward desk", |b| {
        b.iter(|| model::forward(&params, &image, &prior).unwrap())
    });
}

fn bench_adadelta(c: &mut Criterion) {
    let config = ArchConfig::desk();
    let mut params = model::init_model(&config, Variant::PriorRefinement, 0).unwrap();
    let grads = params.zeros_like();
    let mut state = AdadeltaState::new(&params);
    c.bench_function("adadelta step desk", |b| {
        b.iter(|| adadelta_step(&mut params, &grads, &mut state).unwrap())
    });
}

criterion_group!(benches, bench_conv2d, bench_conv3d, bench_model_forward, bench_adadelta);
criterion_main!(benches);
