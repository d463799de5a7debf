//! Dual-input refinement network: image encoder and shape-prior encoder
//! feeding a summed embedding into a voxel generator, plus the image-only
//! baseline that drops the shape path.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::VoxelGrid;
use crate::error::{Error, Result};
use crate::ops::{self, Activation, Padding};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    PriorRefinement,
    ImageOnly,
}

/// Architecture hyperparameters. Channel schedules drive the layer counts:
/// one conv+pool stage per image channel entry, one stride-2 conv per shape
/// channel entry, and `gen_channels.len()-1` upsample stages in the
/// generator (the first entry is the coarse grid's channel count).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub image_size: usize,
    pub voxel_dim: usize,
    pub embed_dim: usize,
    pub image_channels: Vec<usize>,
    pub shape_channels: Vec<usize>,
    pub gen_channels: Vec<usize>,
    pub image_alpha: f64,
    pub shape_alpha: f64,
}

impl ArchConfig {
    pub fn desk() -> Self {
        Self {
            image_size: 64,
            voxel_dim: 16,
            embed_dim: 64,
            image_channels: vec![16, 32, 64, 96],
            shape_channels: vec![16, 32],
            gen_channels: vec![64, 32, 16],
            image_alpha: 0.01,
            shape_alpha: 0.3,
        }
    }

    /// Full-scale preset. Image size is 128 rather than 127 so the pooling
    /// stages divide evenly.
    pub fn paper() -> Self {
        Self {
            image_size: 128,
            voxel_dim: 32,
            embed_dim: 128,
            image_channels: vec![96, 128, 256, 256],
            shape_channels: vec![32, 64],
            gen_channels: vec![128, 64, 32],
            image_alpha: 0.01,
            shape_alpha: 0.3,
        }
    }

    /// Minimal configuration for finite-difference gradient checks.
    pub fn tiny() -> Self {
        Self {
            image_size: 8,
            voxel_dim: 4,
            embed_dim: 8,
            image_channels: vec![8, 16],
            shape_channels: vec![8],
            gen_channels: vec![8, 8],
            image_alpha: 0.01,
            shape_alpha: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::InvalidConfig("embed_dim must be positive".into()));
        }
        if self.image_channels.is_empty() || self.shape_channels.is_empty() {
            return Err(Error::InvalidConfig("encoder channel schedules must be nonempty".into()));
        }
        if self.gen_channels.len() < 2 {
            return Err(Error::InvalidConfig(
                "gen_channels needs a coarse entry plus at least one upsample stage".into(),
            ));
        }
        let pool_div = 1usize << self.image_channels.len();
        if self.image_size % pool_div != 0 {
            return Err(Error::InvalidConfig(format!(
                "image_size {} not divisible by 2^{} pooling stages",
                self.image_size,
                self.image_channels.len()
            )));
        }
        let shape_div = 1usize << self.shape_channels.len();
        if self.voxel_dim % shape_div != 0 {
            return Err(Error::InvalidConfig(format!(
                "voxel_dim {} not divisible by 2^{} strided conv stages",
                self.voxel_dim,
                self.shape_channels.len()
            )));
        }
        let up_div = 1usize << (self.gen_channels.len() - 1);
        if self.voxel_dim % up_div != 0 || self.voxel_dim / up_div == 0 {
            return Err(Error::InvalidConfig(format!(
                "voxel_dim {} not divisible by 2^{} upsample stages",
                self.voxel_dim,
                self.gen_channels.len() - 1
            )));
        }
        Ok(())
    }

    fn image_flat_len(&self) -> usize {
        let s = self.image_size >> self.image_channels.len();
        self.image_channels.last().unwrap() * s * s
    }

    fn shape_flat_len(&self) -> usize {
        let d = self.voxel_dim >> self.shape_channels.len();
        self.shape_channels.last().unwrap() * d * d * d
    }

    /// Coarse generator grid extent d (before upsampling).
    pub fn coarse_dim(&self) -> usize {
        self.voxel_dim >> (self.gen_channels.len() - 1)
    }
}

/// One weight/bias pair (conv or dense).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeEncoderParams {
    pub convs: Vec<LayerParams>,
    pub fc1: LayerParams,
    pub fc2: LayerParams,
}

/// Complete weight set of one network variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ArchConfig,
    pub variant: Variant,
    pub image_convs: Vec<LayerParams>,
    pub image_fc: LayerParams,
    pub shape_enc: Option<ShapeEncoderParams>,
    pub gen_fc: LayerParams,
    pub gen_convs: Vec<LayerParams>,
    pub gen_out: LayerParams,
}

const IMAGE_FIRST_KERNEL: usize = 7;
const IMAGE_KERNEL: usize = 3;
const SHAPE_KERNEL: usize = 3;
const GEN_KERNEL: usize = 3;

fn glorot(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

fn conv2d_layer(c_in: usize, c_out: usize, k: usize, rng: &mut ChaCha8Rng) -> LayerParams {
    LayerParams {
        weight: glorot(vec![c_out, c_in, k, k], c_in * k * k, c_out * k * k, rng),
        bias: Tensor::zeros(&[c_out]),
    }
}

fn conv3d_layer(c_in: usize, c_out: usize, k: usize, rng: &mut ChaCha8Rng) -> LayerParams {
    LayerParams {
        weight: glorot(
            vec![c_out, c_in, k, k, k],
            c_in * k * k * k,
            c_out * k * k * k,
            rng,
        ),
        bias: Tensor::zeros(&[c_out]),
    }
}

fn dense_layer(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> LayerParams {
    LayerParams {
        weight: glorot(vec![n_out, n_in], n_in, n_out, rng),
        bias: Tensor::zeros(&[n_out]),
    }
}

/// Glorot-uniform weights, zero biases, deterministic per seed.
pub fn init_model(config: &ArchConfig, variant: Variant, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut image_convs = Vec::new();
    let mut c_prev = 3;
    for (i, &c) in config.image_channels.iter().enumerate() {
        let k = if i == 0 { IMAGE_FIRST_KERNEL } else { IMAGE_KERNEL };
        image_convs.push(conv2d_layer(c_prev, c, k, &mut rng));
        c_prev = c;
    }
    let image_fc = dense_layer(config.image_flat_len(), config.embed_dim, &mut rng);

    let shape_enc = if variant == Variant::PriorRefinement {
        let mut convs = Vec::new();
        let mut c_prev = 1;
        for &c in &config.shape_channels {
            convs.push(conv3d_layer(c_prev, c, SHAPE_KERNEL, &mut rng));
            c_prev = c;
        }
        let fc1 = dense_layer(config.shape_flat_len(), config.embed_dim, &mut rng);
        let fc2 = dense_layer(config.embed_dim, config.embed_dim, &mut rng);
        Some(ShapeEncoderParams { convs, fc1, fc2 })
    } else {
        None
    };

    let d = config.coarse_dim();
    let c0 = config.gen_channels[0];
    let gen_fc = dense_layer(config.embed_dim, c0 * d * d * d, &mut rng);
    let mut gen_convs = Vec::new();
    let mut c_prev = c0;
    for &c in &config.gen_channels[1..] {
        gen_convs.push(conv3d_layer(c_prev, c, GEN_KERNEL, &mut rng));
        c_prev = c;
    }
    let gen_out = conv3d_layer(c_prev, 1, GEN_KERNEL, &mut rng);

    Ok(ModelParams {
        config: config.clone(),
        variant,
        image_convs,
        image_fc,
        shape_enc,
        gen_fc,
        gen_convs,
        gen_out,
    })
}

impl ModelParams {
    /// Fixed-order named view of every parameter tensor.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.image_convs.iter().enumerate() {
            out.push((format!("image.conv{}.w", i), &l.weight));
            out.push((format!("image.conv{}.b", i), &l.bias));
        }
        out.push(("image.fc.w".to_string(), &self.image_fc.weight));
        out.push(("image.fc.b".to_string(), &self.image_fc.bias));
        if let Some(se) = &self.shape_enc {
            for (i, l) in se.convs.iter().enumerate() {
                out.push((format!("shape.conv{}.w", i), &l.weight));
                out.push((format!("shape.conv{}.b", i), &l.bias));
            }
            out.push(("shape.fc1.w".to_string(), &se.fc1.weight));
            out.push(("shape.fc1.b".to_string(), &se.fc1.bias));
            out.push(("shape.fc2.w".to_string(), &se.fc2.weight));
            out.push(("shape.fc2.b".to_string(), &se.fc2.bias));
        }
        out.push(("gen.fc.w".to_string(), &self.gen_fc.weight));
        out.push(("gen.fc.b".to_string(), &self.gen_fc.bias));
        for (i, l) in self.gen_convs.iter().enumerate() {
            out.push((format!("gen.conv{}.w", i), &l.weight));
            out.push((format!("gen.conv{}.b", i), &l.bias));
        }
        out.push(("gen.out.w".to_string(), &self.gen_out.weight));
        out.push(("gen.out.b".to_string(), &self.gen_out.bias));
        out
    }

    /// Same order as [`named_tensors`], mutable.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for l in &mut self.image_convs {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.image_fc.weight);
        out.push(&mut self.image_fc.bias);
        if let Some(se) = &mut self.shape_enc {
            for l in &mut se.convs {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
            out.push(&mut se.fc1.weight);
            out.push(&mut se.fc1.bias);
            out.push(&mut se.fc2.weight);
            out.push(&mut se.fc2.bias);
        }
        out.push(&mut self.gen_fc.weight);
        out.push(&mut self.gen_fc.bias);
        for l in &mut self.gen_convs {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.gen_out.weight);
        out.push(&mut self.gen_out.bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Same structure, every tensor zeroed. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> ModelParams {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &ModelParams, factor: f64) {
        let theirs = other.named_tensors();
        for (mine, (_, t)) in self.tensors_mut().into_iter().zip(theirs) {
            for (a, b) in mine.data_mut().iter_mut().zip(t.data()) {
                *a += factor * b;
            }
        }
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        let s = self.config.image_size;
        if image.shape() != [3, s, s] {
            return Err(Error::ShapeMismatch {
                op: "encode_image",
                detail: format!("image shape {:?}, expected [3, {}, {}]", image.shape(), s, s),
            });
        }
        Ok(())
    }

    fn shape_enc_ref(&self) -> Result<&ShapeEncoderParams> {
        self.shape_enc.as_ref().ok_or(Error::InvalidArgument {
            op: "encode_shape",
            detail: "model variant is image_only and has no shape encoder".into(),
        })
    }
}

// ---------------------------------------------------------------------------
// forward passes with caches for backprop

#[derive(Debug, Clone)]
struct ImageCache {
    conv_inputs: Vec<Tensor>,
    conv_outputs: Vec<Tensor>,
    pooled: Vec<Tensor>,
    flat: Tensor,
}

#[derive(Debug, Clone)]
struct ShapeCache {
    conv_inputs: Vec<Tensor>,
    conv_outputs: Vec<Tensor>,
    flat: Tensor,
    fc1_pre: Tensor,
    fc1_act: Tensor,
}

#[derive(Debug, Clone)]
struct GenCache {
    embedding: Tensor,
    coarse: Tensor,
    upsampled: Vec<Tensor>,
    conv_outputs: Vec<Tensor>,
    out_pre: Tensor,
}

/// Activation tape for one full forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    image: ImageCache,
    shape: Option<ShapeCache>,
    gen: GenCache,
}

fn image_forward(params: &ModelParams, image: &Tensor) -> Result<(Tensor, ImageCache)> {
    let alpha = params.config.image_alpha;
    let mut x = image.clone();
    let mut conv_inputs = Vec::new();
    let mut conv_outputs = Vec::new();
    let mut pooled = Vec::new();
    for layer in &params.image_convs {
        conv_inputs.push(x.clone());
        let c = ops::conv2d(&x, &layer.weight, &layer.bias, Padding::Same)?;
        let p = ops::maxpool2d(&c)?;
        x = ops::activation(&p, Activation::LeakyRelu(alpha));
        conv_outputs.push(c);
        pooled.push(p);
    }
    let flat = x.reshape(vec![params.config.image_flat_len()])?;
    let e = ops::dense(&flat, &params.image_fc.weight, &params.image_fc.bias)?;
    Ok((
        e,
        ImageCache {
            conv_inputs,
            conv_outputs,
            pooled,
            flat,
        },
    ))
}

fn image_backward(
    params: &ModelParams,
    cache: &ImageCache,
    grad_e: &Tensor,
    grads: &mut ModelParams,
) -> Result<()> {
    let alpha = params.config.image_alpha;
    let lg = ops::dense_backward(&cache.flat, &params.image_fc.weight, grad_e)?;
    grads.image_fc.weight.add_assign(&lg.weight_grad);
    grads.image_fc.bias.add_assign(&lg.bias_grad);
    let last_shape = {
        let n = params.image_convs.len();
        let s = params.config.image_size >> n;
        vec![params.config.image_channels[n - 1], s, s]
    };
    let mut g = lg.input_grad.reshape(last_shape)?;
    for i in (0..params.image_convs.len()).rev() {
        g = ops::activation_backward(&cache.pooled[i], Activation::LeakyRelu(alpha), &g);
        g = ops::maxpool2d_backward(&cache.conv_outputs[i], &g)?;
        let lg = ops::conv2d_backward(
            &cache.conv_inputs[i],
            &params.image_convs[i].weight,
            Padding::Same,
            &g,
        )?;
        grads.image_convs[i].weight.add_assign(&lg.weight_grad);
        grads.image_convs[i].bias.add_assign(&lg.bias_grad);
        g = lg.input_grad;
    }
    Ok(())
}

fn shape_forward(params: &ModelParams, prior: &Tensor) -> Result<(Tensor, ShapeCache)> {
    let se = params.shape_enc_ref()?;
    let alpha = params.config.shape_alpha;
    let mut x = prior.clone();
    let mut conv_inputs = Vec::new();
    let mut conv_outputs = Vec::new();
    for layer in &se.convs {
        conv_inputs.push(x.clone());
        let c = ops::conv3d(&x, &layer.weight, &layer.bias, Padding::Same, 2)?;
        x = ops::activation(&c, Activation::LeakyRelu(alpha));
        conv_outputs.push(c);
    }
    let flat = x.reshape(vec![params.config.shape_flat_len()])?;
    let fc1_pre = ops::dense(&flat, &se.fc1.weight, &se.fc1.bias)?;
    let fc1_act = ops::activation(&fc1_pre, Activation::LeakyRelu(alpha));
    let e = ops::dense(&fc1_act, &se.fc2.weight, &se.fc2.bias)?;
    Ok((
        e,
        ShapeCache {
            conv_inputs,
            conv_outputs,
            flat,
            fc1_pre,
            fc1_act,
        },
    ))
}

fn shape_backward(
    params: &ModelParams,
    cache: &ShapeCache,
    grad_e: &Tensor,
    grads: &mut ModelParams,
) -> Result<()> {
    let se = params.shape_enc_ref()?;
    let gse = grads.shape_enc.as_mut().expect("grads mirror params");
    let alpha = params.config.shape_alpha;

    let lg2 = ops::dense_backward(&cache.fc1_act, &se.fc2.weight, grad_e)?;
    gse.fc2.weight.add_assign(&lg2.weight_grad);
    gse.fc2.bias.add_assign(&lg2.bias_grad);
    let g = ops::activation_backward(&cache.fc1_pre, Activation::LeakyRelu(alpha), &lg2.input_grad);
    let lg1 = ops::dense_backward(&cache.flat, &se.fc1.weight, &g)?;
    gse.fc1.weight.add_assign(&lg1.weight_grad);
    gse.fc1.bias.add_assign(&lg1.bias_grad);

    let n = se.convs.len();
    let d = params.config.voxel_dim >> n;
    let mut g = lg1
        .input_grad
        .reshape(vec![params.config.shape_channels[n - 1], d, d, d])?;
    for i in (0..n).rev() {
        g = ops::activation_backward(&cache.conv_outputs[i], Activation::LeakyRelu(alpha), &g);
        let lg = ops::conv3d_backward(
            &cache.conv_inputs[i],
            &se.convs[i].weight,
            Padding::Same,
            2,
            &g,
        )?;
        gse.convs[i].weight.add_assign(&lg.weight_grad);
        gse.convs[i].bias.add_assign(&lg.bias_grad);
        g = lg.input_grad;
    }
    Ok(())
}

fn gen_forward(params: &ModelParams, embedding: &Tensor) -> Result<(Tensor, GenCache)> {
    if embedding.shape() != [params.config.embed_dim] {
        return Err(Error::ShapeMismatch {
            op: "decode",
            detail: format!(
                "embedding shape {:?}, expected [{}]",
                embedding.shape(),
                params.config.embed_dim
            ),
        });
    }
    let d = params.config.coarse_dim();
    let c0 = params.config.gen_channels[0];
    let coarse = ops::dense(embedding, &params.gen_fc.weight, &params.gen_fc.bias)?;
    let mut x = coarse.clone().reshape(vec![c0, d, d, d])?;
    let mut upsampled = Vec::new();
    let mut conv_outputs = Vec::new();
    for layer in &params.gen_convs {
        let u = ops::upsample3d(&x)?;
        let c = ops::conv3d(&u, &layer.weight, &layer.bias, Padding::Same, 1)?;
        x = ops::activation(&c, Activation::Relu);
        upsampled.push(u);
        conv_outputs.push(c);
    }
    let out_pre = ops::conv3d(&x, &params.gen_out.weight, &params.gen_out.bias, Padding::Same, 1)?;
    let pred = ops::activation(&out_pre, Activation::Sigmoid);
    Ok((
        pred,
        GenCache {
            embedding: embedding.clone(),
            coarse,
            upsampled,
            conv_outputs,
            out_pre,
        },
    ))
}

/// Backward through the generator; returns the gradient w.r.t. the embedding.
fn gen_backward(
    params: &ModelParams,
    cache: &GenCache,
    grad_pred: &Tensor,
    grads: &mut ModelParams,
) -> Result<Tensor> {
    let n = params.gen_convs.len();
    let mut g = ops::activation_backward(&cache.out_pre, Activation::Sigmoid, grad_pred);
    let last_in = if n > 0 {
        ops::activation(&cache.conv_outputs[n - 1], Activation::Relu)
    } else {
        let d = params.config.coarse_dim();
        cache
            .coarse
            .clone()
            .reshape(vec![params.config.gen_channels[0], d, d, d])?
    };
    let lg = ops::conv3d_backward(&last_in, &params.gen_out.weight, Padding::Same, 1, &g)?;
    grads.gen_out.weight.add_assign(&lg.weight_grad);
    grads.gen_out.bias.add_assign(&lg.bias_grad);
    g = lg.input_grad;

    for i in (0..n).rev() {
        g = ops::activation_backward(&cache.conv_outputs[i], Activation::Relu, &g);
        let lg = ops::conv3d_backward(
            &cache.upsampled[i],
            &params.gen_convs[i].weight,
            Padding::Same,
            1,
            &g,
        )?;
        grads.gen_convs[i].weight.add_assign(&lg.weight_grad);
        grads.gen_convs[i].bias.add_assign(&lg.bias_grad);
        let inner = if i > 0 {
            ops::activation(&cache.conv_outputs[i - 1], Activation::Relu)
        } else {
            let d = params.config.coarse_dim();
            cache
                .coarse
                .clone()
                .reshape(vec![params.config.gen_channels[0], d, d, d])?
        };
        g = ops::upsample3d_backward(inner.shape(), &lg.input_grad)?;
    }

    let flat = g.reshape(vec![cache.coarse.len()])?;
    let lg = ops::dense_backward(&cache.embedding, &params.gen_fc.weight, &flat)?;
    grads.gen_fc.weight.add_assign(&lg.weight_grad);
    grads.gen_fc.bias.add_assign(&lg.bias_grad);
    Ok(lg.input_grad)
}

// ---------------------------------------------------------------------------
// public surface

pub fn encode_image(params: &ModelParams, image: &Tensor) -> Result<Tensor> {
    params.check_image(image)?;
    image_forward(params, image).map(|(e, _)| e)
}

pub fn encode_shape(params: &ModelParams, prior: &VoxelGrid) -> Result<Tensor> {
    if prior.dim() != params.config.voxel_dim {
        return Err(Error::ShapeMismatch {
            op: "encode_shape",
            detail: format!(
                "prior extent {}, expected {}",
                prior.dim(),
                params.config.voxel_dim
            ),
        });
    }
    shape_forward(params, &prior.to_tensor()).map(|(e, _)| e)
}

/// Elementwise sum of two embeddings.
pub fn fuse(e_img: &Tensor, e_shape: &Tensor) -> Result<Tensor> {
    if e_img.shape() != e_shape.shape() {
        return Err(Error::ShapeMismatch {
            op: "fuse",
            detail: format!("{:?} vs {:?}", e_img.shape(), e_shape.shape()),
        });
    }
    e_img.add(e_shape)
}

pub fn decode(params: &ModelParams, embedding: &Tensor) -> Result<VoxelGrid> {
    let (pred, _) = gen_forward(params, embedding)?;
    VoxelGrid::from_tensor(&pred)
}

/// Full prior-refinement forward pass: decode(fuse(encode_image, encode_shape)).
pub fn forward(params: &ModelParams, image: &Tensor, prior: &VoxelGrid) -> Result<VoxelGrid> {
    let (pred, _) = forward_cached(params, image, Some(prior))?;
    VoxelGrid::from_tensor(&pred)
}

pub fn forward_image_only(params: &ModelParams, image: &Tensor) -> Result<VoxelGrid> {
    if params.variant != Variant::ImageOnly {
        return Err(Error::InvalidArgument {
            op: "forward_image_only",
            detail: "model variant is not image_only".into(),
        });
    }
    let (pred, _) = forward_cached(params, image, None)?;
    VoxelGrid::from_tensor(&pred)
}

/// Forward pass retaining the activation tape. `prior` must be Some exactly
/// when the variant is prior_refinement. The prediction is a [1,D,D,D] tensor.
pub fn forward_cached(
    params: &ModelParams,
    image: &Tensor,
    prior: Option<&VoxelGrid>,
) -> Result<(Tensor, ForwardCache)> {
    params.check_image(image)?;
    match (params.variant, prior.is_some()) {
        (Variant::PriorRefinement, true) | (Variant::ImageOnly, false) => {}
        (Variant::PriorRefinement, false) => {
            return Err(Error::InvalidArgument {
                op: "forward",
                detail: "prior_refinement variant requires a prior input".into(),
            })
        }
        (Variant::ImageOnly, true) => {
            return Err(Error::InvalidArgument {
                op: "forward",
                detail: "image_only variant takes no prior input".into(),
            })
        }
    }
    let (e_img, image_cache) = image_forward(params, image)?;
    let (embedding, shape_cache) = match prior {
        Some(p) => {
            if p.dim() != params.config.voxel_dim {
                return Err(Error::ShapeMismatch {
                    op: "forward",
                    detail: format!("prior extent {}, expected {}", p.dim(), params.config.voxel_dim),
                });
            }
            let (e_shape, sc) = shape_forward(params, &p.to_tensor())?;
            (fuse(&e_img, &e_shape)?, Some(sc))
        }
        None => (e_img, None),
    };
    let (pred, gen_cache) = gen_forward(params, &embedding)?;
    Ok((
        pred,
        ForwardCache {
            image: image_cache,
            shape: shape_cache,
            gen: gen_cache,
        },
    ))
}

/// Backward pass from a gradient w.r.t. the prediction tensor. Returns
/// parameter gradients in a [`ModelParams`]-shaped accumulator.
pub fn backward(params: &ModelParams, cache: &ForwardCache, grad_pred: &Tensor) -> Result<ModelParams> {
    let mut grads = params.zeros_like();
    let grad_embed = gen_backward(params, &cache.gen, grad_pred, &mut grads)?;
    // the fused embedding is a sum, so the gradient flows unchanged to both encoders
    image_backward(params, &cache.image, &grad_embed, &mut grads)?;
    if let Some(sc) = &cache.shape {
        shape_backward(params, sc, &grad_embed, &mut grads)?;
    }
    Ok(grads)
}

// ---------------------------------------------------------------------------
// checkpoint format

const CHECKPOINT_MAGIC: &[u8; 7] = b"VPNMDL1";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ArchConfig,
    variant: Variant,
}

/// Serialize as: magic "VPNMDL1", u32 LE JSON header length, JSON header,
/// then per tensor: u32 name length + name, u32 rank, u32 extents, f64 LE data.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let header = serde_json::to_vec(&CheckpointHeader {
        config: params.config.clone(),
        variant: params.variant,
    })?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for (name, t) in params.named_tensors() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &e in t.shape() {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::format(
                path,
                format!("truncated checkpoint: need {} bytes at offset {}", n, pos),
            ));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 7)? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "bad checkpoint magic"));
    }
    let hlen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let header: CheckpointHeader = serde_json::from_slice(take(&mut pos, hlen)?)?;
    let mut params = init_model(&header.config, header.variant, 0)?;

    let expected: Vec<String> = params.named_tensors().iter().map(|(n, _)| n.clone()).collect();
    let mut loaded: Vec<Tensor> = Vec::with_capacity(expected.len());
    for name in &expected {
        let nlen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let got = String::from_utf8_lossy(take(&mut pos, nlen)?).into_owned();
        if &got != name {
            return Err(Error::format(
                path,
                format!("tensor name mismatch: got {:?}, expected {:?}", got, name),
            ));
        }
        let rank = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let raw = take(&mut pos, n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        loaded.push(Tensor::new(shape, data).map_err(|e| Error::format(path, e.to_string()))?);
    }
    if pos != bytes.len() {
        return Err(Error::format(
            path,
            format!("{} trailing bytes after last tensor", bytes.len() - pos),
        ));
    }
    for (slot, t) in params.tensors_mut().into_iter().zip(loaded) {
        if slot.shape() != t.shape() {
            return Err(Error::format(path, "tensor shape mismatch against config"));
        }
        *slot = t;
    }
    Ok(params)
}
