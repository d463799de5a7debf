//! Shared test oracles: brute-force reference implementations kept
//! independent of the library's kernel code paths.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxelprior::ops::Padding;
use voxelprior::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn random_unit_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Zero-pad a [C,H,W] tensor explicitly, then correlate with quadruple loops.
pub fn ref_conv2d(input: &Tensor, weights: &Tensor, bias: &Tensor, padding: Padding) -> Tensor {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, kh, kw) = (weights.shape()[0], weights.shape()[2], weights.shape()[3]);
    let (ph, pw) = match padding {
        Padding::Valid => (0, 0),
        Padding::Same => ((kh - 1) / 2, (kw - 1) / 2),
    };
    // build the padded volume up-front so indexing below is unconditional
    let (hp, wp) = (h + kh - 1, w + kw - 1);
    let mut padded = vec![0.0; c_in * hp * wp];
    for c in 0..c_in {
        for y in 0..h {
            for x in 0..w {
                padded[(c * hp + y + ph) * wp + x + pw] = input.data()[(c * h + y) * w + x];
            }
        }
    }
    let (oh, ow) = match padding {
        Padding::Valid => (h - kh + 1, w - kw + 1),
        Padding::Same => (h, w),
    };
    let mut out = vec![0.0; c_out * oh * ow];
    for co in 0..c_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias.data()[co];
                for ci in 0..c_in {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            acc += padded[(ci * hp + oy + ky) * wp + ox + kx]
                                * weights.data()[((co * c_in + ci) * kh + ky) * kw + kx];
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Tensor::new(vec![c_out, oh, ow], out).unwrap()
}

/// Padded-copy reference for 3D correlation with uniform stride.
pub fn ref_conv3d(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    padding: Padding,
    stride: usize,
) -> Tensor {
    let s = input.shape();
    let (c_in, d1, d2, d3) = (s[0], s[1], s[2], s[3]);
    let (c_out, k) = (weights.shape()[0], weights.shape()[2]);
    let out_ext = |ext: usize| match padding {
        Padding::Valid => (ext - k) / stride + 1,
        Padding::Same => ext.div_ceil(stride),
    };
    let pad_before = |ext: usize, out: usize| match padding {
        Padding::Valid => 0usize,
        Padding::Same => ((out - 1) * stride + k).saturating_sub(ext) / 2,
    };
    let (o1, o2, o3) = (out_ext(d1), out_ext(d2), out_ext(d3));
    let (p1, p2, p3) = (pad_before(d1, o1), pad_before(d2, o2), pad_before(d3, o3));
    let (e1, e2, e3) = (d1 + 2 * k, d2 + 2 * k, d3 + 2 * k);
    let mut padded = vec![0.0; c_in * e1 * e2 * e3];
    for c in 0..c_in {
        for a in 0..d1 {
            for b in 0..d2 {
                for cc in 0..d3 {
                    padded[((c * e1 + a + p1) * e2 + b + p2) * e3 + cc + p3] =
                        input.data()[((c * d1 + a) * d2 + b) * d3 + cc];
                }
            }
        }
    }
    let mut out = vec![0.0; c_out * o1 * o2 * o3];
    for co in 0..c_out {
        for z1 in 0..o1 {
            for z2 in 0..o2 {
                for z3 in 0..o3 {
                    let mut acc = bias.data()[co];
                    for ci in 0..c_in {
                        for k1 in 0..k {
                            for k2 in 0..k {
                                for k3 in 0..k {
                                    acc += padded[((ci * e1 + z1 * stride + k1) * e2
                                        + z2 * stride
                                        + k2)
                                        * e3
                                        + z3 * stride
                                        + k3]
                                        * weights.data()
                                            [(((co * c_in + ci) * k + k1) * k + k2) * k + k3];
                                }
                            }
                        }
                    }
                    out[((co * o1 + z1) * o2 + z2) * o3 + z3] = acc;
                }
            }
        }
    }
    Tensor::new(vec![c_out, o1, o2, o3], out).unwrap()
}

/// Scan-all-windows max pooling reference.
pub fn ref_maxpool2d(input: &Tensor) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![f64::NEG_INFINITY; c * oh * ow];
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                let o = (ci * oh + y / 2) * ow + x / 2;
                let v = input.data()[(ci * h + y) * w + x];
                if v > out[o] {
                    out[o] = v;
                }
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out).unwrap()
}

/// Explicit dot-product reference for the dense layer.
pub fn ref_dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Tensor {
    let n = input.len();
    let m = weights.shape()[0];
    let mut out = vec![0.0; m];
    for row in 0..m {
        let mut acc = bias.data()[row];
        for col in 0..n {
            acc += weights.data()[row * n + col] * input.data()[col];
        }
        out[row] = acc;
    }
    Tensor::new(vec![m], out).unwrap()
}

/// Elementwise-sum reference for mean binary cross-entropy.
pub fn ref_bce(pred: &Tensor, target: &Tensor) -> f64 {
    let eps = 1e-7;
    let mut total = 0.0;
    for i in 0..pred.len() {
        let p = pred.data()[i].clamp(eps, 1.0 - eps);
        let t = target.data()[i];
        total += -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
    }
    total / pred.len() as f64
}

/// Brute-force voxel-counting IoU reference on raw value slices.
pub fn ref_iou(pred: &[f64], target: &[f64], threshold: f64) -> f64 {
    let mut inter = 0.0;
    let mut union = 0.0;
    for (&p, &t) in pred.iter().zip(target) {
        let pb = p >= threshold;
        let tb = t > 0.5;
        if pb && tb {
            inter += 1.0;
        }
        if pb || tb {
            union += 1.0;
        }
    }
    if union == 0.0 {
        1.0
    } else {
        inter / union
    }
}
