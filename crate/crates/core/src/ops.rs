//! Dense layer kernels with paired analytic backward passes.
//!
//! All kernels operate on [`Tensor`] in f64 and are pure functions: no
//! internal state, identical inputs give identical outputs.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Padding {
    Same,
    Valid,
}

/// Gradients produced by a layer backward pass.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub input_grad: Tensor,
    pub weight_grad: Tensor,
    pub bias_grad: Tensor,
}

fn shape3(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [a, b, c] => Ok((*a, *b, *c)),
        s => Err(Error::ShapeMismatch {
            op,
            detail: format!("expected rank-3 tensor, got shape {:?}", s),
        }),
    }
}

fn shape4(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize, usize)> {
    match t.shape() {
        [a, b, c, d] => Ok((*a, *b, *c, *d)),
        s => Err(Error::ShapeMismatch {
            op,
            detail: format!("expected rank-4 tensor, got shape {:?}", s),
        }),
    }
}

/// Padding offsets and output extent for one spatial axis.
fn axis_geometry(input: usize, kernel: usize, stride: usize, padding: Padding) -> (usize, usize) {
    match padding {
        Padding::Valid => {
            let out = (input - kernel) / stride + 1;
            (out, 0)
        }
        Padding::Same => {
            let out = input.div_ceil(stride);
            let pad_total = ((out - 1) * stride + kernel).saturating_sub(input);
            (out, pad_total / 2)
        }
    }
}

fn check_kernel_fits(input: usize, kernel: usize, padding: Padding, op: &'static str) -> Result<()> {
    let effective = match padding {
        Padding::Valid => input,
        Padding::Same => input + kernel - 1,
    };
    if kernel == 0 || kernel > effective {
        return Err(Error::InvalidArgument {
            op,
            detail: format!("kernel extent {} does not fit input extent {}", kernel, input),
        });
    }
    Ok(())
}

/// 2D cross-correlation, stride 1. Input [C_in,H,W], weights [C_out,C_in,kH,kW].
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &Tensor, padding: Padding) -> Result<Tensor> {
    let (c_in, h, w) = shape3(input, "conv2d")?;
    let (c_out, wc_in, kh, kw) = shape4(weights, "conv2d")?;
    if wc_in != c_in {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            detail: format!("input has {} channels, weights expect {}", c_in, wc_in),
        });
    }
    if bias.shape() != [c_out] {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            detail: format!("bias shape {:?}, expected [{}]", bias.shape(), c_out),
        });
    }
    check_kernel_fits(h, kh, padding, "conv2d")?;
    check_kernel_fits(w, kw, padding, "conv2d")?;

    let (oh, ph) = axis_geometry(h, kh, 1, padding);
    let (ow, pw) = axis_geometry(w, kw, 1, padding);

    let x = input.data();
    let wt = weights.data();
    let b = bias.data();
    let mut out = vec![0.0; c_out * oh * ow];

    // row-sweep formulation: for each output row, accumulate shifted input
    // rows; per output element the addition order (bias, then ci/ky/kx
    // ascending) matches the naive triple loop, so results are bit-identical
    for co in 0..c_out {
        for oy in 0..oh {
            let orow = (co * oh + oy) * ow;
            out[orow..orow + ow].fill(b[co]);
            for ci in 0..c_in {
                for ky in 0..kh {
                    let iy = oy + ky;
                    if iy < ph || iy - ph >= h {
                        continue;
                    }
                    let iy = iy - ph;
                    let xrow = (ci * h + iy) * w;
                    let wrow = ((co * c_in + ci) * kh + ky) * kw;
                    for kx in 0..kw {
                        let lo = pw.saturating_sub(kx);
                        let hi = (w + pw - kx).min(ow);
                        if lo >= hi {
                            continue;
                        }
                        let wv = wt[wrow + kx];
                        let n = hi - lo;
                        let src = xrow + lo + kx - pw;
                        let xs = &x[src..src + n];
                        let os = &mut out[orow + lo..orow + lo + n];
                        for i in 0..n {
                            os[i] += xs[i] * wv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_out, oh, ow], out)
}

pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    padding: Padding,
    grad_out: &Tensor,
) -> Result<LayerGrad> {
    let (c_in, h, w) = shape3(input, "conv2d_backward")?;
    let (c_out, _, kh, kw) = shape4(weights, "conv2d_backward")?;
    let (oh, ph) = axis_geometry(h, kh, 1, padding);
    let (ow, pw) = axis_geometry(w, kw, 1, padding);
    if grad_out.shape() != [c_out, oh, ow] {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            detail: format!(
                "grad shape {:?}, expected [{}, {}, {}]",
                grad_out.shape(),
                c_out,
                oh,
                ow
            ),
        });
    }

    let x = input.data();
    let wt = weights.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; c_out];

    for co in 0..c_out {
        for oy in 0..oh {
            let orow = (co * oh + oy) * ow;
            for &go in &g[orow..orow + ow] {
                gb[co] += go;
            }
            for ci in 0..c_in {
                for ky in 0..kh {
                    let iy = oy + ky;
                    if iy < ph || iy - ph >= h {
                        continue;
                    }
                    let iy = iy - ph;
                    let xrow = (ci * h + iy) * w;
                    let wrow = ((co * c_in + ci) * kh + ky) * kw;
                    for kx in 0..kw {
                        let lo = pw.saturating_sub(kx);
                        let hi = (w + pw - kx).min(ow);
                        if lo >= hi {
                            continue;
                        }
                        let wv = wt[wrow + kx];
                        let n = hi - lo;
                        let src = xrow + lo + kx - pw;
                        let gs = &g[orow + lo..orow + lo + n];
                        let xs = &x[src..src + n];
                        let gxs = &mut gx[src..src + n];
                        let mut wacc = 0.0;
                        for i in 0..n {
                            gxs[i] += wv * gs[i];
                            wacc += xs[i] * gs[i];
                        }
                        gw[wrow + kx] += wacc;
                    }
                }
            }
        }
    }
    Ok(LayerGrad {
        input_grad: Tensor::new(vec![c_in, h, w], gx)?,
        weight_grad: Tensor::new(vec![c_out, c_in, kh, kw], gw)?,
        bias_grad: Tensor::new(vec![c_out], gb)?,
    })
}

/// Output indices z (of `out` many) where 0 <= z*stride + kk - pad < d.
fn valid_out_range(out: usize, pad: usize, kk: usize, stride: usize, d: usize) -> (usize, usize) {
    let lo = if kk >= pad { 0 } else { (pad - kk).div_ceil(stride) };
    let hi = if d + pad > kk {
        ((d + pad - kk - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi)
}

/// 3D cross-correlation with cubic kernels and a uniform stride.
/// Input [C_in,D1,D2,D3], weights [C_out,C_in,k,k,k].
pub fn conv3d(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    padding: Padding,
    stride: usize,
) -> Result<Tensor> {
    let (c_in, d1, d2, d3) = shape4(input, "conv3d")?;
    let ws = weights.shape();
    if ws.len() != 5 || ws[2] != ws[3] || ws[3] != ws[4] {
        return Err(Error::ShapeMismatch {
            op: "conv3d",
            detail: format!("weights shape {:?}, expected [C_out,C_in,k,k,k]", ws),
        });
    }
    let (c_out, wc_in, k) = (ws[0], ws[1], ws[2]);
    if wc_in != c_in {
        return Err(Error::ShapeMismatch {
            op: "conv3d",
            detail: format!("input has {} channels, weights expect {}", c_in, wc_in),
        });
    }
    if bias.shape() != [c_out] {
        return Err(Error::ShapeMismatch {
            op: "conv3d",
            detail: format!("bias shape {:?}, expected [{}]", bias.shape(), c_out),
        });
    }
    if stride == 0 {
        return Err(Error::InvalidArgument {
            op: "conv3d",
            detail: "stride must be positive".into(),
        });
    }
    for &ext in &[d1, d2, d3] {
        check_kernel_fits(ext, k, padding, "conv3d")?;
    }

    let (o1, p1) = axis_geometry(d1, k, stride, padding);
    let (o2, p2) = axis_geometry(d2, k, stride, padding);
    let (o3, p3) = axis_geometry(d3, k, stride, padding);

    let x = input.data();
    let wt = weights.data();
    let b = bias.data();
    let mut out = vec![0.0; c_out * o1 * o2 * o3];

    // row-sweep along the innermost axis; per output element the addition
    // order (bias, then ci/k1/k2/k3 ascending) matches the naive loop nest,
    // so results are bit-identical to it
    for co in 0..c_out {
        for z1 in 0..o1 {
            for z2 in 0..o2 {
                let orow = ((co * o1 + z1) * o2 + z2) * o3;
                out[orow..orow + o3].fill(b[co]);
                for ci in 0..c_in {
                    for k1 in 0..k {
                        let i1 = z1 * stride + k1;
                        if i1 < p1 || i1 - p1 >= d1 {
                            continue;
                        }
                        let i1 = i1 - p1;
                        for k2 in 0..k {
                            let i2 = z2 * stride + k2;
                            if i2 < p2 || i2 - p2 >= d2 {
                                continue;
                            }
                            let i2 = i2 - p2;
                            let xrow = ((ci * d1 + i1) * d2 + i2) * d3;
                            let wrow = (((co * c_in + ci) * k + k1) * k + k2) * k;
                            for k3 in 0..k {
                                let (lo, hi) = valid_out_range(o3, p3, k3, stride, d3);
                                if lo >= hi {
                                    continue;
                                }
                                let wv = wt[wrow + k3];
                                if stride == 1 {
                                    let n = hi - lo;
                                    let src = xrow + lo + k3 - p3;
                                    let xs = &x[src..src + n];
                                    let os = &mut out[orow + lo..orow + lo + n];
                                    for i in 0..n {
                                        os[i] += xs[i] * wv;
                                    }
                                } else {
                                    for z3 in lo..hi {
                                        out[orow + z3] += x[xrow + z3 * stride + k3 - p3] * wv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_out, o1, o2, o3], out)
}

pub fn conv3d_backward(
    input: &Tensor,
    weights: &Tensor,
    padding: Padding,
    stride: usize,
    grad_out: &Tensor,
) -> Result<LayerGrad> {
    let (c_in, d1, d2, d3) = shape4(input, "conv3d_backward")?;
    let ws = weights.shape().to_vec();
    let (c_out, k) = (ws[0], ws[2]);
    let (o1, p1) = axis_geometry(d1, k, stride, padding);
    let (o2, p2) = axis_geometry(d2, k, stride, padding);
    let (o3, p3) = axis_geometry(d3, k, stride, padding);
    if grad_out.shape() != [c_out, o1, o2, o3] {
        return Err(Error::ShapeMismatch {
            op: "conv3d_backward",
            detail: format!(
                "grad shape {:?}, expected [{}, {}, {}, {}]",
                grad_out.shape(),
                c_out,
                o1,
                o2,
                o3
            ),
        });
    }

    let x = input.data();
    let wt = weights.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; c_out];

    for co in 0..c_out {
        for z1 in 0..o1 {
            for z2 in 0..o2 {
                let orow = ((co * o1 + z1) * o2 + z2) * o3;
                for &go in &g[orow..orow + o3] {
                    gb[co] += go;
                }
                for ci in 0..c_in {
                    for k1 in 0..k {
                        let i1 = z1 * stride + k1;
                        if i1 < p1 || i1 - p1 >= d1 {
                            continue;
                        }
                        let i1 = i1 - p1;
                        for k2 in 0..k {
                            let i2 = z2 * stride + k2;
                            if i2 < p2 || i2 - p2 >= d2 {
                                continue;
                            }
                            let i2 = i2 - p2;
                            let xrow = ((ci * d1 + i1) * d2 + i2) * d3;
                            let wrow = (((co * c_in + ci) * k + k1) * k + k2) * k;
                            for k3 in 0..k {
                                let (lo, hi) = valid_out_range(o3, p3, k3, stride, d3);
                                if lo >= hi {
                                    continue;
                                }
                                let wv = wt[wrow + k3];
                                let mut wacc = 0.0;
                                if stride == 1 {
                                    let n = hi - lo;
                                    let src = xrow + lo + k3 - p3;
                                    let gs = &g[orow + lo..orow + lo + n];
                                    let xs = &x[src..src + n];
                                    let gxs = &mut gx[src..src + n];
                                    for i in 0..n {
                                        gxs[i] += wv * gs[i];
                                        wacc += xs[i] * gs[i];
                                    }
                                } else {
                                    for z3 in lo..hi {
                                        let xi = xrow + z3 * stride + k3 - p3;
                                        let go = g[orow + z3];
                                        gx[xi] += wv * go;
                                        wacc += x[xi] * go;
                                    }
                                }
                                gw[wrow + k3] += wacc;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(LayerGrad {
        input_grad: Tensor::new(vec![c_in, d1, d2, d3], gx)?,
        weight_grad: Tensor::new(ws, gw)?,
        bias_grad: Tensor::new(vec![c_out], gb)?,
    })
}

/// 2x2 max pooling, stride 2. Ties go to the first cell in scan order.
pub fn maxpool2d(input: &Tensor) -> Result<Tensor> {
    let (c, h, w) = shape3(input, "maxpool2d")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidArgument {
            op: "maxpool2d",
            detail: format!("spatial extents must be even, got {}x{}", h, w),
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = vec![0.0; c * oh * ow];
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let v = x[(ci * h + 2 * oy + dy) * w + 2 * ox + dx];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(ci * oh + oy) * ow + ox] = best;
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Routes each window's gradient entirely to its argmax cell.
pub fn maxpool2d_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (c, h, w) = shape3(input, "maxpool2d_backward")?;
    let (oh, ow) = (h / 2, w / 2);
    if grad_out.shape() != [c, oh, ow] {
        return Err(Error::ShapeMismatch {
            op: "maxpool2d_backward",
            detail: format!(
                "grad shape {:?}, expected [{}, {}, {}]",
                grad_out.shape(),
                c,
                oh,
                ow
            ),
        });
    }
    let x = input.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = (ci * h + 2 * oy + dy) * w + 2 * ox + dx;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                gx[best_idx] += g[(ci * oh + oy) * ow + ox];
            }
        }
    }
    Tensor::new(vec![c, h, w], gx)
}

/// Fully connected layer: y = Wx + b with W of shape [M,N].
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let n = input.len();
    let (m, wn) = match weights.shape() {
        [m, wn] => (*m, *wn),
        s => {
            return Err(Error::ShapeMismatch {
                op: "dense",
                detail: format!("weights shape {:?}, expected rank 2", s),
            })
        }
    };
    if wn != n || bias.shape() != [m] {
        return Err(Error::ShapeMismatch {
            op: "dense",
            detail: format!(
                "input len {}, weights [{}, {}], bias {:?}",
                n,
                m,
                wn,
                bias.shape()
            ),
        });
    }
    let x = input.data();
    let w = weights.data();
    let b = bias.data();
    let mut out = vec![0.0; m];
    for row in 0..m {
        let mut acc = b[row];
        let base = row * n;
        for col in 0..n {
            acc += w[base + col] * x[col];
        }
        out[row] = acc;
    }
    Tensor::new(vec![m], out)
}

pub fn dense_backward(input: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<LayerGrad> {
    let n = input.len();
    let m = weights.shape()[0];
    if grad_out.shape() != [m] {
        return Err(Error::ShapeMismatch {
            op: "dense_backward",
            detail: format!("grad shape {:?}, expected [{}]", grad_out.shape(), m),
        });
    }
    let x = input.data();
    let w = weights.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; n];
    let mut gw = vec![0.0; w.len()];
    for row in 0..m {
        let base = row * n;
        let go = g[row];
        for col in 0..n {
            gx[col] += w[base + col] * go;
            gw[base + col] = x[col] * go;
        }
    }
    Ok(LayerGrad {
        input_grad: Tensor::new(vec![n], gx)?,
        weight_grad: Tensor::new(weights.shape().to_vec(), gw)?,
        bias_grad: Tensor::new(vec![m], g.to_vec())?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// Slope `alpha` for negative inputs; derivative at exactly 0 is alpha.
    LeakyRelu(f64),
    Sigmoid,
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    match kind {
        Activation::Relu => input.map(|v| v.max(0.0)),
        Activation::LeakyRelu(alpha) => input.map(|v| if v > 0.0 { v } else { alpha * v }),
        Activation::Sigmoid => input.map(sigmoid),
    }
}

/// Gradient w.r.t. the activation input; `input` is the pre-activation tensor.
pub fn activation_backward(input: &Tensor, kind: Activation, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    match kind {
        Activation::Relu => {
            for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
                if x <= 0.0 {
                    *gv = 0.0;
                }
            }
        }
        Activation::LeakyRelu(alpha) => {
            for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
                if x <= 0.0 {
                    *gv *= alpha;
                }
            }
        }
        Activation::Sigmoid => {
            for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
                let s = sigmoid(x);
                *gv *= s * (1.0 - s);
            }
        }
    }
    g
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy; predictions are clamped to [eps, 1-eps] before the log.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "bce_loss",
            detail: format!("{:?} vs {:?}", pred.shape(), target.shape()),
        });
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        total -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
    }
    Ok(total / n)
}

/// Gradient of [`bce_loss`] w.r.t. predictions. Zero where the clamp is active.
pub fn bce_loss_backward(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "bce_loss_backward",
            detail: format!("{:?} vs {:?}", pred.shape(), target.shape()),
        });
    }
    let n = pred.len() as f64;
    let mut grad = pred.zeros_like();
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        if p > BCE_EPS && p < 1.0 - BCE_EPS {
            *g = (p - t) / (p * (1.0 - p)) / n;
        }
    }
    Ok(grad)
}

/// Nearest-neighbor 2x upsampling along all three spatial axes of [C,D,D,D].
pub fn upsample3d(input: &Tensor) -> Result<Tensor> {
    let (c, d1, d2, d3) = shape4(input, "upsample3d")?;
    let x = input.data();
    let (u1, u2, u3) = (d1 * 2, d2 * 2, d3 * 2);
    let mut out = vec![0.0; c * u1 * u2 * u3];
    for ci in 0..c {
        for z1 in 0..u1 {
            for z2 in 0..u2 {
                for z3 in 0..u3 {
                    out[((ci * u1 + z1) * u2 + z2) * u3 + z3] =
                        x[((ci * d1 + z1 / 2) * d2 + z2 / 2) * d3 + z3 / 2];
                }
            }
        }
    }
    Tensor::new(vec![c, u1, u2, u3], out)
}

/// Sums the gradient of each replicated cell back onto its source voxel.
pub fn upsample3d_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let (c, d1, d2, d3) = match input_shape {
        [a, b, c, d] => (*a, *b, *c, *d),
        s => {
            return Err(Error::ShapeMismatch {
                op: "upsample3d_backward",
                detail: format!("input shape {:?}, expected rank 4", s),
            })
        }
    };
    if grad_out.shape() != [c, d1 * 2, d2 * 2, d3 * 2] {
        return Err(Error::ShapeMismatch {
            op: "upsample3d_backward",
            detail: format!("grad shape {:?} does not match 2x of {:?}", grad_out.shape(), input_shape),
        });
    }
    let g = grad_out.data();
    let (u1, u2, u3) = (d1 * 2, d2 * 2, d3 * 2);
    let mut gx = vec![0.0; c * d1 * d2 * d3];
    for ci in 0..c {
        for z1 in 0..u1 {
            for z2 in 0..u2 {
                for z3 in 0..u3 {
                    gx[((ci * d1 + z1 / 2) * d2 + z2 / 2) * d3 + z3 / 2] +=
                        g[((ci * u1 + z1) * u2 + z2) * u3 + z3];
                }
            }
        }
    }
    Tensor::new(vec![c, d1, d2, d3], gx)
}

/// Central-difference gradient of a scalar function, one coordinate at a time.
pub fn numeric_gradient(f: impl Fn(&Tensor) -> f64, x: &Tensor, h: f64) -> Tensor {
    let mut grad = x.zeros_like();
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Relative error used by gradient checks: |a-n| / max(|a|,|n|,1e-8).
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Max elementwise relative error between two gradient tensors.
pub fn max_rel_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| rel_error(a, n))
        .fold(0.0, f64::max)
}
