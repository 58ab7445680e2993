//! Forward and backward passes of the individual layers.

use super::Tensor;
use crate::{Error, Result};

/// Convolution with odd square kernels, no padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `(out, in, k, k)` row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize, stride: usize) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        assert!(stride >= 1);
        Self {
            out_channels,
            in_channels,
            kernel,
            stride,
            weights: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn output_size(&self, input: usize) -> Option<usize> {
        (input >= self.kernel).then(|| (input - self.kernel) / self.stride + 1)
    }

    #[inline]
    fn w(&self, o: usize, c: usize, ky: usize, kx: usize) -> f64 {
        let k = self.kernel;
        self.weights[((o * self.in_channels + c) * k + ky) * k + kx]
    }
}

/// Valid cross-correlation summed over all input maps, plus bias. No
/// activation.
pub fn conv_forward(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    if c != layer.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "conv expects {} channels, got {c}",
            layer.in_channels
        )));
    }
    let (Some(oh), Some(ow)) = (layer.output_size(h), layer.output_size(w)) else {
        return Err(Error::ShapeMismatch(format!(
            "{h}x{w} input smaller than {0}x{0} kernel",
            layer.kernel
        )));
    };
    let s = layer.stride;
    let x = input.data();
    let mut out = vec![0.0; layer.out_channels * oh * ow];
    for (o, plane) in out.chunks_mut(oh * ow).enumerate() {
        plane.iter_mut().for_each(|v| *v = layer.bias[o]);
        for ci in 0..c {
            let xin = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..layer.kernel {
                for kx in 0..layer.kernel {
                    let wt = layer.w(o, ci, ky, kx);
                    for oy in 0..oh {
                        let row = &xin[(oy * s + ky) * w + kx..];
                        let dst = &mut plane[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            for (d, v) in dst.iter_mut().zip(&row[..ow]) {
                                *d += wt * v;
                            }
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate() {
                                *d += wt * row[ox * s];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![layer.out_channels, oh, ow], out)
}

/// Gradients of a convolution given the upstream gradient. The input
/// gradient is skipped when `want_input` is false.
pub fn conv_backward(
    input: &Tensor,
    layer: &ConvLayer,
    grad_out: &Tensor,
    want_input: bool,
) -> Result<(Vec<f64>, Vec<f64>, Option<Tensor>)> {
    let (c, h, w) = input.chw()?;
    let (oc, oh, ow) = grad_out.chw()?;
    if oc != layer.out_channels || c != layer.in_channels {
        return Err(Error::ShapeMismatch("conv backward channels".into()));
    }
    let s = layer.stride;
    let k = layer.kernel;
    let x = input.data();
    let g = grad_out.data();
    let mut dw = vec![0.0; layer.weights.len()];
    let mut db = vec![0.0; oc];
    let mut dx = want_input.then(|| vec![0.0; x.len()]);
    for o in 0..oc {
        let gp = &g[o * oh * ow..(o + 1) * oh * ow];
        db[o] = gp.iter().sum();
        for ci in 0..c {
            let xin = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((o * c + ci) * k + ky) * k + kx;
                    let wt = layer.weights[widx];
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let base = (oy * s + ky) * w + kx;
                        let grow = &gp[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            acc += grow.iter().zip(&xin[base..base + ow]).map(|(a, b)| a * b).sum::<f64>();
                        } else {
                            for (ox, gv) in grow.iter().enumerate() {
                                acc += gv * xin[base + ox * s];
                            }
                        }
                        if let Some(dx) = dx.as_mut() {
                            let dplane = &mut dx[ci * h * w..(ci + 1) * h * w];
                            for (ox, gv) in grow.iter().enumerate() {
                                dplane[base + ox * s] += wt * gv;
                            }
                        }
                    }
                    dw[widx] = acc;
                }
            }
        }
    }
    let dx = dx.map(|d| Tensor::new(vec![c, h, w], d)).transpose()?;
    Ok((dw, db, dx))
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Routes the gradient through the units whose pre-activation was positive.
pub fn relu_backward(pre: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &z) in g.data_mut().iter_mut().zip(pre.data()) {
        if z <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

/// Per-channel max pooling. Returns the pooled map and, for every output
/// unit, the flat input index of the winning element (first maximum in scan
/// order on ties).
pub fn max_pool(x: &Tensor, window: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    let (c, h, w) = x.chw()?;
    if window == 0 || stride == 0 || h < window || w < window {
        return Err(Error::ShapeMismatch(format!(
            "pool window {window} on {h}x{w} map"
        )));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let d = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (f64::NEG_INFINITY, 0usize);
                for py in 0..window {
                    for px in 0..window {
                        let i = (ci * h + oy * stride + py) * w + ox * stride + px;
                        if d[i] > best.0 {
                            best = (d[i], i);
                        }
                    }
                }
                out.push(best.0);
                arg.push(best.1);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, arg))
}

pub fn max_pool_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut g = Tensor::zeros(input_shape.to_vec());
    for (&i, &gv) in argmax.iter().zip(grad_out.data()) {
        g.data_mut()[i] += gv;
    }
    g
}

/// Cross-channel local response normalization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrnSpec {
    /// Number of channels in the window; odd.
    pub depth: usize,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LrnSpec {
    fn default() -> Self {
        Self {
            depth: 5,
            k: 2.0,
            alpha: 1e-4,
            beta: 0.75,
        }
    }
}

/// `b_c = a_c / (k + alpha * sum_{|c' - c| <= depth/2} a_c'^2)^beta`.
/// Also returns the per-element denominators base for the backward pass.
pub fn lrn(x: &Tensor, spec: &LrnSpec) -> Result<(Tensor, Vec<f64>)> {
    let (c, h, w) = x.chw()?;
    let half = spec.depth / 2;
    let hw = h * w;
    let a = x.data();
    let mut scale = vec![0.0; a.len()];
    let mut out = vec![0.0; a.len()];
    for ci in 0..c {
        let lo = ci.saturating_sub(half);
        let hi = (ci + half).min(c - 1);
        for p in 0..hw {
            let mut ss = 0.0;
            for cj in lo..=hi {
                let v = a[cj * hw + p];
                ss += v * v;
            }
            let base = spec.k + spec.alpha * ss;
            scale[ci * hw + p] = base;
            out[ci * hw + p] = a[ci * hw + p] * base.powf(-spec.beta);
        }
    }
    Ok((Tensor::new(x.shape().to_vec(), out)?, scale))
}

pub fn lrn_backward(x: &Tensor, scale: &[f64], spec: &LrnSpec, grad_out: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    let half = spec.depth / 2;
    let hw = h * w;
    let a = x.data();
    let g = grad_out.data();
    // t_c = g_c * a_c * D_c^(-beta-1), reused by every channel in c's window
    let t: Vec<f64> = (0..a.len())
        .map(|i| g[i] * a[i] * scale[i].powf(-spec.beta - 1.0))
        .collect();
    let mut dx = vec![0.0; a.len()];
    for ci in 0..c {
        let lo = ci.saturating_sub(half);
        let hi = (ci + half).min(c - 1);
        for p in 0..hw {
            let i = ci * hw + p;
            let mut cross = 0.0;
            for cj in lo..=hi {
                cross += t[cj * hw + p];
            }
            dx[i] = g[i] * scale[i].powf(-spec.beta) - 2.0 * spec.alpha * spec.beta * a[i] * cross;
        }
    }
    Tensor::new(x.shape().to_vec(), dx)
}

/// Fully connected layer, `y = W x + b` with `W` stored `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl FcLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }
}

pub fn fc_forward(x: &Tensor, layer: &FcLayer) -> Result<Tensor> {
    if x.len() != layer.inputs {
        return Err(Error::ShapeMismatch(format!(
            "fc expects {} inputs, got {}",
            layer.inputs,
            x.len()
        )));
    }
    let xd = x.data();
    let out = layer
        .weights
        .chunks(layer.inputs)
        .zip(&layer.bias)
        .map(|(row, b)| b + row.iter().zip(xd).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    Ok(Tensor::flat(out))
}

/// Returns `(dW, db, dx)`.
pub fn fc_backward(x: &Tensor, layer: &FcLayer, grad_out: &Tensor) -> (Vec<f64>, Vec<f64>, Tensor) {
    let xd = x.data();
    let g = grad_out.data();
    let mut dw = vec![0.0; layer.weights.len()];
    let mut dx = vec![0.0; layer.inputs];
    for (o, &go) in g.iter().enumerate() {
        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
        let drow = &mut dw[o * layer.inputs..(o + 1) * layer.inputs];
        for i in 0..layer.inputs {
            drow[i] = go * xd[i];
            dx[i] += go * row[i];
        }
    }
    (dw, g.to_vec(), Tensor::flat(dx))
}

/// Max-shifted softmax and the cross-entropy of `label`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let probs = softmax(logits);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    (lse - logits[label], probs)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
