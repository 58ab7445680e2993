//! Naive-loop layer oracles and the finite-difference gradient check.

use deeptraj::cnn::{CnnModel, ConvSpec, LrnSpec, NetworkConfig, PoolSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// out[o][y][x] = b[o] + sum_c sum_ky sum_kx w[o][c][ky][kx] in[c][y*s+ky][x*s+kx]
pub fn naive_conv(x: &[f64], c: usize, h: usize, w: usize, wts: &[f64], bias: &[f64], k: usize, s: usize) -> Vec<f64> {
    let oc = bias.len();
    let oh = (h - k) / s + 1;
    let ow = (w - k) / s + 1;
    let mut out = Vec::new();
    for o in 0..oc {
        for y in 0..oh {
            for xx in 0..ow {
                let mut acc = bias[o];
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            acc += wts[((o * c + ci) * k + ky) * k + kx]
                                * x[(ci * h + y * s + ky) * w + xx * s + kx];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

pub fn naive_pool(x: &[f64], c: usize, h: usize, w: usize, win: usize, s: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for ci in 0..c {
        let mut y = 0;
        while y + win <= h {
            let mut xx = 0;
            while xx + win <= w {
                let mut m = f64::NEG_INFINITY;
                for py in y..y + win {
                    for px in xx..xx + win {
                        m = m.max(x[(ci * h + py) * w + px]);
                    }
                }
                out.push(m);
                xx += s;
            }
            y += s;
        }
    }
    out
}

pub fn naive_lrn(x: &[f64], c: usize, hw: usize, spec: &LrnSpec) -> Vec<f64> {
    let half = (spec.depth / 2) as isize;
    let mut out = vec![0.0; x.len()];
    for ci in 0..c as isize {
        for p in 0..hw {
            let mut ss = 0.0;
            for cj in ci - half..=ci + half {
                if cj >= 0 && cj < c as isize {
                    let v = x[cj as usize * hw + p];
                    ss += v * v;
                }
            }
            let i = ci as usize * hw + p;
            out[i] = x[i] / (spec.k + spec.alpha * ss).powf(spec.beta);
        }
    }
    out
}

pub fn naive_fc(x: &[f64], wts: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..bias.len())
        .map(|o| {
            let mut acc = bias[o];
            for i in 0..n {
                acc += wts[o * n + i] * x[i];
            }
            acc
        })
        .collect()
}

/// Small seeded network on 2x12x12 inputs with 3 classes. LRN uses a large
/// alpha so its cross-channel terms carry real gradient.
pub fn tiny_config(seed: u64) -> NetworkConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv = |f: usize, k: usize| ConvSpec { filters: f, kernel: k, stride: 1 };
    let pool = |w: usize| PoolSpec { window: w, stride: w };
    NetworkConfig {
        input_channels: 2,
        input_size: 12,
        // 12 -> 10 -> 5 -> 3 -> 3 -> 3 -> 3 -> 1 -> 1
        conv: [
            conv(rng.random_range(2..=4), 3),
            conv(rng.random_range(2..=4), 3),
            conv(rng.random_range(2..=3), 1),
            conv(rng.random_range(2..=3), 3),
        ],
        pool: [pool(2), pool(1), pool(1), pool(1)],
        lrn: LrnSpec { depth: 3, k: 2.0, alpha: 0.3, beta: 0.75 },
        fc: [rng.random_range(3..=6), rng.random_range(3..=5), 3],
        class_count: 3,
        learning_rate: 0.01,
        epochs: 1,
        batch_size: 1,
        seed,
    }
}

/// Tiny model with random (nonzero) biases, plus an input and a label.
pub fn tiny_case(seed: u64) -> (CnnModel, Tensor, usize) {
    let mut model = CnnModel::new(tiny_config(seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    for l in &mut model.conv {
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
    }
    for l in &mut model.fc {
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
    }
    let x = random_tensor(&mut rng, vec![2, 12, 12], 0.0, 1.0);
    let label = rng.random_range(0..3);
    (model, x, label)
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    // gradients below 1e-6 in magnitude are compared absolutely
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub enum FdOutcome {
    /// Largest relative error over every parameter.
    Checked { max_rel: f64, params: usize },
    /// A +-h probe crossed a ReLU kink or changed a pooling winner, so the
    /// loss is not differentiable within the probe interval.
    Kink,
}

/// Central differences with step `h` against the analytic gradient, for
/// every parameter of the model.
pub fn finite_difference_check(model: &CnnModel, x: &Tensor, label: usize, h: f64) -> FdOutcome {
    let (_, grads) = model.backward(x, label).unwrap();
    let base = model.forward(x).unwrap().pattern();
    let mut max_rel: f64 = 0.0;
    let mut params = 0;
    let mut probe = model.clone();
    for (b, block) in grads.blocks.iter().enumerate() {
        for (i, &analytic) in block.iter().enumerate() {
            let orig = probe.param_blocks()[b][i];
            probe.param_blocks_mut()[b][i] = orig + h;
            let plus = probe.forward(x).unwrap();
            probe.param_blocks_mut()[b][i] = orig - h;
            let minus = probe.forward(x).unwrap();
            probe.param_blocks_mut()[b][i] = orig;
            if plus.pattern() != base || minus.pattern() != base {
                return FdOutcome::Kink;
            }
            let lp = deeptraj::cnn::softmax_cross_entropy(&plus.logits, label).0;
            let lm = deeptraj::cnn::softmax_cross_entropy(&minus.logits, label).0;
            let numeric = (lp - lm) / (2.0 * h);
            max_rel = max_rel.max(rel_err(analytic, numeric));
            params += 1;
        }
    }
    FdOutcome::Checked { max_rel, params }
}
