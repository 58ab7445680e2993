use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::LRN_STAGES;
use super::layers::*;
use super::{NetworkConfig, Tensor};
use crate::canvas::TextureStack;
use crate::{Error, Result};

/// The four-stage convolutional network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub config: NetworkConfig,
    pub conv: Vec<ConvLayer>,
    pub fc: Vec<FcLayer>,
}

/// Parameter gradients laid out like [`CnnModel::param_blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &CnnModel) -> Self {
        Self {
            blocks: model.param_blocks().iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks.iter().flatten().copied()
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    conv_in: Vec<Tensor>,
    conv_pre: Vec<Tensor>,
    conv_act: Vec<Tensor>,
    lrn_scale: Vec<Vec<f64>>,
    pool_in: Vec<Vec<usize>>,
    argmax: Vec<Vec<usize>>,
    fc_in: Vec<Tensor>,
    fc_pre: Vec<Tensor>,
    pub logits: Vec<f64>,
}

impl ForwardTrace {
    /// Post-ReLU activations of the fourth convolution.
    pub fn conv4_activations(&self) -> &Tensor {
        &self.conv_act[3]
    }

    /// Which side of every ReLU kink each unit sits on and which element won
    /// every pooling window. Equal patterns mean two parameter settings lie
    /// in the same smooth piece of the loss.
    pub fn pattern(&self) -> Vec<usize> {
        let signs = self
            .conv_pre
            .iter()
            .chain(&self.fc_pre)
            .flat_map(|t| t.data().iter().map(|&z| usize::from(z > 0.0)));
        signs.chain(self.argmax.iter().flatten().copied()).collect()
    }
}

impl CnnModel {
    /// Seeded initialization: zero biases, Gaussian weights with standard
    /// deviation `sqrt(2 / fan_in)`.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut gaussian = |n: usize, fan_in: usize| -> Vec<f64> {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        };
        let mut conv = Vec::with_capacity(4);
        let mut channels = config.input_channels;
        for spec in &config.conv {
            let mut layer = ConvLayer::zeros(spec.filters, channels, spec.kernel, spec.stride);
            layer.weights = gaussian(layer.weights.len(), channels * spec.kernel * spec.kernel);
            conv.push(layer);
            channels = spec.filters;
        }
        let mut fc = Vec::with_capacity(3);
        let mut inputs = config.flat_len()?;
        for &width in &config.fc {
            let mut layer = FcLayer::zeros(inputs, width);
            layer.weights = gaussian(layer.weights.len(), inputs);
            fc.push(layer);
            inputs = width;
        }
        Ok(Self { config, conv, fc })
    }

    /// Parameter blocks in declaration order: conv1 weights, conv1 bias, ...,
    /// conv4 bias, fc1 weights, fc1 bias, ..., fc3 bias.
    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let conv = self.conv.iter().flat_map(|l| [&l.weights[..], &l.bias[..]]);
        let fc = self.fc.iter().flat_map(|l| [&l.weights[..], &l.bias[..]]);
        conv.chain(fc).collect()
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::with_capacity(14);
        for l in &mut self.conv {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        for l in &mut self.fc {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_blocks().iter().map(|b| b.len()).sum()
    }

    /// `theta <- theta - step * grad`.
    pub fn apply_update(&mut self, grads: &Gradients, step: f64) {
        for (p, g) in self.param_blocks_mut().into_iter().zip(&grads.blocks) {
            for (x, d) in p.iter_mut().zip(g) {
                *x -= step * d;
            }
        }
    }

    /// Converts a texture stack into the network's input tensor.
    pub fn input_tensor(&self, stack: &TextureStack) -> Result<Tensor> {
        let (w, h) = stack.dims();
        let c = stack.segment_count();
        let n = self.config.input_size;
        if c != self.config.input_channels || w != n || h != n {
            return Err(Error::ShapeMismatch(format!(
                "stack {c}x{h}x{w} for a {}x{n}x{n} network",
                self.config.input_channels
            )));
        }
        Tensor::new(vec![c, h, w], stack.to_vec())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let n = self.config.input_size;
        if x.shape() != [self.config.input_channels, n, n] {
            return Err(Error::ShapeMismatch(format!(
                "input {:?} for a {}x{n}x{n} network",
                x.shape(),
                self.config.input_channels
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut trace = ForwardTrace {
            conv_in: Vec::with_capacity(4),
            conv_pre: Vec::with_capacity(4),
            conv_act: Vec::with_capacity(4),
            lrn_scale: Vec::with_capacity(LRN_STAGES),
            pool_in: Vec::with_capacity(4),
            argmax: Vec::with_capacity(4),
            fc_in: Vec::with_capacity(3),
            fc_pre: Vec::with_capacity(2),
            logits: Vec::new(),
        };
        let mut h = x.clone();
        for (s, layer) in self.conv.iter().enumerate() {
            let z = conv_forward(&h, layer)?;
            let a = relu(&z);
            let normed = if s < LRN_STAGES {
                let (n, scale) = lrn(&a, &self.config.lrn)?;
                trace.lrn_scale.push(scale);
                n
            } else {
                a.clone()
            };
            let p = self.config.pool[s];
            let (pooled, arg) = max_pool(&normed, p.window, p.stride)?;
            trace.pool_in.push(normed.shape().to_vec());
            trace.argmax.push(arg);
            trace.conv_in.push(std::mem::replace(&mut h, pooled));
            trace.conv_pre.push(z);
            trace.conv_act.push(a);
        }
        let mut f = h.flattened();
        for (i, layer) in self.fc.iter().enumerate() {
            let z = fc_forward(&f, layer)?;
            trace.fc_in.push(f);
            if i + 1 < self.fc.len() {
                f = relu(&z);
                trace.fc_pre.push(z);
            } else {
                trace.logits = z.into_data();
                break;
            }
        }
        Ok(trace)
    }

    /// Loss and exact parameter gradients for one labelled example.
    pub fn backward(&self, x: &Tensor, label: usize) -> Result<(f64, Gradients)> {
        if label >= self.config.class_count {
            return Err(Error::InvalidConfig(format!(
                "label {label} out of range for {} classes",
                self.config.class_count
            )));
        }
        let trace = self.forward(x)?;
        let (loss, probs) = softmax_cross_entropy(&trace.logits, label);
        let mut g = probs;
        g[label] -= 1.0;
        let mut grad = Tensor::flat(g);

        let mut fc_grads = Vec::with_capacity(3);
        for i in (0..self.fc.len()).rev() {
            if i + 1 < self.fc.len() {
                grad = relu_backward(&trace.fc_pre[i], &grad);
            }
            let (dw, db, dx) = fc_backward(&trace.fc_in[i], &self.fc[i], &grad);
            fc_grads.push((dw, db));
            grad = dx;
        }
        fc_grads.reverse();

        let side = self.config.spatial_sizes()?[7];
        let mut grad = Tensor::new(vec![self.config.conv[3].filters, side, side], grad.into_data())?;

        let mut conv_grads = Vec::with_capacity(4);
        for s in (0..self.conv.len()).rev() {
            grad = max_pool_backward(&trace.pool_in[s], &trace.argmax[s], &grad);
            if s < LRN_STAGES {
                grad = lrn_backward(&trace.conv_act[s], &trace.lrn_scale[s], &self.config.lrn, &grad)?;
            }
            grad = relu_backward(&trace.conv_pre[s], &grad);
            let (dw, db, dx) = conv_backward(&trace.conv_in[s], &self.conv[s], &grad, s > 0)?;
            conv_grads.push((dw, db));
            if let Some(dx) = dx {
                grad = dx;
            }
        }
        conv_grads.reverse();

        let blocks = conv_grads
            .into_iter()
            .chain(fc_grads)
            .flat_map(|(w, b)| [w, b])
            .collect();
        Ok((loss, Gradients { blocks }))
    }

    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.logits)
    }

    pub fn loss(&self, x: &Tensor, label: usize) -> Result<f64> {
        Ok(softmax_cross_entropy(&self.logits(x)?, label).0)
    }

    /// Most probable class (lowest index on ties) and the class
    /// probabilities.
    pub fn predict(&self, stack: &TextureStack) -> Result<(usize, Vec<f64>)> {
        self.predict_tensor(&self.input_tensor(stack)?)
    }

    pub fn predict_tensor(&self, x: &Tensor) -> Result<(usize, Vec<f64>)> {
        let logits = self.logits(x)?;
        Ok((argmax(&logits), softmax(&logits)))
    }

    /// Flattened post-ReLU activations of the fourth convolution layer.
    pub fn extract_features(&self, stack: &TextureStack) -> Result<Vec<f64>> {
        let x = self.input_tensor(stack)?;
        Ok(self.forward(&x)?.conv4_activations().data().to_vec())
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
