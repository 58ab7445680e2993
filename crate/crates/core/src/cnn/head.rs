//! Optional linear classifier on conv4 features, trained with a multiclass
//! hinge loss. The softmax head of the network remains the default.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::argmax;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub classes: usize,
    pub dim: usize,
    /// `(classes, dim)` row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for HeadParams {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.01,
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl LinearHead {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.dim)
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }

    /// Stochastic subgradient descent on
    /// `sum_{j != y} max(0, 1 + s_j - s_y) + l2/2 |W|^2`.
    pub fn train(features: &[Vec<f64>], labels: &[usize], classes: usize, p: &HeadParams) -> Result<Self> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::EmptyDataset);
        }
        let dim = features[0].len();
        if features.iter().any(|f| f.len() != dim) || labels.iter().any(|&y| y >= classes) {
            return Err(Error::ShapeMismatch("inconsistent feature rows or labels".into()));
        }
        let mut head = LinearHead {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut order: Vec<usize> = (0..features.len()).collect();
        for _ in 0..p.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let (x, y) = (&features[i], labels[i]);
                let s = head.scores(x);
                for w in head.weights.iter_mut() {
                    *w *= 1.0 - p.learning_rate * p.l2;
                }
                for j in 0..classes {
                    if j != y && 1.0 + s[j] - s[y] > 0.0 {
                        for (k, v) in x.iter().enumerate() {
                            head.weights[j * dim + k] -= p.learning_rate * v;
                            head.weights[y * dim + k] += p.learning_rate * v;
                        }
                        head.bias[j] -= p.learning_rate;
                        head.bias[y] += p.learning_rate;
                    }
                }
            }
        }
        Ok(head)
    }
}
