use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CnnModel, Gradients, NetworkConfig, Tensor};
use crate::canvas::TextureStack;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of every epoch, measured during the epoch.
    pub epoch_loss: Vec<f64>,
}

/// Minibatch gradient descent on softmax cross-entropy.
pub fn train(dataset: &[(TextureStack, usize)], config: &NetworkConfig) -> Result<(CnnModel, TrainReport)> {
    let model = CnnModel::new(config.clone())?;
    let tensors = dataset
        .iter()
        .map(|(s, y)| Ok((model.input_tensor(s)?, *y)))
        .collect::<Result<Vec<_>>>()?;
    train_from(model, &tensors)
}

/// Same as [`train`] on prepared input tensors.
pub fn train_tensors(dataset: &[(Tensor, usize)], config: &NetworkConfig) -> Result<(CnnModel, TrainReport)> {
    train_from(CnnModel::new(config.clone())?, dataset)
}

fn train_from(mut model: CnnModel, dataset: &[(Tensor, usize)]) -> Result<(CnnModel, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cfg = model.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // shuffling draws from its own stream so it does not depend on how many
    // values initialization consumed
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = Gradients::zeros_like(&model);
            for &i in batch {
                let (x, y) = &dataset[i];
                let (loss, g) = model.backward(x, *y)?;
                total += loss;
                acc.add_assign(&g);
            }
            model.apply_update(&acc, cfg.learning_rate / batch.len() as f64);
        }
        epoch_loss.push(total / dataset.len() as f64);
    }
    Ok((model, TrainReport { epoch_loss }))
}

/// Fraction of examples whose predicted class equals the label.
pub fn accuracy(model: &CnnModel, dataset: &[(Tensor, usize)]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for (x, y) in dataset {
        if model.predict_tensor(x)?.0 == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}
