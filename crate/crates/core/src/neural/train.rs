use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hashing::{content_hash, derive_seed};

use super::layers::Mode;
use super::network::{bce_with_logits, sigmoid, Network};
use super::optim::{Optimizer, OptimizerKind};
use super::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpochPolicy {
    /// Train on every example for exactly this many epochs.
    Fixed(usize),
    /// Hold out a validation share and stop once its loss has not improved
    /// for `patience` epochs; the best weights are restored.
    EarlyStopping {
        max_epochs: usize,
        patience: usize,
        validation_fraction: f64,
    },
}

impl Default for EpochPolicy {
    fn default() -> Self {
        EpochPolicy::EarlyStopping {
            max_epochs: 100,
            patience: 5,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub policy: EpochPolicy,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    /// Mean training-mode loss (including L2 terms) per epoch.
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
}

impl History {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }
}

/// Trains layers `start..` of `net` on inputs already shaped for layer
/// `start`. The example order is canonicalized by content hash before the
/// seeded split and shuffles, so the result does not depend on the order
/// in which examples are supplied.
pub fn fit<S: Scalar>(
    net: &mut Network<S>,
    start: usize,
    inputs: &[Tensor<S>],
    targets: &[f64],
    config: &FitConfig,
) -> Result<History> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch(inputs.len(), targets.len()));
    }
    if !targets.iter().any(|&y| y > 0.5) {
        return Err(Error::SingleClass("SD"));
    }
    if !targets.iter().any(|&y| y <= 0.5) {
        return Err(Error::SingleClass("ND"));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }

    let mut order: Vec<(usize, [u8; 32])> = inputs
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (x, &y))| (i, example_hash(x, y)))
        .collect();
    order.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut order: Vec<usize> = order.into_iter().map(|(i, _)| i).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "order"));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "dropout"));
    order.shuffle(&mut rng);

    let (max_epochs, patience, validation) = match config.policy {
        EpochPolicy::Fixed(n) => (n, None, Vec::new()),
        EpochPolicy::EarlyStopping {
            max_epochs,
            patience,
            validation_fraction,
        } => {
            let n_val = ((order.len() as f64 * validation_fraction).round() as usize)
                .clamp(1, order.len().saturating_sub(1).max(1));
            if order.len() < 2 {
                return Err(Error::InvalidParameter(
                    "early stopping needs at least two examples".into(),
                ));
            }
            let val = order.drain(..n_val).collect();
            (max_epochs, Some(patience), val)
        }
    };

    let end = net.len();
    let mut opt = Optimizer::<S>::new(config.optimizer);
    let mut history = History::default();
    let mut best: Option<(f64, Vec<Tensor<S>>)> = None;
    let mut since_best = 0;

    for epoch in 0..max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xs: Vec<Tensor<S>> = batch.iter().map(|&i| inputs[i].clone()).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            net.zero_grad();
            let out = net.forward(&xs, start, end, &mut Mode::Train(&mut dropout_rng))?;
            let logits: Vec<S> = out.iter().map(|t| t.data()[0]).collect();
            let (loss, grad) = bce_with_logits(&logits, &ys);
            total += (loss + net.penalty()) * batch.len() as f64;
            net.backward(grad.into_iter().map(|g| Tensor::from_vec(vec![g])).collect());
            opt.step(net.params_mut());
        }
        history.train_loss.push(total / order.len() as f64);

        if let Some(patience) = patience {
            let val_loss = mean_loss(net, start, inputs, targets, &validation)? + net.penalty();
            history.validation_loss.push(val_loss);
            if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
                best = Some((val_loss, snapshot(net)));
                history.best_epoch = Some(epoch);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }
    if let Some((_, weights)) = best {
        restore(net, weights);
    }
    Ok(history)
}

fn example_hash<S: Scalar>(x: &Tensor<S>, y: f64) -> [u8; 32] {
    let mut bytes = Vec::with_capacity(x.len() * S::BYTES);
    for &v in x.data() {
        v.write_le(&mut bytes);
    }
    let shape: Vec<u8> = x.shape().iter().flat_map(|d| (*d as u64).to_le_bytes()).collect();
    content_hash(&[&shape, &bytes, &y.to_le_bytes()])
}

fn mean_loss<S: Scalar>(
    net: &Network<S>,
    start: usize,
    inputs: &[Tensor<S>],
    targets: &[f64],
    idx: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in idx.chunks(64) {
        let xs: Vec<Tensor<S>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
        let ys: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
        let out = net.infer(&xs, start, net.len())?;
        let logits: Vec<S> = out.iter().map(|t| t.data()[0]).collect();
        total += bce_with_logits(&logits, &ys).0 * chunk.len() as f64;
    }
    Ok(total / idx.len().max(1) as f64)
}

fn snapshot<S: Scalar>(net: &Network<S>) -> Vec<Tensor<S>> {
    net.params().iter().map(|p| p.value.clone()).collect()
}

fn restore<S: Scalar>(net: &mut Network<S>, weights: Vec<Tensor<S>>) {
    for (p, w) in net.params_mut().into_iter().zip(weights) {
        p.value = w;
    }
}

/// Sigmoid outputs of layers `start..` in inference mode.
pub fn predict_proba<S: Scalar>(
    net: &Network<S>,
    start: usize,
    inputs: &[Tensor<S>],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(64) {
        for t in net.infer(chunk, start, net.len())? {
            out.push(sigmoid(t.data()[0].to_f64().unwrap()));
        }
    }
    Ok(out)
}
