use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::linalg::{derive_seed, SeededRng, Tensor};
use crate::{Error, Result};

use super::loss::{mean_squared_error, predictions, softmax_cross_entropy};
use super::network::{Mode, Network};
use super::optim::{OptimizerKind, Optimizer, DEFAULT_HALVE_EVERY};
use super::params::Parameters;

const EVAL_BATCH: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    /// `[N, outputs]` regression targets.
    Values(Tensor),
}

/// Inputs `[N, ...]` with one target per leading index.
#[derive(Clone, Debug, PartialEq)]
pub struct Examples {
    pub inputs: Tensor,
    pub targets: Targets,
}

impl Examples {
    pub fn new(inputs: Tensor, targets: Targets) -> Result<Self> {
        let n = inputs.shape()[0];
        let m = match &targets {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.shape()[0],
        };
        if n != m {
            return Err(Error::shape(format!("{n} inputs but {m} targets")));
        }
        Ok(Examples { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Examples {
        let inputs = gather(&self.inputs, indices);
        let targets = match &self.targets {
            Targets::Classes(c) => Targets::Classes(indices.iter().map(|&i| c[i]).collect()),
            Targets::Values(v) => Targets::Values(gather(v, indices)),
        };
        Examples { inputs, targets }
    }

    /// The first `count` examples.
    pub fn take(&self, count: usize) -> Examples {
        let idx: Vec<usize> = (0..count.min(self.len())).collect();
        self.select(&idx)
    }
}

fn gather(t: &Tensor, indices: &[usize]) -> Tensor {
    let per = t.len() / t.shape()[0];
    let mut shape = t.shape().to_vec();
    shape[0] = indices.len();
    let mut data = Vec::with_capacity(indices.len() * per);
    for &i in indices {
        data.extend_from_slice(&t.data()[i * per..(i + 1) * per]);
    }
    Tensor::new(shape, data).expect("gathered shape")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Fraction of argmax predictions that miss the label.
    Top1Error,
    Rmse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_halve_every")]
    pub halve_every: u64,
}

fn default_halve_every() -> u64 {
    DEFAULT_HALVE_EVERY
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerKind, epochs: usize, batch_size: usize, seed: u64) -> Self {
        TrainConfig { optimizer, epochs, batch_size, seed, halve_every: DEFAULT_HALVE_EVERY }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Loss over the whole training set in evaluation mode.
    pub train_loss: f64,
    pub test_metric: f64,
    /// Learning rate used by the last update of the epoch.
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub metric: Metric,
    pub initial_train_loss: f64,
    pub initial_test_metric: f64,
    pub steps: u64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn final_test_metric(&self) -> f64 {
        self.epochs.last().map_or(self.initial_test_metric, |e| e.test_metric)
    }

    pub fn final_train_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_train_loss, |e| e.train_loss)
    }
}

fn batch_loss(logits: &Tensor, targets: &Targets) -> Result<(f64, Tensor)> {
    match targets {
        Targets::Classes(c) => softmax_cross_entropy(logits, c),
        Targets::Values(v) => mean_squared_error(logits, v),
    }
}

/// Mean loss and metric over `data` in evaluation mode.
pub fn evaluate(net: &Network, params: &Parameters, data: &Examples) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let n = data.len();
    let (mut loss, mut misses, mut sq) = (0.0, 0usize, 0.0);
    for start in (0..n).step_by(EVAL_BATCH) {
        let idx: Vec<usize> = (start..(start + EVAL_BATCH).min(n)).collect();
        let batch = data.select(&idx);
        let (logits, _) = net.forward(params, &batch.inputs, Mode::Eval)?;
        let (l, _) = batch_loss(&logits, &batch.targets)?;
        loss += l * idx.len() as f64;
        match &batch.targets {
            Targets::Classes(c) => {
                misses += predictions(&logits).iter().zip(c).filter(|(p, t)| p != t).count();
            }
            Targets::Values(v) => {
                sq += logits.sub(v)?.data().iter().map(|d| d * d).sum::<f64>();
            }
        }
    }
    let metric = match data.targets {
        Targets::Classes(_) => misses as f64 / n as f64,
        Targets::Values(ref v) => (sq / v.len() as f64).sqrt(),
    };
    Ok((loss / n as f64, metric))
}

/// Minibatch training. Each epoch visits a permutation of the training set
/// drawn from `derive_seed(config.seed, epoch)`; the final short batch is kept.
pub fn train(
    net: &Network,
    params: &mut Parameters,
    train: &Examples,
    test: &Examples,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("training and test sets must be non-empty"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    if std::mem::discriminant(&train.targets) != std::mem::discriminant(&test.targets) {
        return Err(Error::invalid("training and test targets are of different kinds"));
    }
    let metric = match train.targets {
        Targets::Classes(_) => Metric::Top1Error,
        Targets::Values(_) => Metric::Rmse,
    };
    let mut opt = Optimizer::new(config.optimizer, params, config.halve_every)?;
    let (initial_train_loss, _) = evaluate(net, params, train)?;
    let (_, initial_test_metric) = evaluate(net, params, test)?;
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let clock = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        SeededRng::new(derive_seed(config.seed, epoch as u64)).shuffle(&mut order);
        let mut lr = opt.current_lr();
        for chunk in order.chunks(config.batch_size) {
            let batch = train.select(chunk);
            let (logits, cache) = net.forward(params, &batch.inputs, Mode::Train)?;
            let (_, grad) = batch_loss(&logits, &batch.targets)?;
            let grads = net.backward(params, &cache, &grad)?;
            net.update_running_stats(params, &cache);
            lr = opt.current_lr();
            opt.step(params, &grads)?;
        }
        let (train_loss, _) = evaluate(net, params, train)?;
        let (_, test_metric) = evaluate(net, params, test)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite("training loss diverged"));
        }
        epochs.push(EpochRecord { epoch, train_loss, test_metric, lr, seconds: clock.elapsed().as_secs_f64() });
    }
    Ok(TrainReport { metric, initial_train_loss, initial_test_metric, steps: opt.steps_taken(), epochs })
}
