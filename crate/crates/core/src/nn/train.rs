//! Mini-batch Adam training with early stopping.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::mix_seed;
use crate::error::{Error, Result};
use crate::nn::layers::Tensor3;
use crate::nn::network::Network;
use crate::nn::real::Real;

/// Samples per gradient partial sum. Fixed so that the reduction order, and
/// hence the trained weights, do not depend on the number of threads.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Decoupled weight decay per step, scaled by the learning rate.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seed of the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 15,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidParameter("learning_rate, batch_size and max_epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter("betas must lie in [0, 1) and weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

/// Inputs with integer labels.
#[derive(Debug, Clone, Default)]
pub struct Dataset<T> {
    pub x: Vec<Tensor3<T>>,
    pub y: Vec<usize>,
}

impl<T: Real> Dataset<T> {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn push(&mut self, x: Tensor3<T>, y: usize) {
        self.x.push(x);
        self.y.push(y);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,val_loss,val_acc";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.epochs {
            out.push_str(&format!("{},{},{},{},{}\n", r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Adam state over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step<T: Real>(&mut self, params: &mut [T], grad: &[T], cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for k in 0..params.len() {
            let g = grad[k].to_f64();
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g;
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g;
            let update = (self.m[k] / bc1) / ((self.v[k] / bc2).sqrt() + cfg.epsilon);
            let p = params[k].to_f64();
            params[k] = T::from_f64(p - cfg.learning_rate * (update + cfg.weight_decay * p));
        }
    }
}

/// Mean loss and accuracy over `data` without updating weights.
pub fn evaluate_loss<T: Real>(net: &Network<T>, data: &Dataset<T>) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let per: Vec<(f64, bool)> = (0..data.len())
        .into_par_iter()
        .map(|k| {
            let p = net.forward(&data.x[k])?;
            let loss = -p[data.y[k]].to_f64().max(f64::MIN_POSITIVE).ln();
            Ok((loss, crate::nn::network::argmax(&p) == data.y[k]))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    Ok((per.iter().map(|r| r.0).sum::<f64>() / n, per.iter().filter(|r| r.1).count() as f64 / n))
}

/// Summed loss, correct count and gradient of the samples `idx`.
fn batch_gradient<T: Real>(net: &Network<T>, data: &Dataset<T>, idx: &[usize]) -> Result<(f64, usize, Vec<T>)> {
    let partials: Vec<(f64, usize, Vec<T>)> = idx
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![T::zero(); net.n_params()];
            let mut loss = 0.0;
            let mut correct = 0;
            for &k in chunk {
                let (l, pred) = net.loss_and_grad(&data.x[k], data.y[k], &mut g)?;
                loss += l.to_f64();
                correct += usize::from(pred == data.y[k]);
            }
            Ok((loss, correct, g))
        })
        .collect::<Result<_>>()?;
    let mut total = vec![T::zero(); net.n_params()];
    let (mut loss, mut correct) = (0.0, 0);
    for (l, c, g) in partials {
        loss += l;
        correct += c;
        for (t, v) in total.iter_mut().zip(&g) {
            *t = *t + *v;
        }
    }
    Ok((loss, correct, total))
}

/// Trains `net` in place. With a validation set, the weights of the epoch
/// with the best validation accuracy (ties: lower loss) are restored at the
/// end; otherwise training metrics drive the selection.
pub fn train<T: Real>(
    net: &mut Network<T>,
    train_set: &Dataset<T>,
    val_set: Option<&Dataset<T>>,
    cfg: &TrainConfig,
) -> Result<History> {
    train_with_callback(net, train_set, val_set, cfg, |_| {})
}

pub fn train_with_callback<T: Real, F: FnMut(&EpochRecord)>(
    net: &mut Network<T>,
    train_set: &Dataset<T>,
    val_set: Option<&Dataset<T>>,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<History> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidParameter("training set is empty".into()));
    }
    let val_set = val_set.filter(|v| !v.is_empty());
    let mut adam = Adam::new(net.n_params());
    let mut history = History::default();
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best_params = net.params.clone();
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x7261_696e, epoch as u64)));
        let (mut loss_sum, mut correct) = (0.0, 0);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, c, mut grad) = batch_gradient(net, train_set, idx)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b, loss: loss / idx.len() as f64 });
            }
            let scale = T::from_f64(1.0 / idx.len() as f64);
            for g in &mut grad {
                *g = *g * scale;
            }
            adam.step(&mut net.params, &grad, cfg);
            loss_sum += loss;
            correct += c;
        }
        let n = train_set.len() as f64;
        let (train_loss, train_acc) = (loss_sum / n, correct as f64 / n);
        let (val_loss, val_acc) = match val_set {
            Some(v) => evaluate_loss(net, v)?,
            None => (f64::NAN, f64::NAN),
        };
        let rec = EpochRecord { epoch, train_loss, train_acc, val_loss, val_acc };
        on_epoch(&rec);
        history.epochs.push(rec);
        let score = if val_set.is_some() { (val_acc, val_loss) } else { (train_acc, train_loss) };
        if score.0 > best.0 || (score.0 == best.0 && score.1 < best.1) {
            best = score;
            best_params.copy_from_slice(&net.params);
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    net.params = best_params;
    Ok(history)
}
