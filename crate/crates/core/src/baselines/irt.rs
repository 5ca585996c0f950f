//! Transductive 2PL-IRT: one free ability per learner, free discrimination
//! and difficulty per item, fitted by gradient descent on the summed NLL.
//! Discrimination is `|a_raw|`, so it stays positive without constraints.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{IdIndex, ResponseDataset};
use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::training::{self, bce_logit, epoch_batches, Fitted, TrainLog};

pub const FORMAT_VERSION: u32 = 1;

/// Smallest magnitude kept for the raw discrimination, so `a > 0`.
const MIN_DISCRIMINATION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransductiveIrtModel {
    pub format_version: u32,
    pub theta: Vec<f64>,
    pub a_raw: Vec<f64>,
    pub b: Vec<f64>,
    pub learner_index: IdIndex,
    pub item_index: IdIndex,
}

impl TransductiveIrtModel {
    /// `theta, b ~ U(-0.5, 0.5)`, `a_raw ~ U(0.5, 1.5)`.
    pub fn init(learners: IdIndex, items: IdIndex, seed: u64) -> Self {
        let mut rng = training::rng(seed);
        let theta = (0..learners.len())
            .map(|_| rng.random::<f64>() - 0.5)
            .collect();
        let a_raw = (0..items.len())
            .map(|_| 0.5 + rng.random::<f64>())
            .collect();
        let b = (0..items.len())
            .map(|_| rng.random::<f64>() - 0.5)
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            theta,
            a_raw,
            b,
            learner_index: learners,
            item_index: items,
        }
    }

    pub fn a(&self, item: usize) -> f64 {
        self.a_raw[item].abs()
    }

    fn logit(&self, learner: usize, item: usize) -> f64 {
        self.a(item) * (self.theta[learner] - self.b[item])
    }

    pub fn predict(&self, learner: usize, item: usize) -> Result<f64> {
        if learner >= self.theta.len() {
            return Err(Error::OutOfRange {
                what: "learner",
                index: learner,
                len: self.theta.len(),
            });
        }
        if item >= self.b.len() {
            return Err(Error::OutOfRange {
                what: "item",
                index: item,
                len: self.b.len(),
            });
        }
        Ok(sigmoid(self.logit(learner, item)))
    }

    pub fn mean_nll(&self, ds: &ResponseDataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let total: f64 = ds
            .responses()
            .iter()
            .map(|r| bce_logit(self.logit(r.learner, r.item), r.score))
            .sum();
        Ok(total / ds.len() as f64)
    }

    pub fn check_version(&self) -> Result<()> {
        if self.format_version == FORMAT_VERSION {
            Ok(())
        } else {
            Err(Error::FormatVersion(self.format_version))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrtConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for IrtConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            epochs: 20,
            batch_size: training::DEFAULT_BATCH_SIZE,
            seed: 0,
        }
    }
}

pub fn fit(ds: &ResponseDataset, cfg: &IrtConfig) -> Result<Fitted<TransductiveIrtModel>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be positive, got {}",
            cfg.lr
        )));
    }
    let mut model = TransductiveIrtModel::init(ds.learners().clone(), ds.items().clone(), cfg.seed);
    let mut rng = training::rng(cfg.seed.wrapping_add(1));
    let mut log = TrainLog {
        losses: vec![model.mean_nll(ds)?],
        batches_per_epoch: training::n_batches(ds.len(), cfg.batch_size),
    };
    let mut g_theta = vec![0.0; model.theta.len()];
    let mut g_a = vec![0.0; model.b.len()];
    let mut g_b = vec![0.0; model.b.len()];
    for epoch in 1..=cfg.epochs {
        for batch in epoch_batches(ds.responses(), cfg.batch_size, &mut rng) {
            for r in &batch {
                let (a, gap) = (model.a(r.item), model.theta[r.learner] - model.b[r.item]);
                let g = sigmoid(a * gap) - f64::from(r.score);
                g_theta[r.learner] += g * a;
                g_b[r.item] -= g * a;
                g_a[r.item] += g * gap * model.a_raw[r.item].signum();
            }
            for r in &batch {
                let (i, j) = (r.learner, r.item);
                if g_theta[i] != 0.0 {
                    model.theta[i] -= cfg.lr * g_theta[i];
                    g_theta[i] = 0.0;
                }
                if g_a[j] != 0.0 || g_b[j] != 0.0 {
                    let w = model.a_raw[j] - cfg.lr * g_a[j];
                    model.a_raw[j] = if w.abs() < MIN_DISCRIMINATION {
                        MIN_DISCRIMINATION.copysign(w)
                    } else {
                        w
                    };
                    model.b[j] -= cfg.lr * g_b[j];
                    g_a[j] = 0.0;
                    g_b[j] = 0.0;
                }
            }
        }
        let loss = model.mean_nll(ds)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                epoch,
            });
        }
        log::debug!("irt epoch {epoch}: mean nll {loss:.6}");
        log.losses.push(loss);
    }
    Ok(Fitted { model, log })
}
