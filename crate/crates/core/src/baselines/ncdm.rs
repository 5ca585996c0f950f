//! Transductive NCDM. Proficiency `theta = sigmoid(theta_raw)` (N x K),
//! difficulty `diff = sigmoid(diff_raw)` (M x K) and discrimination
//! `disc = sigmoid(disc_raw)` (M) are free parameters. The prediction feeds
//! `disc * (theta - diff) . q` to a non-negative three-layer head.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{IdIndex, QMatrix, ResponseDataset};
use crate::error::{Error, Result};
use crate::nn::{self, sigmoid, Activation, DenseLayer, LayerGrads};
use crate::training::{self, bce_logit, epoch_batches, Fitted, SlotMap, TrainLog};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransductiveNcdmModel {
    pub format_version: u32,
    pub n_knowledge: usize,
    /// Row-major `N x K`.
    pub theta_raw: Vec<f64>,
    /// Row-major `M x K`.
    pub diff_raw: Vec<f64>,
    pub disc_raw: Vec<f64>,
    /// `K -> hidden -> hidden -> 1`, non-negative; the last layer emits the
    /// logit.
    pub head: Vec<DenseLayer>,
    pub qmatrix: QMatrix,
    pub learner_index: IdIndex,
    pub item_index: IdIndex,
}

impl TransductiveNcdmModel {
    /// Embeddings ~ U(-1, 1); head as in the generative model.
    pub fn init(
        learners: IdIndex,
        items: IdIndex,
        q: QMatrix,
        hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Config("head width must be positive".into()));
        }
        if !q.is_aligned_to(&items) {
            return Err(Error::QMatrixMismatch(
                "q-matrix rows are not aligned to the item index".into(),
            ));
        }
        let k = q.n_knowledge();
        let mut rng = training::rng(seed);
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect() };
        let theta_raw = draw(learners.len() * k);
        let diff_raw = draw(items.len() * k);
        let disc_raw = draw(items.len());
        let mut head = vec![
            DenseLayer::init(k, hidden, true, Activation::Sigmoid, &mut rng),
            DenseLayer::init(hidden, hidden, true, Activation::Sigmoid, &mut rng),
            DenseLayer::init(hidden, 1, true, Activation::Identity, &mut rng),
        ];
        head[1].center_bias(0.5);
        head[2].center_bias(0.5);
        Ok(Self {
            format_version: FORMAT_VERSION,
            n_knowledge: k,
            theta_raw,
            diff_raw,
            disc_raw,
            head,
            qmatrix: q,
            learner_index: learners,
            item_index: items,
        })
    }

    pub fn n_learners(&self) -> usize {
        self.learner_index.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_index.len()
    }

    pub fn check_version(&self) -> Result<()> {
        if self.format_version == FORMAT_VERSION {
            Ok(())
        } else {
            Err(Error::FormatVersion(self.format_version))
        }
    }

    /// Proficiency vector of a training learner.
    pub fn theta(&self, learner: usize) -> Vec<f64> {
        let k = self.n_knowledge;
        self.theta_raw[learner * k..(learner + 1) * k]
            .iter()
            .map(|&v| sigmoid(v))
            .collect()
    }

    pub fn thetas(&self) -> Vec<Vec<f64>> {
        (0..self.n_learners()).map(|i| self.theta(i)).collect()
    }

    /// Item traits: per-concept difficulty followed by discrimination.
    pub fn item_traits(&self, item: usize) -> Vec<f64> {
        let k = self.n_knowledge;
        let mut out: Vec<f64> = self.diff_raw[item * k..(item + 1) * k]
            .iter()
            .map(|&v| sigmoid(v))
            .collect();
        out.push(sigmoid(self.disc_raw[item]));
        out
    }

    fn item_input(&self, theta: &[f64], item: usize) -> Vec<f64> {
        let k = self.n_knowledge;
        let disc = sigmoid(self.disc_raw[item]);
        let diff = &self.diff_raw[item * k..(item + 1) * k];
        theta
            .iter()
            .zip(diff)
            .zip(self.qmatrix.row(item))
            .map(|((&t, &d), &q)| if q == 1 { disc * (t - sigmoid(d)) } else { 0.0 })
            .collect()
    }

    /// Correct-response probability for an arbitrary proficiency vector on a
    /// training item.
    pub fn irf(&self, theta: &[f64], item: usize) -> Result<f64> {
        if item >= self.n_items() {
            return Err(Error::OutOfRange {
                what: "item",
                index: item,
                len: self.n_items(),
            });
        }
        if theta.len() != self.n_knowledge {
            return Err(Error::Dimension {
                expected: self.n_knowledge,
                actual: theta.len(),
                context: "theta",
            });
        }
        Ok(sigmoid(
            nn::predict(&self.head, &self.item_input(theta, item))?[0],
        ))
    }

    pub fn predict(&self, learner: usize, item: usize) -> Result<f64> {
        if learner >= self.n_learners() {
            return Err(Error::OutOfRange {
                what: "learner",
                index: learner,
                len: self.n_learners(),
            });
        }
        self.irf(&self.theta(learner), item)
    }

    pub fn mean_loss(&self, ds: &ResponseDataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut total = 0.0;
        for r in ds.responses() {
            let x = self.item_input(&self.theta(r.learner), r.item);
            total += bce_logit(nn::predict(&self.head, &x)?[0], r.score);
        }
        Ok(total / ds.len() as f64)
    }
}

/// Gradients of the batch-mean cross-entropy. Embedding gradients are with
/// respect to the raw (pre-sigmoid) parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NcdmGrads {
    pub theta_raw: Vec<f64>,
    pub diff_raw: Vec<f64>,
    pub disc_raw: Vec<f64>,
    pub head: Vec<LayerGrads>,
}

impl NcdmGrads {
    pub fn zeros(model: &TransductiveNcdmModel) -> Self {
        Self {
            theta_raw: vec![0.0; model.theta_raw.len()],
            diff_raw: vec![0.0; model.diff_raw.len()],
            disc_raw: vec![0.0; model.disc_raw.len()],
            head: LayerGrads::for_stack(&model.head),
        }
    }
}

fn batch_loss_and_grads(
    model: &TransductiveNcdmModel,
    batch: &[crate::data::Response],
    grads: &mut NcdmGrads,
) -> Result<f64> {
    let k = model.n_knowledge;
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for r in batch {
        let (i, j) = (r.learner, r.item);
        let theta = model.theta(i);
        let x = model.item_input(&theta, j);
        let (z, tape) = nn::forward(&model.head, &x)?;
        loss += bce_logit(z[0], r.score);
        let dz = scale * (sigmoid(z[0]) - f64::from(r.score));
        let dx = nn::backward(&model.head, &tape, &[dz], &mut grads.head)?;
        let disc = sigmoid(model.disc_raw[j]);
        let q = model.qmatrix.row(j);
        let mut d_disc = 0.0;
        for c in 0..k {
            if q[c] == 0 {
                continue;
            }
            let diff = sigmoid(model.diff_raw[j * k + c]);
            grads.theta_raw[i * k + c] += dx[c] * disc * theta[c] * (1.0 - theta[c]);
            grads.diff_raw[j * k + c] -= dx[c] * disc * diff * (1.0 - diff);
            d_disc += dx[c] * (theta[c] - diff);
        }
        grads.disc_raw[j] += d_disc * disc * (1.0 - disc);
    }
    Ok(loss * scale)
}

/// Mean cross-entropy over `ds` and its exact gradients. Exposed for
/// gradient checks.
pub fn loss_and_grads(
    model: &TransductiveNcdmModel,
    ds: &ResponseDataset,
) -> Result<(f64, NcdmGrads)> {
    let mut grads = NcdmGrads::zeros(model);
    let loss = batch_loss_and_grads(model, ds.responses(), &mut grads)?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NcdmConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for NcdmConfig {
    fn default() -> Self {
        Self {
            hidden: crate::gncdm::GncdmDims::default().h3,
            lr: 0.01,
            epochs: 20,
            batch_size: training::DEFAULT_BATCH_SIZE,
            seed: 0,
        }
    }
}

pub fn fit(
    ds: &ResponseDataset,
    q: &QMatrix,
    cfg: &NcdmConfig,
) -> Result<Fitted<TransductiveNcdmModel>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be positive, got {}",
            cfg.lr
        )));
    }
    let q = q.aligned_to(ds.items())?;
    let mut model = TransductiveNcdmModel::init(
        ds.learners().clone(),
        ds.items().clone(),
        q,
        cfg.hidden,
        cfg.seed,
    )?;
    let k = model.n_knowledge;
    let mut rng = training::rng(cfg.seed.wrapping_add(1));
    let mut grads = NcdmGrads::zeros(&model);
    let mut learners = SlotMap::new(model.n_learners());
    let mut items = SlotMap::new(model.n_items());
    let mut log = TrainLog {
        losses: vec![model.mean_loss(ds)?],
        batches_per_epoch: training::n_batches(ds.len(), cfg.batch_size),
    };
    for epoch in 1..=cfg.epochs {
        for batch in epoch_batches(ds.responses(), cfg.batch_size, &mut rng) {
            grads.head.iter_mut().for_each(LayerGrads::reset);
            let loss = batch_loss_and_grads(&model, &batch, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss",
                    epoch,
                });
            }
            nn::sgd_step_stack(&mut model.head, &grads.head, cfg.lr)?;
            // Embeddings step on the summed loss, as the IRT parameters do;
            // the mean would shrink each learner's step by the batch size.
            let emb_lr = cfg.lr * batch.len() as f64;
            learners.clear();
            items.clear();
            for r in &batch {
                learners.slot(r.learner);
                items.slot(r.item);
            }
            for &i in learners.members() {
                for c in i * k..(i + 1) * k {
                    model.theta_raw[c] -= emb_lr * grads.theta_raw[c];
                    grads.theta_raw[c] = 0.0;
                }
            }
            for &j in items.members() {
                for c in j * k..(j + 1) * k {
                    model.diff_raw[c] -= emb_lr * grads.diff_raw[c];
                    grads.diff_raw[c] = 0.0;
                }
                model.disc_raw[j] -= emb_lr * grads.disc_raw[j];
                grads.disc_raw[j] = 0.0;
            }
        }
        let loss = model.mean_loss(ds)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                epoch,
            });
        }
        log::debug!("ncdm epoch {epoch}: mean cross-entropy {loss:.6}");
        log.losses.push(loss);
    }
    Ok(Fitted { model, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synth_irt, synth_qmatrix};

    fn toy(seed: u64) -> (TransductiveNcdmModel, ResponseDataset) {
        let (ds, _) = synth_irt(6, 6, seed, 0.8).unwrap();
        let q = synth_qmatrix(ds.items(), 3, 0.3, seed).unwrap();
        let m = TransductiveNcdmModel::init(ds.learners().clone(), ds.items().clone(), q, 4, seed)
            .unwrap();
        (m, ds)
    }

    #[test]
    fn masked_concept_is_ignored_and_theta_is_monotone() {
        let (m, _) = toy(1);
        let j = (0..6).find(|&j| m.qmatrix.row(j).contains(&0)).unwrap();
        let row = m.qmatrix.row(j).to_vec();
        let masked = row.iter().position(|&v| v == 0).unwrap();
        let used = row.iter().position(|&v| v == 1).unwrap();
        let theta = vec![0.4, 0.5, 0.6];
        let base = m.irf(&theta, j).unwrap();
        let mut t = theta.clone();
        t[masked] = 0.99;
        assert_eq!(m.irf(&t, j).unwrap(), base);
        let mut t = theta.clone();
        t[used] = 0.9;
        assert!(m.irf(&t, j).unwrap() >= base);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (mut m, ds) = toy(2);
        let (_, g) = loss_and_grads(&m, &ds).unwrap();
        let h = 1e-5;
        let check = |g: f64, fd: f64| {
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "{g} vs {fd}");
        };
        macro_rules! fd_vec {
            ($field:ident) => {
                for p in 0..m.$field.len() {
                    let orig = m.$field[p];
                    m.$field[p] = orig + h;
                    let up = loss_and_grads(&m, &ds).unwrap().0;
                    m.$field[p] = orig - h;
                    let down = loss_and_grads(&m, &ds).unwrap().0;
                    m.$field[p] = orig;
                    check(g.$field[p], (up - down) / (2.0 * h));
                }
            };
        }
        fd_vec!(theta_raw);
        fd_vec!(diff_raw);
        fd_vec!(disc_raw);
        for l in 0..m.head.len() {
            for p in 0..m.head[l].n_params() {
                let orig = m.head[l].param(p);
                *m.head[l].param_mut(p) = orig + h;
                let up = loss_and_grads(&m, &ds).unwrap().0;
                *m.head[l].param_mut(p) = orig - h;
                let down = loss_and_grads(&m, &ds).unwrap().0;
                *m.head[l].param_mut(p) = orig;
                let gl = &g.head[l];
                let analytic = gl.weights.iter().chain(&gl.bias).nth(p).copied().unwrap();
                check(analytic, (up - down) / (2.0 * h));
            }
        }
    }

    #[test]
    fn loss_decreases_on_small_synthetic_set() {
        let (ds, _) = synth_irt(50, 10, 8, 1.0).unwrap();
        let q = synth_qmatrix(ds.items(), 3, 0.3, 8).unwrap();
        let fit = fit(
            &ds,
            &q,
            &NcdmConfig {
                epochs: 10,
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            fit.log.losses[10] < fit.log.losses[0],
            "{:?}",
            fit.log.losses
        );
        assert!(fit
            .model
            .head
            .iter()
            .all(|l| l.weights().iter().all(|&w| w >= 0.0)));
    }

    #[test]
    fn fit_is_seeded() {
        let (ds, _) = synth_irt(20, 6, 4, 1.0).unwrap();
        let q = synth_qmatrix(ds.items(), 2, 0.3, 4).unwrap();
        let cfg = NcdmConfig {
            epochs: 2,
            hidden: 8,
            seed: 7,
            ..Default::default()
        };
        assert_eq!(
            fit(&ds, &q, &cfg).unwrap().model,
            fit(&ds, &q, &cfg).unwrap().model
        );
        let zero = fit(&ds, &q, &NcdmConfig { epochs: 0, ..cfg })
            .unwrap()
            .model;
        let init =
            TransductiveNcdmModel::init(ds.learners().clone(), ds.items().clone(), q.clone(), 8, 7)
                .unwrap();
        assert_eq!(zero, init);
    }
}
