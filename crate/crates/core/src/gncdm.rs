//! Generative neural cognitive diagnosis.
//!
//! The learner GDF mixes an implicit branch `theta_imp = FC+(FC+(r))` over the
//! signed response row with the parameter-free explicit branch
//! `theta_exp = sigmoid(r^T Q / sqrt(K))`:
//! `theta = (1 - alpha) theta_imp + alpha theta_exp`. The item GDF is a
//! three-layer network `psi = FC(FC(FC(c)))` over the signed response column.
//!
//! The IRF masks both trait vectors with the item's Q row, aggregates them
//! (`theta_dense = FC+(theta . q)`, `psi_dense = FC(psi . q)`) and feeds the
//! difference to a non-negative three-layer head. Every path from the response
//! row to the predicted probability passes through non-negative weights and
//! monotone activations, so the model is monotone end to end.

use serde::{Deserialize, Serialize};

use crate::data::{
    build_vectors, evidence_vector, IdIndex, QMatrix, ResponseDataset, SignedResponseVector,
};
use crate::error::{Error, Result};
use crate::nn::{self, sigmoid, Activation, DenseLayer, LayerGrads};
use crate::training::{self, bce_logit, epoch_batches, Fitted, SlotMap, TrainLog};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GncdmDims {
    /// Hidden width of the learner branch.
    pub h1: usize,
    /// Hidden width of the item branch.
    pub h2: usize,
    /// Hidden width of the IRF head.
    pub h3: usize,
    /// Width of the aggregated trait representations.
    pub d_agg: usize,
}

impl Default for GncdmDims {
    fn default() -> Self {
        Self {
            h1: 256,
            h2: 256,
            h3: 128,
            d_agg: 32,
        }
    }
}

impl GncdmDims {
    fn check(&self) -> Result<()> {
        if self.h1 == 0 || self.h2 == 0 || self.h3 == 0 || self.d_agg == 0 {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )))
    }
}

/// `sigmoid(r^T Q / sqrt(K))`, with `r` the signed response row.
pub fn theta_exp(y: &SignedResponseVector, q: &QMatrix) -> Result<Vec<f64>> {
    if y.len() != q.n_items() {
        return Err(Error::Dimension {
            expected: q.n_items(),
            actual: y.len(),
            context: "response row vs q-matrix items",
        });
    }
    let k = q.n_knowledge();
    let mut acc = vec![0.0; k];
    for (j, s) in y.observed() {
        for (a, &qv) in acc.iter_mut().zip(q.row(j)) {
            if qv == 1 {
                *a += f64::from(s);
            }
        }
    }
    let scale = (k as f64).sqrt();
    Ok(acc.into_iter().map(|a| sigmoid(a / scale)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GncdmModel {
    pub format_version: u32,
    pub alpha: f64,
    pub dims: GncdmDims,
    /// `M -> h1 -> K`, non-negative, sigmoid.
    pub learner_branch: Vec<DenseLayer>,
    /// `N -> h2 -> h2 -> K`, sigmoid.
    pub item_branch: Vec<DenseLayer>,
    /// `K -> d_agg`, non-negative, identity.
    pub theta_agg: DenseLayer,
    /// `K -> d_agg`, identity.
    pub psi_agg: DenseLayer,
    /// `d_agg -> h3 -> h3 -> 1`, non-negative. The last layer emits the logit;
    /// the IRF applies the output sigmoid.
    pub head: Vec<DenseLayer>,
    pub qmatrix: QMatrix,
    pub learner_index: IdIndex,
    pub item_index: IdIndex,
}

/// Per-concept outcome of a diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GncdmDiagnosis {
    pub theta: Vec<f64>,
    pub n_evidence: usize,
    pub unknown_items: Vec<String>,
}

impl GncdmModel {
    /// Seeded initialisation. `q` must be aligned to `items`.
    pub fn init(
        learners: IdIndex,
        items: IdIndex,
        q: QMatrix,
        alpha: f64,
        dims: GncdmDims,
        seed: u64,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        dims.check()?;
        if learners.is_empty() || items.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !q.is_aligned_to(&items) {
            return Err(Error::QMatrixMismatch(
                "q-matrix rows are not aligned to the item index".into(),
            ));
        }
        let (n, m, k) = (learners.len(), items.len(), q.n_knowledge());
        let mut rng = training::rng(seed);
        let sig = Activation::Sigmoid;
        let id = Activation::Identity;
        let mut learner_branch = vec![
            DenseLayer::init(m, dims.h1, true, sig, &mut rng),
            DenseLayer::init(dims.h1, k, true, sig, &mut rng),
        ];
        let item_branch = vec![
            DenseLayer::init(n, dims.h2, false, sig, &mut rng),
            DenseLayer::init(dims.h2, dims.h2, false, sig, &mut rng),
            DenseLayer::init(dims.h2, k, false, sig, &mut rng),
        ];
        let theta_agg = DenseLayer::init(k, dims.d_agg, true, id, &mut rng);
        let psi_agg = DenseLayer::init(k, dims.d_agg, false, id, &mut rng);
        let mut head = vec![
            DenseLayer::init(dims.d_agg, dims.h3, true, sig, &mut rng),
            DenseLayer::init(dims.h3, dims.h3, true, sig, &mut rng),
            DenseLayer::init(dims.h3, 1, true, id, &mut rng),
        ];
        learner_branch[1].center_bias(0.5);
        head[1].center_bias(0.5);
        head[2].center_bias(0.5);
        Ok(Self {
            format_version: FORMAT_VERSION,
            alpha,
            dims,
            learner_branch,
            item_branch,
            theta_agg,
            psi_agg,
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

    pub fn n_knowledge(&self) -> usize {
        self.qmatrix.n_knowledge()
    }

    pub fn check_version(&self) -> Result<()> {
        if self.format_version == FORMAT_VERSION {
            Ok(())
        } else {
            Err(Error::FormatVersion(self.format_version))
        }
    }

    pub fn theta_imp(&self, y: &SignedResponseVector) -> Result<Vec<f64>> {
        nn::predict(&self.learner_branch, &y.to_f64())
    }

    fn mix(&self, imp: &[f64], exp: &[f64]) -> Vec<f64> {
        imp.iter()
            .zip(exp)
            .map(|(&i, &e)| (1.0 - self.alpha) * i + self.alpha * e)
            .collect()
    }

    /// Learner GDF: knowledge proficiencies from a signed response row.
    pub fn theta(&self, y: &SignedResponseVector) -> Result<Vec<f64>> {
        let exp = theta_exp(y, &self.qmatrix)?;
        let imp = self.theta_imp(y)?;
        Ok(self.mix(&imp, &exp))
    }

    /// Item GDF: item traits from a signed response column.
    pub fn psi(&self, y: &SignedResponseVector) -> Result<Vec<f64>> {
        nn::predict(&self.item_branch, &y.to_f64())
    }

    /// Proficiencies of a learner with no responses. Every empty learner maps
    /// here.
    pub fn empty_learner_theta(&self) -> Vec<f64> {
        self.theta(&SignedResponseVector::zeros(self.n_items()))
            .expect("zero row has the model's width")
    }

    fn masked(v: &[f64], q: &[u8]) -> Vec<f64> {
        v.iter()
            .zip(q)
            .map(|(&x, &m)| if m == 1 { x } else { 0.0 })
            .collect()
    }

    fn check_k(&self, v: &[f64], context: &'static str) -> Result<()> {
        if v.len() != self.n_knowledge() {
            return Err(Error::Dimension {
                expected: self.n_knowledge(),
                actual: v.len(),
                context,
            });
        }
        Ok(())
    }

    /// Correct-response probability for traits `theta`, `psi` on an item with
    /// Q row `q_row`.
    pub fn irf(&self, theta: &[f64], psi: &[f64], q_row: &[u8]) -> Result<f64> {
        self.check_k(theta, "theta")?;
        self.check_k(psi, "psi")?;
        if q_row.len() != self.n_knowledge() {
            return Err(Error::Dimension {
                expected: self.n_knowledge(),
                actual: q_row.len(),
                context: "q row",
            });
        }
        if !q_row.contains(&1) {
            return Err(Error::Config("q row requires no concept".into()));
        }
        let td = self.theta_agg.forward(&Self::masked(theta, q_row))?;
        let pd = self.psi_agg.forward(&Self::masked(psi, q_row))?;
        let diff: Vec<f64> = td.iter().zip(&pd).map(|(a, b)| a - b).collect();
        Ok(sigmoid(nn::predict(&self.head, &diff)?[0]))
    }

    /// All learner proficiencies and item traits generated from `rows` / `cols`.
    pub fn traits(
        &self,
        rows: &[SignedResponseVector],
        cols: &[SignedResponseVector],
    ) -> Result<GncdmTraits> {
        Ok(GncdmTraits {
            thetas: rows.iter().map(|y| self.theta(y)).collect::<Result<_>>()?,
            psis: cols.iter().map(|y| self.psi(y)).collect::<Result<_>>()?,
        })
    }

    /// Traits generated from `ds`, which must share the model's indices.
    pub fn traits_from(&self, ds: &ResponseDataset) -> Result<GncdmTraits> {
        self.check_dataset(ds)?;
        let (rows, cols) = build_vectors(ds);
        self.traits(&rows, &cols)
    }

    fn check_dataset(&self, ds: &ResponseDataset) -> Result<()> {
        if ds.n_learners() != self.n_learners() || ds.n_items() != self.n_items() {
            return Err(Error::Dimension {
                expected: self.n_learners() * self.n_items(),
                actual: ds.n_learners() * ds.n_items(),
                context: "dataset index vs model index",
            });
        }
        Ok(())
    }

    /// Mean cross-entropy over `ds` with traits generated from `ds`.
    pub fn mean_loss(&self, ds: &ResponseDataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let traits = self.traits_from(ds)?;
        let mut total = 0.0;
        for r in ds.responses() {
            let z = self.logit(
                &traits.thetas[r.learner],
                &traits.psis[r.item],
                self.qmatrix.row(r.item),
            )?;
            total += bce_logit(z, r.score);
        }
        Ok(total / ds.len() as f64)
    }

    fn logit(&self, theta: &[f64], psi: &[f64], q_row: &[u8]) -> Result<f64> {
        let td = self.theta_agg.forward(&Self::masked(theta, q_row))?;
        let pd = self.psi_agg.forward(&Self::masked(psi, q_row))?;
        let diff: Vec<f64> = td.iter().zip(&pd).map(|(a, b)| a - b).collect();
        Ok(nn::predict(&self.head, &diff)?[0])
    }

    /// Instant diagnosis of a learner outside the training cohort. Pure.
    pub fn diagnose_new<S: AsRef<str>>(&self, responses: &[(S, u8)]) -> Result<GncdmDiagnosis> {
        let evidence = evidence_vector(&self.item_index, responses)?;
        Ok(GncdmDiagnosis {
            theta: self.theta(&evidence.vector)?,
            n_evidence: evidence.vector.observed_count(),
            unknown_items: evidence.unknown,
        })
    }

    /// Every layer, in a fixed order shared with [`GncdmGrads::layers`].
    pub fn layers(&self) -> Vec<&DenseLayer> {
        let mut out: Vec<&DenseLayer> = self
            .learner_branch
            .iter()
            .chain(&self.item_branch)
            .collect();
        out.push(&self.theta_agg);
        out.push(&self.psi_agg);
        out.extend(&self.head);
        out
    }

    pub fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        let mut out: Vec<&mut DenseLayer> = self
            .learner_branch
            .iter_mut()
            .chain(self.item_branch.iter_mut())
            .collect();
        out.push(&mut self.theta_agg);
        out.push(&mut self.psi_agg);
        out.extend(self.head.iter_mut());
        out
    }
}

/// Traits of a whole cohort, indexed like the dataset they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GncdmTraits {
    pub thetas: Vec<Vec<f64>>,
    pub psis: Vec<Vec<f64>>,
}

impl GncdmTraits {
    pub fn prob(&self, model: &GncdmModel, learner: usize, item: usize) -> Result<f64> {
        model.irf(
            &self.thetas[learner],
            &self.psis[item],
            model.qmatrix.row(item),
        )
    }
}

/// Diagnostic report: proficiencies with labels plus the raw per-concept
/// correct rates of the evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GncdmReport {
    pub knowledge_labels: Vec<String>,
    pub theta: Vec<f64>,
    /// Correct rate over answered items requiring each concept; `None` when
    /// no answered item requires it.
    pub knowledge_correct_rates: Vec<Option<f64>>,
    pub n_evidence: usize,
}

pub fn report<S: AsRef<str>>(model: &GncdmModel, responses: &[(S, u8)]) -> Result<GncdmReport> {
    let diagnosis = model.diagnose_new(responses)?;
    let evidence = evidence_vector(&model.item_index, responses)?;
    let k = model.n_knowledge();
    let mut correct = vec![0usize; k];
    let mut answered = vec![0usize; k];
    for (j, s) in evidence.vector.observed() {
        for (c, &qv) in model.qmatrix.row(j).iter().enumerate() {
            if qv == 1 {
                answered[c] += 1;
                correct[c] += usize::from(s > 0);
            }
        }
    }
    Ok(GncdmReport {
        knowledge_labels: model.qmatrix.knowledge_labels().to_vec(),
        theta: diagnosis.theta,
        knowledge_correct_rates: correct
            .iter()
            .zip(&answered)
            .map(|(&c, &a)| (a > 0).then(|| c as f64 / a as f64))
            .collect(),
        n_evidence: diagnosis.n_evidence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GncdmConfig {
    pub alpha: f64,
    pub dims: GncdmDims,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GncdmConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            dims: GncdmDims::default(),
            lr: 0.01,
            epochs: 20,
            batch_size: training::DEFAULT_BATCH_SIZE,
            seed: 0,
        }
    }
}

/// Gradients for every layer of a [`GncdmModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct GncdmGrads {
    pub learner_branch: Vec<LayerGrads>,
    pub item_branch: Vec<LayerGrads>,
    pub theta_agg: LayerGrads,
    pub psi_agg: LayerGrads,
    pub head: Vec<LayerGrads>,
}

impl GncdmGrads {
    pub fn zeros(model: &GncdmModel) -> Self {
        Self {
            learner_branch: LayerGrads::for_stack(&model.learner_branch),
            item_branch: LayerGrads::for_stack(&model.item_branch),
            theta_agg: LayerGrads::zeros_like(&model.theta_agg),
            psi_agg: LayerGrads::zeros_like(&model.psi_agg),
            head: LayerGrads::for_stack(&model.head),
        }
    }

    pub fn layers(&self) -> Vec<&LayerGrads> {
        let mut out: Vec<&LayerGrads> = self
            .learner_branch
            .iter()
            .chain(&self.item_branch)
            .collect();
        out.push(&self.theta_agg);
        out.push(&self.psi_agg);
        out.extend(&self.head);
        out
    }

    fn is_finite(&self) -> bool {
        self.layers().iter().all(|g| g.is_finite())
    }
}

/// Network inputs derived from the training responses, which stay fixed
/// while the parameters move.
struct Inputs {
    rows: Vec<Vec<f64>>,
    cols: Vec<Vec<f64>>,
    theta_exp: Vec<Vec<f64>>,
}

impl Inputs {
    fn new(ds: &ResponseDataset, q: &QMatrix) -> Result<Self> {
        let (rows, cols) = build_vectors(ds);
        Ok(Self {
            theta_exp: rows
                .iter()
                .map(|y| theta_exp(y, q))
                .collect::<Result<_>>()?,
            rows: rows.iter().map(SignedResponseVector::to_f64).collect(),
            cols: cols.iter().map(SignedResponseVector::to_f64).collect(),
        })
    }
}

/// Mean cross-entropy of `batch` and its gradients, with traits generated
/// from the fixed `inputs`. Each distinct learner and item in the batch is
/// run through its branch once.
fn batch_loss_and_grads(
    model: &GncdmModel,
    inputs: &Inputs,
    batch: &[crate::data::Response],
    learners: &mut SlotMap,
    items: &mut SlotMap,
    grads: &mut GncdmGrads,
) -> Result<f64> {
    learners.clear();
    items.clear();
    for r in batch {
        learners.slot(r.learner);
        items.slot(r.item);
    }
    let k = model.n_knowledge();
    let mut l_tapes = Vec::with_capacity(learners.members().len());
    let mut thetas = Vec::with_capacity(learners.members().len());
    for &i in learners.members() {
        let (imp, tape) = nn::forward(&model.learner_branch, &inputs.rows[i])?;
        thetas.push(model.mix(&imp, &inputs.theta_exp[i]));
        l_tapes.push(tape);
    }
    let mut i_tapes = Vec::with_capacity(items.members().len());
    let mut psis = Vec::with_capacity(items.members().len());
    for &j in items.members() {
        let (psi, tape) = nn::forward(&model.item_branch, &inputs.cols[j])?;
        psis.push(psi);
        i_tapes.push(tape);
    }

    let mut g_theta = vec![vec![0.0; k]; thetas.len()];
    let mut g_psi = vec![vec![0.0; k]; psis.len()];
    let theta_agg = std::slice::from_ref(&model.theta_agg);
    let psi_agg = std::slice::from_ref(&model.psi_agg);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for r in batch {
        let (li, ij) = (learners.slot(r.learner), items.slot(r.item));
        let q = model.qmatrix.row(r.item);
        let (td, t_tape) = nn::forward(theta_agg, &GncdmModel::masked(&thetas[li], q))?;
        let (pd, p_tape) = nn::forward(psi_agg, &GncdmModel::masked(&psis[ij], q))?;
        let diff: Vec<f64> = td.iter().zip(&pd).map(|(a, b)| a - b).collect();
        let (z, h_tape) = nn::forward(&model.head, &diff)?;
        let z = z[0];
        loss += bce_logit(z, r.score);
        let dz = scale * (sigmoid(z) - f64::from(r.score));
        let d_diff = nn::backward(&model.head, &h_tape, &[dz], &mut grads.head)?;
        let d_theta = nn::backward(
            theta_agg,
            &t_tape,
            &d_diff,
            std::slice::from_mut(&mut grads.theta_agg),
        )?;
        let neg: Vec<f64> = d_diff.iter().map(|d| -d).collect();
        let d_psi = nn::backward(
            psi_agg,
            &p_tape,
            &neg,
            std::slice::from_mut(&mut grads.psi_agg),
        )?;
        for c in 0..k {
            if q[c] == 1 {
                g_theta[li][c] += d_theta[c];
                g_psi[ij][c] += d_psi[c];
            }
        }
    }

    if model.alpha < 1.0 {
        for (tape, g) in l_tapes.iter().zip(&g_theta) {
            let g_imp: Vec<f64> = g.iter().map(|v| (1.0 - model.alpha) * v).collect();
            nn::backward_params(
                &model.learner_branch,
                tape,
                &g_imp,
                &mut grads.learner_branch,
            )?;
        }
    }
    for (tape, g) in i_tapes.iter().zip(&g_psi) {
        nn::backward_params(&model.item_branch, tape, g, &mut grads.item_branch)?;
    }
    Ok(loss * scale)
}

/// Mean cross-entropy over `ds` and its exact gradients, generating traits
/// from `ds`. Exposed for gradient checks.
pub fn loss_and_grads(model: &GncdmModel, ds: &ResponseDataset) -> Result<(f64, GncdmGrads)> {
    model.check_dataset(ds)?;
    let inputs = Inputs::new(ds, &model.qmatrix)?;
    let mut grads = GncdmGrads::zeros(model);
    let mut learners = SlotMap::new(model.n_learners());
    let mut items = SlotMap::new(model.n_items());
    let loss = batch_loss_and_grads(
        model,
        &inputs,
        ds.responses(),
        &mut learners,
        &mut items,
        &mut grads,
    )?;
    Ok((loss, grads))
}

fn step(model: &mut GncdmModel, grads: &GncdmGrads, lr: f64) -> Result<()> {
    nn::sgd_step_stack(&mut model.learner_branch, &grads.learner_branch, lr)?;
    nn::sgd_step_stack(&mut model.item_branch, &grads.item_branch, lr)?;
    nn::sgd_step(&mut model.theta_agg, &grads.theta_agg, lr)?;
    nn::sgd_step(&mut model.psi_agg, &grads.psi_agg, lr)?;
    nn::sgd_step_stack(&mut model.head, &grads.head, lr)
}

/// Trains every network parameter by mini-batch gradient descent on the
/// batch-mean cross-entropy. `q` is aligned to the dataset's items first.
/// `epochs = 0` returns the seeded initialisation.
pub fn train(ds: &ResponseDataset, q: &QMatrix, cfg: &GncdmConfig) -> Result<Fitted<GncdmModel>> {
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
    let mut model = GncdmModel::init(
        ds.learners().clone(),
        ds.items().clone(),
        q,
        cfg.alpha,
        cfg.dims,
        cfg.seed,
    )?;
    let inputs = Inputs::new(ds, &model.qmatrix)?;
    let mut rng = training::rng(cfg.seed.wrapping_add(1));
    let mut learners = SlotMap::new(model.n_learners());
    let mut items = SlotMap::new(model.n_items());
    let mut grads = GncdmGrads::zeros(&model);
    let mut log = TrainLog {
        losses: vec![model.mean_loss(ds)?],
        batches_per_epoch: training::n_batches(ds.len(), cfg.batch_size),
    };
    for epoch in 1..=cfg.epochs {
        for batch in epoch_batches(ds.responses(), cfg.batch_size, &mut rng) {
            for g in grads.layers_mut() {
                g.reset();
            }
            let loss = batch_loss_and_grads(
                &model,
                &inputs,
                &batch,
                &mut learners,
                &mut items,
                &mut grads,
            )?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss",
                    epoch,
                });
            }
            if !grads.is_finite() {
                return Err(Error::NonFinite {
                    what: "gradient",
                    epoch,
                });
            }
            step(&mut model, &grads, cfg.lr)?;
        }
        let loss = model.mean_loss(ds)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                epoch,
            });
        }
        log::debug!("gncdm epoch {epoch}: mean cross-entropy {loss:.6}");
        log.losses.push(loss);
    }
    Ok(Fitted { model, log })
}

impl GncdmGrads {
    fn layers_mut(&mut self) -> Vec<&mut LayerGrads> {
        let mut out: Vec<&mut LayerGrads> = self
            .learner_branch
            .iter_mut()
            .chain(self.item_branch.iter_mut())
            .collect();
        out.push(&mut self.theta_agg);
        out.push(&mut self.psi_agg);
        out.extend(self.head.iter_mut());
        out
    }
}
