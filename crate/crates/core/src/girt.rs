//! Generative item response theory.
//!
//! Traits are generated from response vectors rather than fitted per learner.
//! With proxy parameters `w_theta` (per learner), `w_a` and `w_b` (per item),
//! a scale `lambda` and signed responses `r` in {-1, +1}:
//!
//! ```text
//! theta_i = mean_{j observed}  w_b[j] + lambda * r_ij / w_a[j]
//! a_j     = mean_{i observed} |lambda * r_ij / (w_theta[i] - w_b[j])|
//! b_j     = mean_{i observed}  w_theta[i] - lambda * r_ij / w_a[j]
//! ```
//!
//! and the 2PL response function `P(y = 1) = sigmoid(a (theta - b))` scores
//! the reconstruction. Training adjusts only the proxies.
//!
//! Keeping `w_theta, w_b` in `(alpha, beta)` and `w_a` in `(epsilon, zeta)`
//! makes `lambda` control the trait scale: `lambda <= epsilon (q - beta)` and
//! `lambda <= epsilon (alpha - p)` keep every generated `theta` inside
//! `(p, q)`, while `lambda > zeta (beta - alpha) / 2` guarantees
//! `theta_i > b_j` whenever every response is correct.

use serde::{Deserialize, Serialize};

use crate::data::{build_vectors, evidence_vector, IdIndex, ResponseDataset, SignedResponseVector};
use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::training::{self, bce_logit, epoch_batches, Fitted, SlotMap, TrainLog};

pub const FORMAT_VERSION: u32 = 1;

/// Minimum magnitude of `w_theta[i] - w_b[j]` in the discrimination formula.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

/// Proxies are kept this far inside their open intervals.
pub const BOUND_MARGIN: f64 = 1e-6;

/// 2PL response probability `sigmoid(a (theta - b))`.
pub fn irf(theta: f64, a: f64, b: f64) -> Result<f64> {
    if a.is_nan() || a <= 0.0 {
        return Err(Error::Config(format!(
            "discrimination must be positive, got {a}"
        )));
    }
    Ok(sigmoid(a * (theta - b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GirtBounds {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub zeta: f64,
    pub p: f64,
    pub q: f64,
}

impl Default for GirtBounds {
    fn default() -> Self {
        Self {
            alpha: -1.0,
            beta: 1.0,
            epsilon: 0.5,
            zeta: 1.0,
            p: -4.0,
            q: 4.0,
        }
    }
}

impl GirtBounds {
    /// Checks the ordering constraints `alpha < beta`, `0 < epsilon < zeta`,
    /// `p < alpha` and `q > beta`.
    pub fn check(&self) -> Result<()> {
        let ok = self.alpha < self.beta
            && 0.0 < self.epsilon
            && self.epsilon < self.zeta
            && self.p < self.alpha
            && self.q > self.beta
            && [
                self.alpha,
                self.beta,
                self.epsilon,
                self.zeta,
                self.p,
                self.q,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "bounds must satisfy alpha < beta, 0 < epsilon < zeta, p < alpha, q > beta: {self:?}"
            )))
        }
    }

    fn theta_range(&self) -> (f64, f64) {
        (self.alpha + BOUND_MARGIN, self.beta - BOUND_MARGIN)
    }

    fn a_range(&self) -> (f64, f64) {
        (self.epsilon + BOUND_MARGIN, self.zeta - BOUND_MARGIN)
    }
}

/// Feasible scale interval `(lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaInterval {
    pub lo: f64,
    pub hi: f64,
}

impl LambdaInterval {
    pub fn contains(&self, lambda: f64) -> bool {
        lambda > self.lo && lambda <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

impl std::fmt::Display for LambdaInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({:?}, {:?}]", self.lo, self.hi)
    }
}

/// `lo = zeta (beta - alpha) / 2` from the all-correct cold-start case,
/// `hi = min(epsilon (q - beta), epsilon (alpha - p))` from the trait range.
pub fn validate_lambda(bounds: &GirtBounds) -> Result<LambdaInterval> {
    bounds.check()?;
    let lo = 0.5 * bounds.zeta * (bounds.beta - bounds.alpha);
    let hi =
        (bounds.epsilon * (bounds.q - bounds.beta)).min(bounds.epsilon * (bounds.alpha - bounds.p));
    if lo >= hi {
        return Err(Error::InfeasibleBounds { lo, hi });
    }
    Ok(LambdaInterval { lo, hi })
}

/// [`validate_lambda`] plus membership of `lambda` in the interval.
pub fn check_lambda(bounds: &GirtBounds, lambda: f64) -> Result<LambdaInterval> {
    let interval = validate_lambda(bounds)?;
    if !interval.contains(lambda) {
        return Err(Error::InfeasibleLambda {
            lambda,
            lo: interval.lo,
            hi: interval.hi,
        });
    }
    Ok(interval)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirtModel {
    pub format_version: u32,
    pub omega_theta: Vec<f64>,
    pub omega_a: Vec<f64>,
    pub omega_b: Vec<f64>,
    pub lambda: f64,
    pub bounds: GirtBounds,
    pub learner_index: IdIndex,
    pub item_index: IdIndex,
    /// Generated abilities of the training cohort, for percentile reports.
    #[serde(default)]
    pub cohort_thetas: Vec<f64>,
}

/// Item traits generated from a response column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemTraits {
    pub a: f64,
    pub b: f64,
}

fn clamped_gap(gap: f64) -> (f64, bool) {
    if gap.abs() < DENOMINATOR_FLOOR {
        (
            if gap < 0.0 {
                -DENOMINATOR_FLOOR
            } else {
                DENOMINATOR_FLOOR
            },
            true,
        )
    } else {
        (gap, false)
    }
}

impl GirtModel {
    /// Proxies drawn uniformly inside their (margin-shrunk) bound intervals.
    pub fn init(
        learners: IdIndex,
        items: IdIndex,
        bounds: GirtBounds,
        lambda: f64,
        seed: u64,
    ) -> Result<Self> {
        check_lambda(&bounds, lambda)?;
        let mut rng = training::rng(seed);
        let uniform = |rng: &mut training::Rng, (lo, hi): (f64, f64)| {
            lo + (hi - lo) * rand::Rng::random::<f64>(rng)
        };
        let omega_theta = (0..learners.len())
            .map(|_| uniform(&mut rng, bounds.theta_range()))
            .collect();
        let omega_a = (0..items.len())
            .map(|_| uniform(&mut rng, bounds.a_range()))
            .collect();
        let omega_b = (0..items.len())
            .map(|_| uniform(&mut rng, bounds.theta_range()))
            .collect();
        Ok(Self {
            format_version: FORMAT_VERSION,
            omega_theta,
            omega_a,
            omega_b,
            lambda,
            bounds,
            learner_index: learners,
            item_index: items,
            cohort_thetas: Vec::new(),
        })
    }

    pub fn n_learners(&self) -> usize {
        self.omega_theta.len()
    }

    pub fn n_items(&self) -> usize {
        self.omega_a.len()
    }

    /// Learner generative diagnosis: the mean of per-item ability estimates.
    pub fn theta(&self, y: &SignedResponseVector) -> Result<f64> {
        if y.len() != self.n_items() {
            return Err(Error::Dimension {
                expected: self.n_items(),
                actual: y.len(),
                context: "learner response vector",
            });
        }
        if y.observed_count() == 0 {
            return Err(Error::NoEvidence);
        }
        let sum: f64 = y
            .observed()
            .map(|(j, r)| self.omega_b[j] + self.lambda * f64::from(r) / self.omega_a[j])
            .sum();
        Ok(sum / y.observed_count() as f64)
    }

    /// Item generative diagnosis for item `item` from its response column.
    pub fn item_traits(&self, item: usize, y: &SignedResponseVector) -> Result<ItemTraits> {
        if item >= self.n_items() {
            return Err(Error::OutOfRange {
                what: "item",
                index: item,
                len: self.n_items(),
            });
        }
        if y.len() != self.n_learners() {
            return Err(Error::Dimension {
                expected: self.n_learners(),
                actual: y.len(),
                context: "item response vector",
            });
        }
        if y.observed_count() == 0 {
            return Err(Error::NoEvidence);
        }
        let (wa, wb) = (self.omega_a[item], self.omega_b[item]);
        let (mut a, mut b) = (0.0, 0.0);
        for (i, r) in y.observed() {
            let r = f64::from(r);
            let (gap, _) = clamped_gap(self.omega_theta[i] - wb);
            a += (self.lambda * r / gap).abs();
            b += self.omega_theta[i] - self.lambda * r / wa;
        }
        let z = y.observed_count() as f64;
        Ok(ItemTraits { a: a / z, b: b / z })
    }

    /// Abilities for every row; `None` where a row has no responses.
    pub fn thetas(&self, rows: &[SignedResponseVector]) -> Result<Vec<Option<f64>>> {
        rows.iter()
            .map(|y| match self.theta(y) {
                Ok(t) => Ok(Some(t)),
                Err(Error::NoEvidence) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }

    /// Item traits for every column; `None` where a column has no responses.
    pub fn all_item_traits(
        &self,
        cols: &[SignedResponseVector],
    ) -> Result<Vec<Option<ItemTraits>>> {
        cols.iter()
            .enumerate()
            .map(|(j, y)| match self.item_traits(j, y) {
                Ok(t) => Ok(Some(t)),
                Err(Error::NoEvidence) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }

    /// Instant diagnosis of a learner outside the training cohort. Pure.
    pub fn diagnose_new<S: AsRef<str>>(&self, responses: &[(S, u8)]) -> Result<GirtDiagnosis> {
        let evidence = evidence_vector(&self.item_index, responses)?;
        let theta = self.theta(&evidence.vector)?;
        Ok(GirtDiagnosis {
            theta,
            n_evidence: evidence.vector.observed_count(),
            unknown_items: evidence.unknown,
        })
    }

    /// Fallback ability for a learner with no evidence.
    pub fn empty_learner_default(&self) -> f64 {
        self.omega_b.iter().sum::<f64>() / self.omega_b.len().max(1) as f64
    }

    /// Mean negative log-likelihood over `ds` with traits generated from `ds`.
    pub fn mean_nll(&self, ds: &ResponseDataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (rows, cols) = build_vectors(ds);
        let thetas = self.thetas(&rows)?;
        let items = self.all_item_traits(&cols)?;
        let mut total = 0.0;
        for r in ds.responses() {
            let (theta, it) = (
                thetas[r.learner].expect("observed"),
                items[r.item].expect("observed"),
            );
            total += bce_logit(it.a * (theta - it.b), r.score);
        }
        Ok(total / ds.len() as f64)
    }

    /// Traits of every learner and item generated from `ds`, which must share
    /// the model's indices. A learner with no responses in `ds` gets
    /// [`Self::empty_learner_default`]; an item with none keeps its proxies.
    pub fn traits_from(&self, ds: &ResponseDataset) -> Result<GirtTraits> {
        if ds.n_learners() != self.n_learners() || ds.n_items() != self.n_items() {
            return Err(Error::Dimension {
                expected: self.n_learners() * self.n_items(),
                actual: ds.n_learners() * ds.n_items(),
                context: "dataset index vs model index",
            });
        }
        let (rows, cols) = build_vectors(ds);
        let fallback = self.empty_learner_default();
        let thetas = self
            .thetas(&rows)?
            .into_iter()
            .map(|t| t.unwrap_or(fallback))
            .collect();
        let items = self
            .all_item_traits(&cols)?
            .into_iter()
            .enumerate()
            .map(|(j, t)| {
                t.unwrap_or(ItemTraits {
                    a: self.omega_a[j],
                    b: self.omega_b[j],
                })
            })
            .collect();
        Ok(GirtTraits { thetas, items })
    }

    fn clamp_proxies(&mut self) {
        let (tlo, thi) = self.bounds.theta_range();
        let (alo, ahi) = self.bounds.a_range();
        self.omega_theta
            .iter_mut()
            .for_each(|w| *w = w.clamp(tlo, thi));
        self.omega_b.iter_mut().for_each(|w| *w = w.clamp(tlo, thi));
        self.omega_a.iter_mut().for_each(|w| *w = w.clamp(alo, ahi));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GirtTraits {
    pub thetas: Vec<f64>,
    pub items: Vec<ItemTraits>,
}

impl GirtTraits {
    pub fn prob(&self, learner: usize, item: usize) -> f64 {
        let it = self.items[item];
        sigmoid(it.a * (self.thetas[learner] - it.b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirtDiagnosis {
    pub theta: f64,
    pub n_evidence: usize,
    pub unknown_items: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GirtConfig {
    pub bounds: GirtBounds,
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GirtConfig {
    fn default() -> Self {
        Self {
            bounds: GirtBounds::default(),
            lambda: 1.25,
            lr: 0.01,
            epochs: 20,
            batch_size: training::DEFAULT_BATCH_SIZE,
            seed: 0,
        }
    }
}

/// Proxy-parameter gradients of a summed loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyGrads {
    pub omega_theta: Vec<f64>,
    pub omega_a: Vec<f64>,
    pub omega_b: Vec<f64>,
}

impl ProxyGrads {
    fn zeros(model: &GirtModel) -> Self {
        Self {
            omega_theta: vec![0.0; model.n_learners()],
            omega_a: vec![0.0; model.n_items()],
            omega_b: vec![0.0; model.n_items()],
        }
    }

    fn all(&self) -> impl Iterator<Item = &f64> {
        self.omega_theta
            .iter()
            .chain(&self.omega_a)
            .chain(&self.omega_b)
    }
}

/// Observed neighbours of each learner and each item, with signs.
struct Adjacency {
    by_learner: Vec<Vec<(usize, f64)>>,
    by_item: Vec<Vec<(usize, f64)>>,
}

impl Adjacency {
    fn new(ds: &ResponseDataset) -> Self {
        let mut by_learner = vec![Vec::new(); ds.n_learners()];
        let mut by_item = vec![Vec::new(); ds.n_items()];
        for r in ds.responses() {
            let s = if r.score == 1 { 1.0 } else { -1.0 };
            by_learner[r.learner].push((r.item, s));
            by_item[r.item].push((r.learner, s));
        }
        by_learner.iter_mut().for_each(|v| v.sort_by_key(|e| e.0));
        by_item.iter_mut().for_each(|v| v.sort_by_key(|e| e.0));
        Self {
            by_learner,
            by_item,
        }
    }
}

/// Loss and proxy gradients for the summed NLL of `batch`, with traits
/// generated from the responses in `adj`.
fn batch_loss_and_grads(
    model: &GirtModel,
    adj: &Adjacency,
    batch: &[crate::data::Response],
    learners: &mut SlotMap,
    items: &mut SlotMap,
    grads: &mut ProxyGrads,
) -> f64 {
    let lambda = model.lambda;
    learners.clear();
    items.clear();
    for r in batch {
        learners.slot(r.learner);
        items.slot(r.item);
    }
    let thetas: Vec<f64> = learners
        .members()
        .iter()
        .map(|&i| {
            let obs = &adj.by_learner[i];
            obs.iter()
                .map(|&(j, s)| model.omega_b[j] + lambda * s / model.omega_a[j])
                .sum::<f64>()
                / obs.len() as f64
        })
        .collect();
    let traits: Vec<(f64, f64)> = items
        .members()
        .iter()
        .map(|&j| {
            let obs = &adj.by_item[j];
            let (wa, wb) = (model.omega_a[j], model.omega_b[j]);
            let (mut a, mut b) = (0.0, 0.0);
            for &(i, s) in obs {
                a += (lambda * s / clamped_gap(model.omega_theta[i] - wb).0).abs();
                b += model.omega_theta[i] - lambda * s / wa;
            }
            let z = obs.len() as f64;
            (a / z, b / z)
        })
        .collect();

    let mut g_theta = vec![0.0; thetas.len()];
    let mut g_a = vec![0.0; traits.len()];
    let mut g_b = vec![0.0; traits.len()];
    let mut loss = 0.0;
    for r in batch {
        let (li, ij) = (learners.slot(r.learner), items.slot(r.item));
        let (theta, (a, b)) = (thetas[li], traits[ij]);
        let z = a * (theta - b);
        let p = sigmoid(z);
        loss += bce_logit(z, r.score);
        let g = p - f64::from(r.score);
        g_theta[li] += g * a;
        g_a[ij] += g * (theta - b);
        g_b[ij] -= g * a;
    }

    for (&i, &gt) in learners.members().iter().zip(&g_theta) {
        let obs = &adj.by_learner[i];
        let scale = gt / obs.len() as f64;
        for &(j, s) in obs {
            let wa = model.omega_a[j];
            grads.omega_b[j] += scale;
            grads.omega_a[j] -= scale * lambda * s / (wa * wa);
        }
    }
    for ((&j, &ga), &gb) in items.members().iter().zip(&g_a).zip(&g_b) {
        let obs = &adj.by_item[j];
        let z = obs.len() as f64;
        let (wa, wb) = (model.omega_a[j], model.omega_b[j]);
        for &(i, s) in obs {
            let (gap, clamped) = clamped_gap(model.omega_theta[i] - wb);
            if !clamped {
                // d/d gap of |lambda s / gap| = -lambda sign(gap) / gap^2
                let d = -lambda * gap.signum() / (gap * gap) * ga / z;
                grads.omega_theta[i] += d;
                grads.omega_b[j] -= d;
            }
            grads.omega_theta[i] += gb / z;
            grads.omega_a[j] += gb * lambda * s / (wa * wa) / z;
        }
    }
    loss
}

/// Summed NLL and its exact proxy gradients over `responses`, generating
/// traits from `ds`. Exposed for gradient checks.
pub fn loss_and_grads(model: &GirtModel, ds: &ResponseDataset) -> (f64, ProxyGrads) {
    let adj = Adjacency::new(ds);
    let mut grads = ProxyGrads::zeros(model);
    let mut learners = SlotMap::new(model.n_learners());
    let mut items = SlotMap::new(model.n_items());
    let loss = batch_loss_and_grads(
        model,
        &adj,
        ds.responses(),
        &mut learners,
        &mut items,
        &mut grads,
    );
    (loss, grads)
}

/// Trains the proxy parameters by mini-batch gradient descent on the summed
/// negative log-likelihood; proxies are clamped back into their intervals
/// after each step. `epochs = 0` returns the seeded initialisation.
pub fn train(ds: &ResponseDataset, cfg: &GirtConfig) -> Result<Fitted<GirtModel>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be positive, got {}",
            cfg.lr
        )));
    }
    let mut model = GirtModel::init(
        ds.learners().clone(),
        ds.items().clone(),
        cfg.bounds,
        cfg.lambda,
        cfg.seed,
    )?;
    let adj = Adjacency::new(ds);
    let mut rng = training::rng(cfg.seed.wrapping_add(1));
    let mut learners = SlotMap::new(model.n_learners());
    let mut items = SlotMap::new(model.n_items());
    let mut log = TrainLog {
        losses: vec![model.mean_nll(ds)?],
        batches_per_epoch: training::n_batches(ds.len(), cfg.batch_size),
    };
    for epoch in 1..=cfg.epochs {
        for batch in epoch_batches(ds.responses(), cfg.batch_size, &mut rng) {
            let mut grads = ProxyGrads::zeros(&model);
            let loss =
                batch_loss_and_grads(&model, &adj, &batch, &mut learners, &mut items, &mut grads);
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss",
                    epoch,
                });
            }
            if grads.all().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    what: "gradient",
                    epoch,
                });
            }
            let step =
                |w: &mut [f64], g: &[f64]| w.iter_mut().zip(g).for_each(|(w, g)| *w -= cfg.lr * g);
            step(&mut model.omega_theta, &grads.omega_theta);
            step(&mut model.omega_a, &grads.omega_a);
            step(&mut model.omega_b, &grads.omega_b);
            model.clamp_proxies();
        }
        let loss = model.mean_nll(ds)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                epoch,
            });
        }
        log::debug!("girt epoch {epoch}: mean nll {loss:.6}");
        log.losses.push(loss);
    }
    let (rows, _) = build_vectors(ds);
    model.cohort_thetas = model.thetas(&rows)?.into_iter().flatten().collect();
    Ok(Fitted { model, log })
}

/// Ability report relative to a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirtReport {
    pub theta: f64,
    /// Fraction of the cohort strictly below `theta`.
    pub percentile: f64,
    /// Empirical CDF of the cohort: `(value, fraction <= value)`, ascending.
    pub cdf_points: Vec<(f64, f64)>,
}

pub fn report(cohort_thetas: &[f64], theta: f64) -> Result<GirtReport> {
    if cohort_thetas.is_empty() {
        return Err(Error::Config("cohort is empty".into()));
    }
    let mut sorted = cohort_thetas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let below = sorted.partition_point(|&c| c < theta);
    let mut cdf_points: Vec<(f64, f64)> = Vec::new();
    for (k, &v) in sorted.iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        match cdf_points.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => cdf_points.push((v, frac)),
        }
    }
    Ok(GirtReport {
        theta,
        percentile: below as f64 / n,
        cdf_points,
    })
}
