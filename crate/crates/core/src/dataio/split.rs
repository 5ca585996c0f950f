use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{IdIndex, Response, ResponseDataset};
use crate::error::{Error, Result};
use crate::training::rng;

/// Triplet-level train/valid/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            valid_frac: 0.1,
            test_frac: 0.2,
            seed: 0,
        }
    }
}

impl SplitConfig {
    /// Train must be positive; valid and test may be zero.
    pub fn check(&self) -> Result<()> {
        let fracs = [self.train_frac, self.valid_frac, self.test_frac];
        if fracs.iter().any(|f| !f.is_finite() || *f < 0.0) || self.train_frac <= 0.0 {
            return Err(Error::Config(format!(
                "split fractions must be non-negative with train > 0, got {fracs:?}"
            )));
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Shuffles the triplets and cuts them into train, valid and test. Valid and
/// test get `round(frac * |D|)` triplets and train takes the rest. All three
/// parts keep the parent's identifier index.
pub fn split_random(
    ds: &ResponseDataset,
    cfg: &SplitConfig,
) -> Result<(ResponseDataset, ResponseDataset, ResponseDataset)> {
    cfg.check()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = ds.len();
    let n_valid = (cfg.valid_frac * n as f64).round() as usize;
    let n_test = (cfg.test_frac * n as f64).round() as usize;
    if n_valid + n_test >= n {
        return Err(Error::Config(format!(
            "split leaves no training triplets out of {n}"
        )));
    }
    let mut order = ds.responses().to_vec();
    order.shuffle(&mut rng(cfg.seed));
    let test = order.split_off(n - n_test);
    let valid = order.split_off(n - n_test - n_valid);
    Ok((ds.subset(order), ds.subset(valid), ds.subset(test)))
}

/// One held-out learner of a user split. Item ids refer to the parent
/// dataset's item index, which the training part shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutLearner {
    pub learner_id: String,
    pub evidence: Vec<(String, u8)>,
    pub target: Vec<(String, u8)>,
    /// Set when the learner had fewer than two responses, so everything went
    /// to evidence and there is nothing to reconstruct.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserSplit {
    pub train: ResponseDataset,
    pub held_out: Vec<HeldOutLearner>,
}

/// Holds out `ceil(holdout_frac * N)` learners entirely. Each held-out
/// learner's responses are shuffled and the first `round(evidence_frac * n)`
/// (kept within `1..n`) become evidence, the rest the reconstruction target.
pub fn split_by_user(
    ds: &ResponseDataset,
    holdout_frac: f64,
    evidence_frac: f64,
    seed: u64,
) -> Result<UserSplit> {
    for (name, f) in [
        ("holdout_frac", holdout_frac),
        ("evidence_frac", evidence_frac),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = ds.n_learners();
    let n_holdout = ((holdout_frac * n as f64).ceil() as usize).min(n);
    if n_holdout == n {
        return Err(Error::Config(format!(
            "holding out {n_holdout} of {n} learners leaves none to train on"
        )));
    }

    let mut rng = rng(seed);
    let mut learners: Vec<usize> = (0..n).collect();
    learners.shuffle(&mut rng);
    let mut held = learners[..n_holdout].to_vec();
    held.sort_unstable();
    let mut is_held = vec![false; n];
    for &l in &held {
        is_held[l] = true;
    }

    let mut train_index = IdIndex::new();
    let mut remap = vec![usize::MAX; n];
    for (l, id) in ds.learners().iter().enumerate() {
        if !is_held[l] {
            remap[l] = train_index.intern(id);
        }
    }
    let mut by_learner: Vec<Vec<Response>> = vec![Vec::new(); n];
    let mut train = Vec::new();
    for r in ds.responses() {
        if is_held[r.learner] {
            by_learner[r.learner].push(*r);
        } else {
            train.push(Response {
                learner: remap[r.learner],
                ..*r
            });
        }
    }

    let item_id = |r: &Response| {
        (
            ds.items().id(r.item).unwrap_or_default().to_owned(),
            r.score,
        )
    };
    let mut held_out = Vec::with_capacity(n_holdout);
    for &l in &held {
        let mut rs = std::mem::take(&mut by_learner[l]);
        rs.shuffle(&mut rng);
        let total = rs.len();
        let degenerate = total < 2;
        let n_evidence = if degenerate {
            total
        } else {
            ((evidence_frac * total as f64).round() as usize).clamp(1, total - 1)
        };
        held_out.push(HeldOutLearner {
            learner_id: ds.learners().id(l).unwrap_or_default().to_owned(),
            evidence: rs[..n_evidence].iter().map(item_id).collect(),
            target: rs[n_evidence..].iter().map(item_id).collect(),
            degenerate,
        });
    }
    Ok(UserSplit {
        train: ResponseDataset::with_index(train_index, ds.items().clone(), train)?,
        held_out,
    })
}
