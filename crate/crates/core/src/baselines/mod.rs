//! Transductive baselines. Their traits are free parameters, so a learner
//! outside the training data can only be diagnosed by refitting.

pub mod irt;
pub mod ncdm;

use crate::data::{IdIndex, QMatrix, Response, ResponseDataset};
use crate::error::{Error, Result};

pub use irt::{IrtConfig, TransductiveIrtModel};
pub use ncdm::{NcdmConfig, TransductiveNcdmModel};

/// A new learner's id and `(item_id, score)` evidence.
pub type NewLearner = (String, Vec<(String, u8)>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineConfig {
    Irt(IrtConfig),
    Ncdm(NcdmConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    Irt(TransductiveIrtModel),
    Ncdm(TransductiveNcdmModel),
}

/// `base` plus the new learners' evidence. New learners are appended to the
/// learner index; evidence on items outside `base`'s item index is dropped,
/// as the generative models drop it.
pub fn with_new_learners(base: &ResponseDataset, new: &[NewLearner]) -> Result<ResponseDataset> {
    let mut learners: IdIndex = base.learners().clone();
    let mut responses = base.responses().to_vec();
    for (id, evidence) in new {
        if base.learners().get(id).is_some() {
            return Err(Error::Config(format!(
                "new learner `{id}` is already in the training data"
            )));
        }
        let learner = learners.intern(id);
        for (item, score) in evidence {
            if let Some(item) = base.items().get(item) {
                responses.push(Response {
                    learner,
                    item,
                    score: *score,
                });
            }
        }
    }
    ResponseDataset::with_index(learners, base.items().clone(), responses)
}

/// Refits the baseline from scratch on `base` plus the new learners, which
/// is what a transductive model must do to diagnose them.
pub fn retrain_for_new_learners(
    cfg: &BaselineConfig,
    base: &ResponseDataset,
    new: &[NewLearner],
    q: Option<&QMatrix>,
) -> Result<BaselineModel> {
    let ds = with_new_learners(base, new)?;
    match cfg {
        BaselineConfig::Irt(c) => Ok(BaselineModel::Irt(irt::fit(&ds, c)?.model)),
        BaselineConfig::Ncdm(c) => {
            let q = q.ok_or_else(|| Error::Config("ncdm needs a q-matrix".into()))?;
            Ok(BaselineModel::Ncdm(ncdm::fit(&ds, q, c)?.model))
        }
    }
}
