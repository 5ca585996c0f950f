//! Score reconstruction on a held-out part, plus optional IDS and DOC.
//!
//! Generative models score test pairs with traits generated from the
//! training responses. Under a user split they diagnose each held-out
//! learner from their evidence; transductive models have to be refitted with
//! that evidence instead.

use std::collections::HashMap;

use serde::Serialize;

use cogdiag::baselines::{retrain_for_new_learners, BaselineConfig, BaselineModel, NewLearner};
use cogdiag::dataio::{
    augment_qmatrix, augment_shadow, load_responses, split_by_user, split_random, SplitConfig,
};
use cogdiag::metrics::{self, EvalReport};
use cogdiag::nn::sigmoid;
use cogdiag::{build_vectors, IdIndex, QMatrix, Response, ResponseDataset, SignedResponseVector};

use crate::args::{EvaluateArgs, ModelKind, SplitKind};
use crate::model_file::{emit, fit, irt_config, ncdm_config, qmatrix_for, settings, AnyModel};
use crate::CliResult;

#[derive(Serialize)]
struct SplitInfo {
    kind: SplitKind,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratios: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    holdout: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    evidence_frac: Option<f64>,
    n_train: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_valid: Option<usize>,
    n_test: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_held_out_learners: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_degenerate: Option<usize>,
}

#[derive(Serialize)]
struct IdsSection {
    augment: Option<f64>,
    n_learners: usize,
    n_items: usize,
    /// Over duplicate learner rows; absent when there are none.
    theta: Option<f64>,
    /// Over duplicate item columns; absent when there are none.
    psi: Option<f64>,
}

#[derive(Serialize)]
struct DocSection {
    /// `scalar` for the IRT family, `vector` for the neural models.
    variant: &'static str,
    /// Proficiencies from the training responses (or the evidence, under a
    /// user split).
    mean: f64,
    n_items: usize,
    /// Generative models only: proficiencies generated from the test
    /// responses themselves.
    #[serde(skip_serializing_if = "Option::is_none")]
    test_evidence_mean: Option<f64>,
}

#[derive(Serialize)]
struct EvaluateReport {
    format_version: u32,
    kind: ModelKind,
    split: SplitInfo,
    metrics: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    ids: Option<IdsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    doc: Option<DocSection>,
}

enum Traits {
    Scalar(Vec<f64>),
    Vector(Vec<Vec<f64>>),
}

/// Test predictions and the proficiencies to judge DOC with.
struct Scored {
    test: ResponseDataset,
    preds: Vec<f64>,
    traits: Traits,
    test_evidence: Option<Traits>,
}

fn doc_of(traits: &Traits, test: &ResponseDataset, q: Option<&QMatrix>) -> CliResult<(f64, usize)> {
    let r = match traits {
        Traits::Scalar(v) => metrics::doc_scalar(v, test)?,
        Traits::Vector(v) => metrics::doc(v, test, q.expect("neural models carry a q-matrix"))?,
    };
    Ok((r.mean, r.n_items))
}

fn has_duplicates(vectors: &[SignedResponseVector]) -> bool {
    let mut seen = std::collections::HashSet::new();
    !vectors.iter().all(|v| seen.insert(v.values()))
}

pub fn run(a: EvaluateArgs) -> CliResult {
    if a.model.model == ModelKind::Girt {
        cogdiag::girt::check_lambda(&a.model.bounds, a.model.lambda)?;
    }
    let q = qmatrix_for(&a.model)?;
    let ds = load_responses(&a.responses)?;

    // IDS preconditions are checked before any fitting.
    let ids_base = if a.ids {
        let base = match a.augment {
            Some(f) => augment_shadow(&ds, f, a.model.seed)?,
            None => ds.clone(),
        };
        let (rows, cols) = build_vectors(&base);
        if !has_duplicates(&rows) && !has_duplicates(&cols) {
            return Err(cogdiag::Error::NoDuplicateRows.into());
        }
        Some(base)
    } else {
        None
    };

    let (split, scored) = match a.split {
        SplitKind::Random => random_split(&a, &ds, q.as_ref())?,
        SplitKind::User => user_split(&a, &ds, q.as_ref())?,
    };
    let labels: Vec<u8> = scored.test.responses().iter().map(|r| r.score).collect();
    let metrics = metrics::score_metrics(&scored.preds, &labels, a.threshold)?;

    let doc = if a.doc {
        let (mean, n_items) = doc_of(&scored.traits, &scored.test, q.as_ref())?;
        let test_evidence_mean = match &scored.test_evidence {
            Some(t) => Some(doc_of(t, &scored.test, q.as_ref())?.0),
            None => None,
        };
        Some(DocSection {
            variant: match scored.traits {
                Traits::Scalar(_) => "scalar",
                Traits::Vector(_) => "vector",
            },
            mean,
            n_items,
            test_evidence_mean,
        })
    } else {
        None
    };

    let ids = match ids_base {
        Some(base) => Some(ids_section(&a, &base, q.as_ref())?),
        None => None,
    };

    let report = EvaluateReport {
        format_version: 1,
        kind: a.model.model,
        split,
        metrics,
        ids,
        doc,
    };
    emit(&report, a.out.as_deref())
}

fn random_split(
    a: &EvaluateArgs,
    ds: &ResponseDataset,
    q: Option<&QMatrix>,
) -> CliResult<(SplitInfo, Scored)> {
    let cfg = SplitConfig {
        train_frac: a.ratios[0],
        valid_frac: a.ratios[1],
        test_frac: a.ratios[2],
        seed: a.model.seed,
    };
    let (train, valid, test) = split_random(ds, &cfg)?;
    let (model, _) = fit(&a.model, &train, q)?;
    let pairs = || test.responses().iter();
    let (preds, traits, test_evidence) = match &model {
        AnyModel::Girt(m) => {
            let t = m.traits_from(&train)?;
            let preds = pairs().map(|r| t.prob(r.learner, r.item)).collect();
            let from_test = m.traits_from(&test)?.thetas;
            (
                preds,
                Traits::Scalar(t.thetas),
                Some(Traits::Scalar(from_test)),
            )
        }
        AnyModel::Gncdm(m) => {
            let t = m.traits_from(&train)?;
            let preds = pairs()
                .map(|r| t.prob(m, r.learner, r.item))
                .collect::<Result<_, _>>()?;
            let from_test = m.traits_from(&test)?.thetas;
            (
                preds,
                Traits::Vector(t.thetas),
                Some(Traits::Vector(from_test)),
            )
        }
        AnyModel::Irt(m) => {
            let preds = pairs()
                .map(|r| m.predict(r.learner, r.item))
                .collect::<Result<_, _>>()?;
            (preds, Traits::Scalar(m.theta.clone()), None)
        }
        AnyModel::Ncdm(m) => {
            let preds = pairs()
                .map(|r| m.predict(r.learner, r.item))
                .collect::<Result<_, _>>()?;
            (preds, Traits::Vector(m.thetas()), None)
        }
    };
    let info = SplitInfo {
        kind: SplitKind::Random,
        seed: a.model.seed,
        ratios: Some(a.ratios),
        holdout: None,
        evidence_frac: None,
        n_train: train.len(),
        n_valid: Some(valid.len()),
        n_test: test.len(),
        n_held_out_learners: None,
        n_degenerate: None,
    };
    Ok((
        info,
        Scored {
            test,
            preds,
            traits,
            test_evidence,
        },
    ))
}

fn user_split(
    a: &EvaluateArgs,
    ds: &ResponseDataset,
    q: Option<&QMatrix>,
) -> CliResult<(SplitInfo, Scored)> {
    let split = split_by_user(ds, a.holdout, a.evidence_frac, a.model.seed)?;
    let items = split.train.items();
    // Reconstruction targets of the held-out learners, on the shared item
    // index so model item indices apply directly.
    let mut held = IdIndex::new();
    let mut responses = Vec::new();
    for h in split.held_out.iter().filter(|h| !h.degenerate) {
        let learner = held.intern(&h.learner_id);
        for (item, score) in &h.target {
            let item = items
                .get(item)
                .expect("targets come from the shared item index");
            responses.push(Response {
                learner,
                item,
                score: *score,
            });
        }
    }
    let test = ResponseDataset::with_index(held.clone(), items.clone(), responses)?;
    let evidence: HashMap<&str, &[(String, u8)]> = split
        .held_out
        .iter()
        .map(|h| (h.learner_id.as_str(), h.evidence.as_slice()))
        .collect();
    let ids: Vec<&str> = held.iter().collect();

    let (preds, traits) = match a.model.model {
        ModelKind::Girt | ModelKind::Gncdm => {
            let (model, _) = fit(&a.model, &split.train, q)?;
            match &model {
                AnyModel::Girt(m) => {
                    let items = m.traits_from(&split.train)?.items;
                    let thetas: Vec<f64> = ids
                        .iter()
                        .map(|id| Ok(m.diagnose_new(evidence[id])?.theta))
                        .collect::<CliResult<_>>()?;
                    let preds = test
                        .responses()
                        .iter()
                        .map(|r| {
                            let it = items[r.item];
                            sigmoid(it.a * (thetas[r.learner] - it.b))
                        })
                        .collect();
                    (preds, Traits::Scalar(thetas))
                }
                AnyModel::Gncdm(m) => {
                    let psis = m.traits_from(&split.train)?.psis;
                    let thetas: Vec<Vec<f64>> = ids
                        .iter()
                        .map(|id| Ok(m.diagnose_new(evidence[id])?.theta))
                        .collect::<CliResult<_>>()?;
                    let preds = test
                        .responses()
                        .iter()
                        .map(|r| m.irf(&thetas[r.learner], &psis[r.item], m.qmatrix.row(r.item)))
                        .collect::<Result<_, _>>()?;
                    (preds, Traits::Vector(thetas))
                }
                _ => unreachable!("generative kinds only"),
            }
        }
        ModelKind::Irt | ModelKind::Ncdm => {
            let new: Vec<NewLearner> = split
                .held_out
                .iter()
                .map(|h| (h.learner_id.clone(), h.evidence.clone()))
                .collect();
            let s = settings(&a.model);
            let cfg = match a.model.model {
                ModelKind::Irt => BaselineConfig::Irt(irt_config(&s)),
                _ => BaselineConfig::Ncdm(ncdm_config(&s, a.model.hidden)),
            };
            let refit = retrain_for_new_learners(&cfg, &split.train, &new, q)?;
            let index = |id: &str| {
                split.train.n_learners()
                    + new.iter().position(|(n, _)| n == id).expect("new learner")
            };
            match &refit {
                BaselineModel::Irt(m) => {
                    let preds = test
                        .responses()
                        .iter()
                        .map(|r| m.predict(index(ids[r.learner]), r.item))
                        .collect::<Result<_, _>>()?;
                    (
                        preds,
                        Traits::Scalar(ids.iter().map(|id| m.theta[index(id)]).collect()),
                    )
                }
                BaselineModel::Ncdm(m) => {
                    let preds = test
                        .responses()
                        .iter()
                        .map(|r| m.predict(index(ids[r.learner]), r.item))
                        .collect::<Result<_, _>>()?;
                    (
                        preds,
                        Traits::Vector(ids.iter().map(|id| m.theta(index(id))).collect()),
                    )
                }
            }
        }
    };
    let info = SplitInfo {
        kind: SplitKind::User,
        seed: a.model.seed,
        ratios: None,
        holdout: Some(a.holdout),
        evidence_frac: Some(a.evidence_frac),
        n_train: split.train.len(),
        n_valid: None,
        n_test: test.len(),
        n_held_out_learners: Some(split.held_out.len()),
        n_degenerate: Some(split.held_out.iter().filter(|h| h.degenerate).count()),
    };
    Ok((
        info,
        Scored {
            test,
            preds,
            traits,
            test_evidence: None,
        },
    ))
}

fn ids_section(
    a: &EvaluateArgs,
    base: &ResponseDataset,
    q: Option<&QMatrix>,
) -> CliResult<IdsSection> {
    let q = match (q, a.augment) {
        (Some(q), Some(_)) => Some(augment_qmatrix(q, base)?),
        (q, _) => q.cloned(),
    };
    let (model, _) = fit(&a.model, base, q.as_ref())?;
    let (rows, cols) = build_vectors(base);
    let (theta, psi): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match &model {
        AnyModel::Girt(m) => {
            let t = m.traits_from(base)?;
            (
                t.thetas.iter().map(|&x| vec![x]).collect(),
                t.items.iter().map(|it| vec![it.a, it.b]).collect(),
            )
        }
        AnyModel::Gncdm(m) => {
            let t = m.traits(&rows, &cols)?;
            (t.thetas, t.psis)
        }
        AnyModel::Irt(m) => (
            m.theta.iter().map(|&x| vec![x]).collect(),
            (0..m.b.len()).map(|j| vec![m.a(j), m.b[j]]).collect(),
        ),
        AnyModel::Ncdm(m) => (
            m.thetas(),
            (0..m.n_items()).map(|j| m.item_traits(j)).collect(),
        ),
    };
    let optional = |r: cogdiag::Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(cogdiag::Error::NoDuplicateRows) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(IdsSection {
        augment: a.augment,
        n_learners: base.n_learners(),
        n_items: base.n_items(),
        theta: optional(metrics::ids(&theta, &rows))?,
        psi: optional(metrics::ids(&psi, &cols))?,
    })
}
