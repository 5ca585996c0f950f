use serde::Serialize;

use cogdiag::baselines::{retrain_for_new_learners, BaselineConfig, NewLearner};
use cogdiag::dataio::load_responses;
use cogdiag::metrics::{speedup_benchmark, SpeedupReport};
use cogdiag::training::DEFAULT_BATCH_SIZE;

use crate::args::{BenchArgs, ModelKind};
use crate::model_file::{emit, irt_config, ncdm_config, AnyModel, ModelFile};
use crate::{usage, CliResult};

/// Work done per repeat; identical across repeats by construction.
#[derive(Serialize)]
struct Work {
    diagnose_calls: usize,
    baseline_epochs: usize,
    baseline_responses: usize,
    baseline_batches_per_epoch: usize,
}

#[derive(Serialize)]
struct BenchReport {
    format_version: u32,
    kind: ModelKind,
    baseline: ModelKind,
    #[serde(flatten)]
    timings: SpeedupReport,
    work: Work,
}

/// New learners grouped by id, in first-appearance order.
fn new_learners(ds: &cogdiag::ResponseDataset) -> Vec<NewLearner> {
    let mut out: Vec<NewLearner> = ds
        .learners()
        .iter()
        .map(|id| (id.to_owned(), Vec::new()))
        .collect();
    for (learner, item, score) in ds.records() {
        let i = ds
            .learners()
            .get(learner)
            .expect("record learners are indexed");
        out[i].1.push((item.to_owned(), score));
    }
    out.retain(|(_, e)| !e.is_empty());
    out
}

pub fn run(a: BenchArgs) -> CliResult {
    let file = ModelFile::load(&a.model_file)?;
    let base = load_responses(&a.responses)?;
    let mut new = new_learners(&load_responses(&a.new)?);
    if let Some(n) = a.n {
        if n > new.len() {
            return usage(format!(
                "--n {n} exceeds the {} new learners available",
                new.len()
            ));
        }
        new.truncate(n);
    }
    if new.is_empty() {
        return usage("no new learners to diagnose");
    }
    let s = file.settings;
    let (baseline, cfg, q) = match &file.model {
        AnyModel::Girt(_) => (ModelKind::Irt, BaselineConfig::Irt(irt_config(&s)), None),
        AnyModel::Gncdm(m) => (
            ModelKind::Ncdm,
            BaselineConfig::Ncdm(ncdm_config(&s, m.dims.h3)),
            Some(&m.qmatrix),
        ),
        AnyModel::Irt(_) | AnyModel::Ncdm(_) => {
            return usage("bench needs a generative model (girt or gncdm)")
        }
    };
    let model = &file.model;
    let generative = || -> cogdiag::Result<()> {
        for (_, evidence) in &new {
            match model {
                AnyModel::Girt(m) => {
                    std::hint::black_box(m.diagnose_new(evidence)?);
                }
                AnyModel::Gncdm(m) => {
                    std::hint::black_box(m.diagnose_new(evidence)?);
                }
                _ => unreachable!("checked above"),
            }
        }
        Ok(())
    };
    let transductive = || -> cogdiag::Result<()> {
        std::hint::black_box(retrain_for_new_learners(&cfg, &base, &new, q)?);
        Ok(())
    };
    let timings = speedup_benchmark(new.len(), a.repeat, generative, transductive)?;
    let n_responses = cogdiag::baselines::with_new_learners(&base, &new)?.len();
    let batch = if s.batch_size == 0 {
        DEFAULT_BATCH_SIZE
    } else {
        s.batch_size
    };
    let report = BenchReport {
        format_version: 1,
        kind: s.kind,
        baseline,
        timings,
        work: Work {
            diagnose_calls: new.len(),
            baseline_epochs: s.epochs,
            baseline_responses: n_responses,
            baseline_batches_per_epoch: n_responses.div_ceil(batch),
        },
    };
    emit(&report, a.out.as_deref())
}
