use serde::Serialize;

use cogdiag::dataio::load_evidence;
use cogdiag::{girt, gncdm};

use crate::args::DiagnoseArgs;
use crate::model_file::{emit, AnyModel, ModelFile};
use crate::{usage, CliResult};

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum DiagnosisReport {
    Girt {
        format_version: u32,
        theta: f64,
        percentile: f64,
        cdf_points: Vec<(f64, f64)>,
        n_evidence: usize,
        unknown_items: Vec<String>,
    },
    Gncdm {
        format_version: u32,
        knowledge_labels: Vec<String>,
        theta: Vec<f64>,
        knowledge_correct_rates: Vec<Option<f64>>,
        n_evidence: usize,
        unknown_items: Vec<String>,
    },
}

pub fn run(a: DiagnoseArgs) -> CliResult {
    let file = ModelFile::load(&a.model_file)?;
    let evidence = load_evidence(&a.responses)?;
    let report = match &file.model {
        AnyModel::Girt(m) => {
            let d = m.diagnose_new(&evidence)?;
            let r = girt::report(&m.cohort_thetas, d.theta)?;
            DiagnosisReport::Girt {
                format_version: 1,
                theta: r.theta,
                percentile: r.percentile,
                cdf_points: r.cdf_points,
                n_evidence: d.n_evidence,
                unknown_items: d.unknown_items,
            }
        }
        AnyModel::Gncdm(m) => {
            let d = m.diagnose_new(&evidence)?;
            let r = gncdm::report(m, &evidence)?;
            DiagnosisReport::Gncdm {
                format_version: 1,
                knowledge_labels: r.knowledge_labels,
                theta: r.theta,
                knowledge_correct_rates: r.knowledge_correct_rates,
                n_evidence: r.n_evidence,
                unknown_items: d.unknown_items,
            }
        }
        AnyModel::Irt(_) | AnyModel::Ncdm(_) => {
            return usage("transductive models cannot diagnose a new learner without refitting; use girt or gncdm")
        }
    };
    for id in match &report {
        DiagnosisReport::Girt { unknown_items, .. }
        | DiagnosisReport::Gncdm { unknown_items, .. } => unknown_items,
    } {
        log::warn!("ignoring response on unknown item `{id}`");
    }
    emit(&report, a.out.as_deref())
}
