use serde::Serialize;

use cogdiag::dataio::{synth_irt, synth_qmatrix, write_json, write_qmatrix, write_responses};

use crate::args::SynthArgs;
use crate::model_file::sibling;
use crate::CliResult;

#[derive(Serialize)]
struct SynthParams<'a> {
    format_version: u32,
    seed: u64,
    density: f64,
    learner_ids: Vec<&'a str>,
    item_ids: Vec<&'a str>,
    theta_star: &'a [f64],
    a_star: &'a [f64],
    b_star: &'a [f64],
}

pub fn run(a: SynthArgs) -> CliResult {
    let (ds, truth) = synth_irt(a.learners, a.items, a.seed, a.density)?;
    write_responses(&ds, &a.out)?;
    let params_path = a.params.unwrap_or_else(|| sibling(&a.out, ".params.json"));
    let params = SynthParams {
        format_version: 1,
        seed: a.seed,
        density: a.density,
        learner_ids: ds.learners().iter().collect(),
        item_ids: ds.items().iter().collect(),
        theta_star: &truth.theta_star,
        a_star: &truth.a_star,
        b_star: &truth.b_star,
    };
    write_json(&params, &params_path)?;
    if let Some(k) = a.knowledge {
        let q = synth_qmatrix(ds.items(), k, a.extra, a.seed)?;
        write_qmatrix(
            &q,
            a.qmatrix_out.unwrap_or_else(|| sibling(&a.out, ".q.csv")),
        )?;
    }
    log::info!("wrote {} responses to {}", ds.len(), a.out.display());
    Ok(())
}
