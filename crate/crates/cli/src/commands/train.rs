use std::fmt::Write as _;

use cogdiag::dataio::{load_responses, write_json};

use crate::args::TrainArgs;
use crate::model_file::{fit, qmatrix_for, settings, sibling, ModelFile, FORMAT_VERSION};
use crate::{CliError, CliResult};

pub fn run(a: TrainArgs) -> CliResult {
    if a.model.model == crate::args::ModelKind::Girt {
        // Checked before any I/O so a bad scale fails fast with exit 3.
        cogdiag::girt::check_lambda(&a.model.bounds, a.model.lambda)?;
    }
    let q = qmatrix_for(&a.model)?;
    let ds = load_responses(&a.responses)?;
    let (model, log) = fit(&a.model, &ds, q.as_ref())?;
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        settings: settings(&a.model),
        model,
    };
    write_json(&file, &a.out)?;

    let mut csv = String::from("epoch,loss\n");
    for (epoch, loss) in log.losses.iter().enumerate() {
        writeln!(csv, "{epoch},{loss}").expect("writing to a string");
    }
    let log_path = a.log.unwrap_or_else(|| sibling(&a.out, ".log.csv"));
    std::fs::write(&log_path, csv)
        .map_err(|e| CliError::Usage(format!("{}: {e}", log_path.display())))?;
    log::info!(
        "trained {} on {} responses, loss {:.4} -> {:.4}",
        a.model.model.name(),
        ds.len(),
        log.losses.first().copied().unwrap_or(f64::NAN),
        log.losses.last().copied().unwrap_or(f64::NAN),
    );
    Ok(())
}
