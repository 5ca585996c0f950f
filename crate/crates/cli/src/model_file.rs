//! On-disk model files: any of the four model kinds plus the settings they
//! were trained with, so a benchmark can refit the matching baseline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cogdiag::baselines::{irt, ncdm, TransductiveIrtModel, TransductiveNcdmModel};
use cogdiag::dataio::{load_qmatrix, read_json};
use cogdiag::girt::{self, GirtConfig, GirtModel};
use cogdiag::gncdm::{self, GncdmConfig, GncdmModel};
use cogdiag::training::TrainLog;
use cogdiag::{QMatrix, ResponseDataset};

use crate::args::{ModelArgs, ModelKind};
use crate::{usage, CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub kind: ModelKind,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnyModel {
    Girt(GirtModel),
    Gncdm(GncdmModel),
    Irt(TransductiveIrtModel),
    Ncdm(TransductiveNcdmModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub settings: TrainSettings,
    pub model: AnyModel,
}

impl ModelFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let file: ModelFile = read_json(path)?;
        if file.format_version != FORMAT_VERSION {
            return Err(cogdiag::Error::FormatVersion(file.format_version).into());
        }
        match &file.model {
            AnyModel::Girt(m) if m.format_version != girt::FORMAT_VERSION => {
                return Err(cogdiag::Error::FormatVersion(m.format_version).into())
            }
            AnyModel::Gncdm(m) => m.check_version()?,
            AnyModel::Irt(m) => m.check_version()?,
            AnyModel::Ncdm(m) => m.check_version()?,
            _ => {}
        }
        Ok(file)
    }
}

/// Loads the Q-matrix if the model kind needs one.
pub fn qmatrix_for(args: &ModelArgs) -> CliResult<Option<QMatrix>> {
    match (&args.qmatrix, args.model.needs_qmatrix()) {
        (Some(path), true) => Ok(Some(load_qmatrix(path)?)),
        (None, true) => usage(format!("--qmatrix is required for {}", args.model.name())),
        (_, false) => Ok(None),
    }
}

pub fn settings(args: &ModelArgs) -> TrainSettings {
    TrainSettings {
        kind: args.model,
        lr: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
    }
}

pub fn girt_config(args: &ModelArgs) -> GirtConfig {
    GirtConfig {
        bounds: args.bounds,
        lambda: args.lambda,
        lr: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
    }
}

pub fn irt_config(s: &TrainSettings) -> irt::IrtConfig {
    irt::IrtConfig {
        lr: s.lr,
        epochs: s.epochs,
        batch_size: s.batch_size,
        seed: s.seed,
    }
}

pub fn ncdm_config(s: &TrainSettings, hidden: usize) -> ncdm::NcdmConfig {
    ncdm::NcdmConfig {
        hidden,
        lr: s.lr,
        epochs: s.epochs,
        batch_size: s.batch_size,
        seed: s.seed,
    }
}

/// Fits the chosen model on `ds`.
pub fn fit(
    args: &ModelArgs,
    ds: &ResponseDataset,
    q: Option<&QMatrix>,
) -> CliResult<(AnyModel, TrainLog)> {
    let s = settings(args);
    let need_q = || {
        q.ok_or_else(|| CliError::Usage(format!("--qmatrix is required for {}", args.model.name())))
    };
    Ok(match args.model {
        ModelKind::Girt => {
            let f = girt::train(ds, &girt_config(args))?;
            (AnyModel::Girt(f.model), f.log)
        }
        ModelKind::Gncdm => {
            let cfg = GncdmConfig {
                alpha: args.alpha,
                dims: args.dims,
                lr: args.lr,
                epochs: args.epochs,
                batch_size: args.batch_size,
                seed: args.seed,
            };
            let f = gncdm::train(ds, need_q()?, &cfg)?;
            (AnyModel::Gncdm(f.model), f.log)
        }
        ModelKind::Irt => {
            let f = irt::fit(ds, &irt_config(&s))?;
            (AnyModel::Irt(f.model), f.log)
        }
        ModelKind::Ncdm => {
            let f = ncdm::fit(ds, need_q()?, &ncdm_config(&s, args.hidden))?;
            (AnyModel::Ncdm(f.model), f.log)
        }
    })
}

/// Writes `value` as pretty JSON to `out`, or to stdout.
pub fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult {
    match out {
        Some(path) => Ok(cogdiag::dataio::write_json(value, path)?),
        None => {
            use std::io::Write as _;
            let text =
                serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(CliError::Usage(format!("stdout: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

/// `dir/stem<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> std::path::PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}
