use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use cogdiag::girt::GirtBounds;
use cogdiag::gncdm::GncdmDims;

#[derive(Debug, Parser)]
#[command(
    name = "cogdiag",
    version,
    about = "Generative cognitive diagnosis from response data"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG also works.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic 2PL response dataset.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Fit a model and write it with its training log.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Diagnose one new learner with a trained generative model.
    #[command(args_override_self = true)]
    Diagnose(DiagnoseArgs),
    /// Split, fit and score a model; optionally IDS and DOC.
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Time instant diagnosis against refitting the transductive baseline.
    #[command(args_override_self = true)]
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Girt,
    Gncdm,
    Irt,
    Ncdm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Girt => "girt",
            ModelKind::Gncdm => "gncdm",
            ModelKind::Irt => "irt",
            ModelKind::Ncdm => "ncdm",
        }
    }

    pub fn needs_qmatrix(self) -> bool {
        matches!(self, ModelKind::Gncdm | ModelKind::Ncdm)
    }
}

fn parse_list<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_bounds(s: &str) -> Result<GirtBounds, String> {
    let [alpha, beta, epsilon, zeta, p, q] = parse_list::<6>(s)?;
    Ok(GirtBounds {
        alpha,
        beta,
        epsilon,
        zeta,
        p,
        q,
    })
}

fn parse_dims(s: &str) -> Result<GncdmDims, String> {
    let v = parse_list::<4>(s)?;
    if v.iter().any(|x| x.fract() != 0.0 || *x < 1.0) {
        return Err("layer sizes must be positive integers".into());
    }
    Ok(GncdmDims {
        h1: v[0] as usize,
        h2: v[1] as usize,
        h3: v[2] as usize,
        d_agg: v[3] as usize,
    })
}

pub fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    parse_list::<3>(s)
}

fn parse_density(s: &str) -> Result<f64, String> {
    let d: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if d > 0.0 && d <= 1.0 {
        Ok(d)
    } else {
        Err(format!("density must lie in (0, 1], got {d}"))
    }
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        Ok(_) => Err("must be at least 1".into()),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = parse_positive)]
    pub learners: usize,
    #[arg(long, value_parser = parse_positive)]
    pub items: usize,
    /// Probability that a learner-item pair is observed.
    #[arg(long, default_value_t = 1.0, value_parser = parse_density)]
    pub density: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Responses CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Generating parameters JSON [default: <out stem>.params.json].
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Also write a random Q-matrix with this many concepts.
    #[arg(long, value_parser = parse_positive)]
    pub knowledge: Option<usize>,
    /// Probability of each extra concept per item in the Q-matrix.
    #[arg(long, default_value_t = 0.2)]
    pub extra: f64,
    /// Q-matrix CSV to write [default: <out stem>.q.csv].
    #[arg(long)]
    pub qmatrix_out: Option<PathBuf>,
}

/// Model choice and hyperparameters, shared by `train` and `evaluate`.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Q-matrix CSV; required for gncdm and ncdm.
    #[arg(long)]
    pub qmatrix: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = cogdiag::training::DEFAULT_BATCH_SIZE, value_parser = parse_positive)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// G-NCDM weight of the explicit proficiency branch.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// G-IRT scale.
    #[arg(long, default_value_t = 1.25)]
    pub lambda: f64,
    /// G-IRT bounds `alpha,beta,epsilon,zeta,p,q`.
    #[arg(long, default_value = "-1,1,0.5,1,-4,4", value_parser = parse_bounds, allow_hyphen_values = true)]
    pub bounds: GirtBounds,
    /// G-NCDM layer sizes `h1,h2,h3,d_agg`.
    #[arg(long, default_value = "256,256,128,32", value_parser = parse_dims)]
    pub dims: GncdmDims,
    /// NCDM head width.
    #[arg(long, default_value_t = 128, value_parser = parse_positive)]
    pub hidden: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Responses CSV (`learner_id,item_id,score`).
    #[arg(long)]
    pub responses: PathBuf,
    /// Model JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV [default: <out stem>.log.csv].
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Trained girt or gncdm model JSON. Only read.
    #[arg(long)]
    pub model_file: PathBuf,
    /// The learner's responses (`item_id,score`).
    #[arg(long)]
    pub responses: PathBuf,
    /// Report JSON [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Random,
    User,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitKind::Random)]
    pub split: SplitKind,
    /// Train, valid and test fractions of a random split.
    #[arg(long, default_value = "0.7,0.1,0.2", value_parser = parse_ratios)]
    pub ratios: [f64; 3],
    /// Fraction of learners held out by a user split.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Fraction of each held-out learner's responses used as evidence.
    #[arg(long, default_value_t = 0.5)]
    pub evidence_frac: f64,
    #[arg(long, default_value_t = cogdiag::metrics::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Add identifiability scores, from a fit on the whole dataset.
    #[arg(long)]
    pub ids: bool,
    /// Shadow-augment this fraction of learners and items before the IDS fit.
    #[arg(long, requires = "ids")]
    pub augment: Option<f64>,
    /// Add the degree of consistency on the test responses.
    #[arg(long)]
    pub doc: bool,
    /// Report JSON [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Trained girt or gncdm model JSON.
    #[arg(long)]
    pub model_file: PathBuf,
    /// The responses the model was trained on; the baseline refits on these
    /// plus the new learners.
    #[arg(long)]
    pub responses: PathBuf,
    /// New learners' responses (`learner_id,item_id,score`).
    #[arg(long)]
    pub new: PathBuf,
    /// Use only the first N new learners [default: all].
    #[arg(long, value_parser = parse_positive)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1, value_parser = parse_positive)]
    pub repeat: usize,
    /// Report JSON [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}
