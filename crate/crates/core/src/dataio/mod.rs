//! File ingestion, splitting and synthetic data.

mod augment;
mod io;
mod split;
mod synth;

pub use augment::{augment_qmatrix, augment_shadow, shadow_source, SHADOW_SUFFIX};
pub use io::{
    load_evidence, load_qmatrix, load_responses, read_json, write_json, write_qmatrix,
    write_responses,
};
pub use split::{split_by_user, split_random, HeldOutLearner, SplitConfig, UserSplit};
pub use synth::{synth_irt, synth_qmatrix, TrueParams};
