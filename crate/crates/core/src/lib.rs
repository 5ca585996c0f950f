//! Cognitive diagnosis with generative diagnosis functions.
//!
//! Two generative models map response vectors straight to traits:
//! [`girt`] (scalar ability, 2PL response function) and [`gncdm`]
//! (knowledge-concept proficiencies, monotone neural response function).
//! [`baselines`] holds their transductive counterparts, [`metrics`] the score,
//! identifiability and consistency measures, and [`dataio`] ingestion,
//! splitting and synthetic data.

pub mod baselines;
pub mod data;
pub mod dataio;
pub mod error;
pub mod girt;
pub mod gncdm;
pub mod metrics;
pub mod nn;
pub mod training;

pub use data::{build_vectors, IdIndex, QMatrix, Response, ResponseDataset, SignedResponseVector};
pub use error::{Error, Result};
