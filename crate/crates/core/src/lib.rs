//! Track embeddings from multi-label tag annotations.
//!
//! The pipeline ingests per-track tags, projects them into an LSI concept
//! space via truncated SVD, mines triplets online from tag-relatedness, trains
//! an encoder under a max-margin triplet loss and evaluates the learned
//! embeddings by per-task retrieval precision.

pub mod audiofeat;
pub mod error;
pub mod eval;
pub mod lsi;
pub mod mining;
pub mod synth;
pub mod tagspace;
pub mod textio;
pub mod trainer;

pub use error::{Error, Result};
