//! Prototype Memory and quality-aware prototype generation for embedding
//! learning.
//!
//! Class prototypes (the classifier weights of a margin-softmax loss) are not
//! learned parameters here: each training step builds a fresh prototype for
//! every class in the mini-batch from that class's embeddings, pushes it into
//! a bounded FIFO memory, and uses the whole memory as the classifier.
//! Quality-aware generation weights each exemplar by an estimated quality so
//! that low-quality samples pull the prototype less.
//!
//! Module map:
//!
//! * [`vecmath`] - embedding newtypes, normalization, cosine helpers
//! * [`protogen`] - basic, quality-weighted and hard prototype generation, quality estimators
//! * [`memory`] - bounded prototype store with refresh blending and the unrecognizable-identity slot
//! * [`losses`] - CosFace / ArcFace / ElasticFace margin softmax with analytic gradients
//! * [`synthdata`] - synthetic identity world with controllable corruption
//! * [`trainer`] - linear encoder, batch sampler, training loop
//! * [`evalbench`] - verification, identification, placement error, estimator AUC, A/B runs
//! * [`cli`] - config files and the `gen-data` / `train` / `eval` / `compare` commands

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod cli;
pub mod error;
pub mod evalbench;
pub mod losses;
pub mod memory;
pub mod protogen;
pub mod synthdata;
pub mod trainer;
pub mod vecmath;

pub use error::{Error, Result};
pub use vecmath::{RawEmbedding, UnitEmbedding};

/// Identity / class label.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct ClassId(pub u64);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for ClassId {
    fn from(v: u64) -> Self {
        ClassId(v)
    }
}
