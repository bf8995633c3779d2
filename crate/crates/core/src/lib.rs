//! Knowledge-graph embedding training with mixed hard negatives.
//!
//! The pipeline per positive triplet is: sample `M` candidate entities
//! uniformly, keep the `K` hardest (by scoring-function plausibility or by
//! similarity to the correct entity), then mix random pairs of them into `N`
//! virtual entities that serve as negatives for the loss.
//!
//! Modules:
//! - [`kg_store`]: triplet files, vocabularies, splits, filter index.
//! - [`model`]: embedding tables, sparse Adam, checkpoints.
//! - [`scorers`]: TransE, RotatE, DistMult, ComplEx scores and gradients.
//! - [`negative_sampler`]: candidate sampling, hard selection, mixing.
//! - [`trainer`]: losses with gradient routing and the epoch loop.
//! - [`evaluator`]: filtered MRR and Hits@K.

pub mod error;
pub mod evaluator;
pub mod exec;
pub mod kg_store;
pub mod model;
pub mod negative_sampler;
pub mod scorers;
pub mod trainer;

pub use error::{Error, Result};
pub use evaluator::{evaluate, rank_filtered, EvalReport};
pub use exec::Execution;
pub use kg_store::{FilterIndex, Triplet, TripletCorpus, Vocab};
pub use model::{AdamConfig, AdamState, EmbeddingModel, SparseGrad};
pub use negative_sampler::{CandidateSet, Criterion, HardSet, MixedNegative, Side};
pub use scorers::{Family, Norm, ScoreFamily};
pub use trainer::{EpochStats, TrainConfig};
