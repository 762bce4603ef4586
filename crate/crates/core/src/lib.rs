//! Evidence inference over clinical trial reports: corpus handling, sentence
//! segmentation, negative sampling, conditioned encoding, a two-stage
//! identify-then-classify pipeline, evaluation metrics, inter-annotator
//! agreement and abstract-only subsetting.

pub mod adapter;
pub mod agreement;
pub mod corpus;
pub mod encoding;
pub mod error;
pub mod jsonl;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod segmentation;
pub mod subsetting;
pub mod synthetic;

pub use error::{Error, Result};
