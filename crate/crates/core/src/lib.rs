//! Box-office revenue prediction with self-supervised pretraining.
//!
//! Stages run in order: [`dataset`] ingestion and splitting, keyword
//! [`clustering`], [`features`] tokenization, [`pretrain`] with masked field
//! prediction and visual grounding, then [`finetune`] regression. Poster
//! [`retrieval`] reuses the pretrained model.

pub mod autograd;
pub mod clustering;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod features;
pub mod finetune;
pub mod io;
pub mod pipeline;
pub mod pretrain;
pub mod retrieval;
pub mod synth;

pub use clustering::{KeywordClusterMap, LexicalVectors};
pub use config::RunConfig;
pub use dataset::{MovieRecord, Split, SplitAssignment};
pub use encoder::EncoderConfig;
pub use error::{Error, Result};
pub use features::{FeatureContext, TokenizedMovie};
pub use finetune::{FinetuneConfig, Prediction};
pub use io::{ModelCheckpoint, PosterObjectSet};
pub use pretrain::PretrainConfig;
pub use synth::{SyntheticCorpus, SyntheticSpec};
