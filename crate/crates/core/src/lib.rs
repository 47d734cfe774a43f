//! Inference of document topic compositions for spectral topic models.
//!
//! Given a word-topic matrix `B` and a topic-topic matrix `A`, three
//! estimators recover the per-document compositions `W`:
//!
//! - [`estimators::spi_infer`]: word posteriors averaged over the document.
//! - [`estimators::tli_infer`]: a thresholded min-max-entry left inverse.
//! - [`padd::padd_infer`]: least-squares fits coupled through the prior `A`
//!   by dual decomposition.
//!
//! [`synth`] generates corpora with known compositions and [`eval`] scores
//! estimates against them.

pub mod error;
pub mod estimators;
pub mod eval;
pub mod io;
pub mod model;
pub mod padd;
pub mod simplex;
pub mod synth;

pub use error::{Error, Result};
pub use model::{CompositionMatrix, Corpus, NormalizedCorpus, TopicModel, WordTopicPosterior};
