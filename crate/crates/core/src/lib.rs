//! Domain adaptation by data selection.
//!
//! Adapting a language model to a small target domain typically runs in three
//! phases: pretrain on a large out-of-domain pool, continue training on a
//! pool subset scored as domain-relevant, then fine-tune on the in-domain set
//! itself. This crate provides the whole loop at desk scale: corpora and a
//! synthetic two-domain generator ([`corpus`]), BPE tokenization
//! ([`tokenizer`]), count-based and neural n-gram language models ([`lm`]),
//! contrastive and classifier-based domain scoring ([`scoring`]), top-n
//! selection ([`selection`]), the three-phase pipeline with its diagnostics
//! ([`pipeline`]), and the measurement suite ([`evaluation`]).
//!
//! Numeric kernels are generic over the [`num::Scalar`] parameter type; the
//! aliases below fix f64, which is also the precision of every file format.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod lm;
pub mod num;
pub mod pipeline;
pub mod scoring;
pub mod seed;
pub mod selection;
pub mod tokenizer;

pub use error::{Error, Result};

/// Neural n-gram language model at file precision.
pub type NeuralLm = lm::NeuralNgramLm<f64>;
/// Domain classifier at file precision.
pub type Classifier = scoring::DomainClassifier<f64>;
