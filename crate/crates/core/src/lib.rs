//! Lexical inference in context: decide whether a premise sentence entails a
//! hypothesis that differs from it only in one verbal expression.
//!
//! Three classifiers share one language-model backend ([`lmbackend`]):
//! a sentence-pair NLI head ([`nli`]), handcrafted patterns and antipatterns
//! scored for felicity ([`pattern`]), and patterns mined from a corpus and
//! ranked by masked completion ([`mining`]). [`evaluation`] holds the
//! metrics and threshold tuning, [`harness`] the training loop,
//! hyperparameter search and sweeps.

pub mod datamodel;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod lmbackend;
pub mod mining;
pub mod nli;
pub mod pattern;

pub use error::{LiicError, Result};
