//! Score-conditioned adversarial generation and detection of fraudulent
//! reviews.
//!
//! The crate contains a small reverse-mode autodiff engine ([`numeric`]),
//! review ingestion and synthetic corpora ([`corpus`]), an LSTM generator
//! conditioned on a rating score ([`generator`]), convolutional text
//! discriminators with an auxiliary score head ([`discriminator`]), the
//! information-gain regularizer ([`igm`]), the adversarial training loop
//! with Monte-Carlo rollout rewards ([`trainer`]) and the evaluation
//! harness ([`eval`]).

pub mod corpus;
pub mod discriminator;
pub mod eval;
pub mod error;
pub mod generator;
pub mod igm;
pub mod numeric;
pub mod trainer;

pub use error::{Error, Result};
