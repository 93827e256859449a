//! Positive-emotion-guided empathetic dialog generation at desk scale.
//!
//! The crate is organized bottom-up:
//!
//! - [`lexicon`]: word → VAD lookup, utterance means and expected VAD.
//! - [`classifier`]: lexicon-based polarity probabilities.
//! - [`objective`]: emotional distance, PEG/NER/NLL losses and the composite
//!   loss with its analytic gradient; [`gradcheck`] verifies it.
//! - [`model`]: a small autoregressive dialog LM with hand-written
//!   backpropagation, Adam, training and decoding.
//! - [`corpus`]: synthetic dialogs, filtering rules and training examples.
//! - [`eval`]: self-chat and the PEG/E/PEGE, BLEU and Distinct metrics.
//! - [`config`]: the declarative run configuration used by the CLI.

pub mod classifier;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod lexicon;
pub mod model;
pub mod objective;
pub mod text;

pub use error::{Error, Result};
