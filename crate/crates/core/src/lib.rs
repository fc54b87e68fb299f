//! Document vectors from recurrent language-model adaptation.
//!
//! A parent language model (a class-factorised simple RNN or LSTM) is trained
//! on a corpus, a chosen subset of its parameters is re-trained on each
//! document, and the adapted parameters are flattened into a fixed-length
//! document vector. The crate also provides the TF-IDF, class-frequency and
//! PV-DM baselines and a cross-validated genre-classification harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptation;
pub mod baselines;
pub mod corpus;
mod error;
pub mod evaluate;
pub mod lm;
pub mod numerics;
pub mod pipeline;
pub mod vectors;
pub mod word_classes;

pub use error::{Error, Result};
