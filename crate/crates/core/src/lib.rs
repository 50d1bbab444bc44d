//! Recurrent dialect and language identification: peephole LSTM and sigmoid
//! RNN classifiers over characters, words, or dense utterance vectors, with
//! training, gradient checking, and confusion-matrix metrics.

pub mod data;
mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod parallel;
pub mod training;

pub use error::{Error, Result};
