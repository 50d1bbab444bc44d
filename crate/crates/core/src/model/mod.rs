//! The recurrent classifier family: peephole LSTM and sigmoid RNN cells,
//! unidirectional or bidirectional, over embedded tokens or framed dense
//! vectors, with a softmax readout.

mod cell;
mod checkpoint;
mod params;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cell::{
    bidirectional_forward, bidirectional_forward_masked, lstm_cell_step, rnn_cell_step, unroll_forward,
    Unrolled,
};
pub(crate) use cell::{checked_run, DirectionTrace};
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use params::{init_model, CellParams, EmbeddingTable, LstmParams, ModelParams, ReadoutParams, RnnParams};

use crate::data::{frame_dense, FeatureMode, RowView, DENSE_DIM};
use crate::error::{Error, Result};
use crate::numerics::{softmax, Vec64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Rnn,
}

/// How per-position states are pooled into one utterance feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutMode {
    /// Forward state at the last valid position, backward state at the first.
    Last,
    /// Mean of the concatenated states over valid positions.
    Mean,
}

macro_rules! text_enum {
    ($ty:ty, $($variant:ident => $name:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " {:?}"), other
                    ))),
                }
            }
        }
    };
}

text_enum!(CellKind, Lstm => "lstm", Rnn => "rnn");
text_enum!(ReadoutMode, Last => "last", Mean => "mean");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: FeatureMode,
    pub cell: CellKind,
    pub bidirectional: bool,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub readout: ReadoutMode,
    /// Frame width for dense inputs; must divide 400.
    pub frame_size: usize,
    pub class_count: usize,
    /// Embedding rows (0 in dense mode).
    pub vocab_size: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be >= 1".into()));
        }
        if self.class_count < 2 {
            return Err(Error::Config("class_count must be >= 2".into()));
        }
        match self.mode {
            FeatureMode::Dense => {
                if self.frame_size == 0 || !DENSE_DIM.is_multiple_of(self.frame_size) {
                    return Err(Error::Config(format!("frame_size {} does not divide {DENSE_DIM}", self.frame_size)));
                }
            }
            FeatureMode::Char | FeatureMode::Word => {
                if self.embed_dim == 0 {
                    return Err(Error::Config("embed_dim must be >= 1".into()));
                }
                if self.vocab_size < 2 {
                    return Err(Error::Config("vocab_size must include PAD and UNK".into()));
                }
            }
        }
        Ok(())
    }

    /// Width of each recurrent input vector.
    pub fn input_dim(&self) -> usize {
        match self.mode {
            FeatureMode::Dense => self.frame_size,
            _ => self.embed_dim,
        }
    }

    pub fn readout_width(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden_dim
        } else {
            self.hidden_dim
        }
    }
}

/// Returns the embedding rows for `ids`. PAD (id 0) yields zeros.
pub fn embed_lookup(ids: &[usize], table: &EmbeddingTable) -> Result<Vec<Vec64>> {
    ids.iter()
        .map(|&id| {
            if id >= table.vocab_size() {
                Err(Error::Index(format!("token id {id} >= vocabulary size {}", table.vocab_size())))
            } else {
                Ok(table.table.row(id).to_vec())
            }
        })
        .collect()
}

/// Per-position recurrent states.
#[derive(Debug, Clone, PartialEq)]
pub struct States {
    pub forward: Vec<Vec64>,
    pub backward: Option<Vec<Vec64>>,
}

fn valid_range(mask: &[bool]) -> Result<(usize, usize)> {
    let first = mask.iter().position(|&v| v);
    let last = mask.iter().rposition(|&v| v);
    match (first, last) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::shape("readout needs at least one valid position")),
    }
}

/// Pools states into the readout feature vector.
pub fn readout_feature(states: &States, mask: &[bool], mode: ReadoutMode) -> Result<Vec64> {
    if mask.len() != states.forward.len() || states.backward.as_ref().is_some_and(|b| b.len() != mask.len()) {
        return Err(Error::shape("mask length differs from state sequence"));
    }
    let (first, last) = valid_range(mask)?;
    match mode {
        ReadoutMode::Last => {
            let mut feat = states.forward[last].clone();
            if let Some(b) = &states.backward {
                feat.extend_from_slice(&b[first]);
            }
            Ok(feat)
        }
        ReadoutMode::Mean => {
            let h = states.forward[first].len();
            let width = if states.backward.is_some() { 2 * h } else { h };
            let mut feat = vec![0.0; width];
            let mut count = 0usize;
            for t in (0..mask.len()).filter(|&t| mask[t]) {
                count += 1;
                for (acc, v) in feat[..h].iter_mut().zip(&states.forward[t]) {
                    *acc += v;
                }
                if let Some(b) = &states.backward {
                    for (acc, v) in feat[h..].iter_mut().zip(&b[t]) {
                        *acc += v;
                    }
                }
            }
            let inv = 1.0 / count as f64;
            feat.iter_mut().for_each(|v| *v *= inv);
            Ok(feat)
        }
    }
}

/// `softmax(W_out · feature + b_out)`.
pub fn readout(states: &States, mask: &[bool], params: &ReadoutParams, mode: ReadoutMode) -> Result<Vec64> {
    let feat = readout_feature(states, mask, mode)?;
    softmax(&crate::numerics::affine(&params.w_out, &feat, &params.b_out)?)
}

/// Everything computed by one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    pub ids: Option<Vec<usize>>,
    pub inputs: Vec<Vec64>,
    pub mask: Vec<bool>,
    pub fwd: DirectionTrace,
    pub bwd: Option<DirectionTrace>,
    pub feature: Vec64,
    pub probs: Vec64,
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.validate(&config)?;
        Ok(Model { config, params })
    }

    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_model(&config, seed)?;
        Ok(Model { config, params })
    }

    /// Input vectors and validity mask for one row.
    pub(crate) fn prepare(&self, row: RowView<'_>) -> Result<(Option<Vec<usize>>, Vec<Vec64>, Vec<bool>)> {
        match (row, &self.params.embedding) {
            (RowView::Tokens { ids, mask }, Some(table)) => {
                if let Some(m) = mask {
                    if m.len() != ids.len() {
                        return Err(Error::shape("mask length differs from token sequence"));
                    }
                }
                let inputs = embed_lookup(ids, table)?;
                let mask = mask.map_or_else(|| vec![true; ids.len()], <[bool]>::to_vec);
                Ok((Some(ids.to_vec()), inputs, mask))
            }
            (RowView::Dense(v), None) => {
                if v.len() != DENSE_DIM {
                    return Err(Error::shape(format!("dense input has width {}, expected {DENSE_DIM}", v.len())));
                }
                let frames = frame_dense(v, self.config.frame_size)?;
                let n = frames.len();
                Ok((None, frames, vec![true; n]))
            }
            (RowView::Tokens { .. }, None) => Err(Error::shape("token input given to a dense-mode model")),
            (RowView::Dense(_), Some(_)) => Err(Error::shape(format!(
                "dense input given to a {}-mode model",
                self.config.mode
            ))),
        }
    }

    pub(crate) fn forward_trace(&self, row: RowView<'_>) -> Result<ForwardTrace> {
        let (ids, inputs, mask) = self.prepare(row)?;
        let fwd = checked_run(&self.params.forward, &inputs, Some(&mask), false)?;
        let bwd = match &self.params.backward {
            Some(b) => Some(checked_run(b, &inputs, Some(&mask), true)?),
            None => None,
        };
        let states = States { forward: fwd.h.clone(), backward: bwd.as_ref().map(|b| b.h.clone()) };
        let feature = readout_feature(&states, &mask, self.config.readout)?;
        let logits = crate::numerics::affine(&self.params.readout.w_out, &feature, &self.params.readout.b_out)?;
        let probs = softmax(&logits)?;
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite class probabilities".into()));
        }
        Ok(ForwardTrace { ids, inputs, mask, fwd, bwd, feature, probs })
    }

    /// Class probabilities for one input row.
    pub fn forward_classify(&self, row: RowView<'_>) -> Result<Vec64> {
        Ok(self.forward_trace(row)?.probs)
    }
}
