use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Prng, Stream, Vec64};

/// Peephole LSTM parameters. `w_x*` are H×D, `w_h*` are H×H, and the
/// peepholes `p_*` are diagonal (one weight per hidden unit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmParams {
    pub w_xi: Matrix,
    pub w_xf: Matrix,
    pub w_xc: Matrix,
    pub w_xo: Matrix,
    pub w_hi: Matrix,
    pub w_hf: Matrix,
    pub w_hc: Matrix,
    pub w_ho: Matrix,
    pub p_i: Vec64,
    pub p_f: Vec64,
    pub p_o: Vec64,
    pub b_i: Vec64,
    pub b_f: Vec64,
    pub b_c: Vec64,
    pub b_o: Vec64,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let x = || Matrix::zeros(hidden, input);
        let h = || Matrix::zeros(hidden, hidden);
        let v = || vec![0.0; hidden];
        LstmParams {
            w_xi: x(),
            w_xf: x(),
            w_xc: x(),
            w_xo: x(),
            w_hi: h(),
            w_hf: h(),
            w_hc: h(),
            w_ho: h(),
            p_i: v(),
            p_f: v(),
            p_o: v(),
            b_i: v(),
            b_f: v(),
            b_c: v(),
            b_o: v(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_i.len()
    }

    pub fn input(&self) -> usize {
        self.w_xi.cols()
    }
}

/// Plain sigmoid RNN: `h_t = σ(W_xh x_t + W_hh h_{t−1} + b_h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnParams {
    pub w_xh: Matrix,
    pub w_hh: Matrix,
    pub b_h: Vec64,
}

impl RnnParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        RnnParams {
            w_xh: Matrix::zeros(hidden, input),
            w_hh: Matrix::zeros(hidden, hidden),
            b_h: vec![0.0; hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_h.len()
    }

    pub fn input(&self) -> usize {
        self.w_xh.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellParams {
    Lstm(LstmParams),
    Rnn(RnnParams),
}

impl CellParams {
    pub fn hidden(&self) -> usize {
        match self {
            CellParams::Lstm(p) => p.hidden(),
            CellParams::Rnn(p) => p.hidden(),
        }
    }

    pub fn input(&self) -> usize {
        match self {
            CellParams::Lstm(p) => p.input(),
            CellParams::Rnn(p) => p.input(),
        }
    }

    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            CellParams::Lstm(p) => vec![
                ("w_xi", p.w_xi.as_slice()),
                ("w_xf", p.w_xf.as_slice()),
                ("w_xc", p.w_xc.as_slice()),
                ("w_xo", p.w_xo.as_slice()),
                ("w_hi", p.w_hi.as_slice()),
                ("w_hf", p.w_hf.as_slice()),
                ("w_hc", p.w_hc.as_slice()),
                ("w_ho", p.w_ho.as_slice()),
                ("p_i", &p.p_i),
                ("p_f", &p.p_f),
                ("p_o", &p.p_o),
                ("b_i", &p.b_i),
                ("b_f", &p.b_f),
                ("b_c", &p.b_c),
                ("b_o", &p.b_o),
            ],
            CellParams::Rnn(p) => {
                vec![("w_xh", p.w_xh.as_slice()), ("w_hh", p.w_hh.as_slice()), ("b_h", &p.b_h)]
            }
        }
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            CellParams::Lstm(p) => vec![
                p.w_xi.as_mut_slice(),
                p.w_xf.as_mut_slice(),
                p.w_xc.as_mut_slice(),
                p.w_xo.as_mut_slice(),
                p.w_hi.as_mut_slice(),
                p.w_hf.as_mut_slice(),
                p.w_hc.as_mut_slice(),
                p.w_ho.as_mut_slice(),
                &mut p.p_i,
                &mut p.p_f,
                &mut p.p_o,
                &mut p.b_i,
                &mut p.b_f,
                &mut p.b_c,
                &mut p.b_o,
            ],
            CellParams::Rnn(p) => vec![p.w_xh.as_mut_slice(), p.w_hh.as_mut_slice(), &mut p.b_h],
        }
    }

    fn init(&mut self, rng: &mut Prng) {
        match self {
            CellParams::Lstm(p) => {
                for w in [&mut p.w_xi, &mut p.w_xf, &mut p.w_xc, &mut p.w_xo] {
                    glorot(w, rng);
                }
                for w in [&mut p.w_hi, &mut p.w_hf, &mut p.w_hc, &mut p.w_ho] {
                    glorot(w, rng);
                }
                p.b_f.fill(1.0);
            }
            CellParams::Rnn(p) => {
                glorot(&mut p.w_xh, rng);
                glorot(&mut p.w_hh, rng);
            }
        }
    }
}

/// Final affine layer over the pooled recurrent features; `w_out` is C×R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutParams {
    pub w_out: Matrix,
    pub b_out: Vec64,
}

/// V×E lookup table. Row 0 (PAD) stays all-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingTable {
    pub table: Matrix,
}

impl EmbeddingTable {
    pub fn vocab_size(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn pin_pad(&mut self) {
        self.table.row_mut(crate::data::PAD).fill(0.0);
    }
}

/// Every trainable block of a model. Gradient sets and optimizer moments
/// reuse this layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingTable>,
    pub forward: CellParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backward: Option<CellParams>,
    pub readout: ReadoutParams,
}

fn glorot(w: &mut Matrix, rng: &mut Prng) {
    let limit = (6.0 / (w.rows() + w.cols()) as f64).sqrt();
    for v in w.as_mut_slice() {
        *v = rng.symmetric(limit);
    }
}

impl ModelParams {
    /// All-zero parameters shaped for `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.input_dim();
        let h = config.hidden_dim;
        let cell = || match config.cell {
            super::CellKind::Lstm => CellParams::Lstm(LstmParams::zeros(d, h)),
            super::CellKind::Rnn => CellParams::Rnn(RnnParams::zeros(d, h)),
        };
        ModelParams {
            embedding: config
                .mode
                .is_text()
                .then(|| EmbeddingTable { table: Matrix::zeros(config.vocab_size, config.embed_dim) }),
            forward: cell(),
            backward: config.bidirectional.then(cell),
            readout: ReadoutParams {
                w_out: Matrix::zeros(config.class_count, config.readout_width()),
                b_out: vec![0.0; config.class_count],
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    /// Named blocks in a fixed order (embedding, forward, backward, readout).
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        if let Some(e) = &self.embedding {
            out.push(("embedding".to_owned(), e.table.as_slice()));
        }
        for (name, t) in self.forward.tensors() {
            out.push((format!("forward.{name}"), t));
        }
        if let Some(b) = &self.backward {
            for (name, t) in b.tensors() {
                out.push((format!("backward.{name}"), t));
            }
        }
        out.push(("readout.w_out".to_owned(), self.readout.w_out.as_slice()));
        out.push(("readout.b_out".to_owned(), &self.readout.b_out));
        out
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(e) = &mut self.embedding {
            out.push(e.table.as_mut_slice());
        }
        out.extend(self.forward.tensors_mut());
        if let Some(b) = &mut self.backward {
            out.extend(b.tensors_mut());
        }
        out.push(self.readout.w_out.as_mut_slice());
        out.push(&mut self.readout.b_out);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    pub fn copy_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(format!(
                "flat parameter vector has {} entries, model has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    /// Applies `f(self_coord, other_coord)` across two identically shaped sets.
    pub fn zip_apply(&mut self, other: &ModelParams, mut f: impl FnMut(&mut f64, f64)) {
        let theirs = other.tensors();
        let mine = self.tensors_mut();
        assert_eq!(mine.len(), theirs.len(), "parameter layouts differ");
        for (a, (_, b)) in mine.into_iter().zip(theirs) {
            assert_eq!(a.len(), b.len(), "parameter shapes differ");
            for (x, &y) in a.iter_mut().zip(b) {
                f(x, y);
            }
        }
    }

    pub fn pin_pad(&mut self) {
        if let Some(e) = &mut self.embedding {
            e.pin_pad();
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Checks every block's shape against `config`.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let expected = ModelParams::zeros(config);
        let mine = self.tensors();
        let theirs = expected.tensors();
        if mine.len() != theirs.len() {
            return Err(Error::shape("parameter blocks do not match the model config"));
        }
        for ((name, a), (_, b)) in mine.iter().zip(&theirs) {
            if a.len() != b.len() {
                return Err(Error::shape(format!(
                    "parameter {name} has {} entries, config implies {}",
                    a.len(),
                    b.len()
                )));
            }
        }
        let cell_ok = |c: &CellParams| {
            matches!(
                (c, config.cell),
                (CellParams::Lstm(_), super::CellKind::Lstm) | (CellParams::Rnn(_), super::CellKind::Rnn)
            ) && c.input() == config.input_dim()
        };
        if !cell_ok(&self.forward) || !self.backward.as_ref().is_none_or(cell_ok) {
            return Err(Error::shape("cell parameters do not match the model config"));
        }
        if let Some(e) = &self.embedding {
            if e.dim() != config.embed_dim || e.vocab_size() != config.vocab_size {
                return Err(Error::shape("embedding table does not match the model config"));
            }
            if e.table.row(crate::data::PAD).iter().any(|&v| v != 0.0) {
                return Err(Error::shape("PAD embedding row must be zero"));
            }
        }
        if !self.all_finite() {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Fills every coordinate with U(−scale, scale), keeping PAD at zero.
    /// Used to build generic models for gradient checks.
    pub fn randomize(&mut self, rng: &mut Prng, scale: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.symmetric(scale);
            }
        }
        self.pin_pad();
    }
}

/// Glorot-uniform weights, zero peepholes, forget bias 1, embeddings
/// U(−0.1, 0.1) with a zero PAD row, and an all-zero readout.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = Prng::new(seed, Stream::Init);
    let mut params = ModelParams::zeros(config);
    if let Some(e) = &mut params.embedding {
        for v in e.table.as_mut_slice() {
            *v = rng.symmetric(0.1);
        }
        e.pin_pad();
    }
    params.forward.init(&mut rng);
    if let Some(b) = &mut params.backward {
        b.init(&mut rng);
    }
    Ok(params)
}
