use crate::data::{Batch, RowView, PAD};
use crate::error::{Error, Result};
use crate::model::{CellParams, DirectionTrace, Model, ModelParams, ReadoutMode, ReadoutParams};
use crate::numerics::{argmax, axpy, cross_entropy, Matrix, Vec64, PROB_FLOOR};
use crate::parallel::Executor;

/// Gradients laid out exactly like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet(pub ModelParams);

impl GradientSet {
    pub fn zeros_for(params: &ModelParams) -> Self {
        GradientSet(params.zeros_like())
    }

    pub fn params(&self) -> &ModelParams {
        &self.0
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.0
    }

    /// Global L2 norm over all coordinates.
    pub fn norm(&self) -> f64 {
        self.0
            .tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.0.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.0.to_flat()
    }

    pub fn all_finite(&self) -> bool {
        self.0.all_finite()
    }
}

/// Per-sample gradient. Embedding rows are kept sparse so large
/// vocabularies do not cost a full table per sample.
struct SampleGrad {
    loss: f64,
    correct: bool,
    dense: ModelParams,
    embedding_rows: Vec<(usize, Vec64)>,
}

fn zero_cell(c: &CellParams) -> CellParams {
    match c {
        CellParams::Lstm(p) => CellParams::Lstm(crate::model::LstmParams::zeros(p.input(), p.hidden())),
        CellParams::Rnn(p) => CellParams::Rnn(crate::model::RnnParams::zeros(p.input(), p.hidden())),
    }
}

fn zeros_without_embedding(p: &ModelParams) -> ModelParams {
    ModelParams {
        embedding: None,
        forward: zero_cell(&p.forward),
        backward: p.backward.as_ref().map(zero_cell),
        readout: ReadoutParams {
            w_out: Matrix::zeros(p.readout.w_out.rows(), p.readout.w_out.cols()),
            b_out: vec![0.0; p.readout.b_out.len()],
        },
    }
}

fn add(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

fn mul(a: &[f64], b: &[f64]) -> Vec64 {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Backpropagates `dh_ext` (gradient w.r.t. the exposed state at each
/// position) through one direction. Accumulates parameter gradients into
/// `grad` and returns the gradient w.r.t. each input vector.
fn backprop_direction(
    cell: &CellParams,
    trace: &DirectionTrace,
    inputs: &[Vec64],
    dh_ext: &[Vec64],
    grad: &mut CellParams,
) -> Vec<Vec64> {
    let n = inputs.len();
    let hidden = cell.hidden();
    let zero = vec![0.0; hidden];
    let mut dx = vec![vec![0.0; cell.input()]; n];
    let mut dh_carry = zero.clone();
    let mut dc_carry = zero.clone();

    for t in trace.order().rev() {
        let mut dh = dh_ext[t].clone();
        add(&mut dh, &dh_carry);
        if !trace.valid[t] {
            dh_carry = dh;
            continue;
        }
        let prev = trace.prev(t);
        let h_prev = prev.map_or(&zero, |p| &trace.h[p]);
        let x = &inputs[t];

        match (cell, &mut *grad) {
            (CellParams::Lstm(p), CellParams::Lstm(g)) => {
                let gates = trace.gates[t].as_ref().expect("valid LSTM step has gates");
                let c = &trace.c[t];
                let c_prev = prev.map_or(&zero, |q| &trace.c[q]);
                let mut dc = dc_carry.clone();
                let mut da_i = vec![0.0; hidden];
                let mut da_f = vec![0.0; hidden];
                let mut da_g = vec![0.0; hidden];
                let mut da_o = vec![0.0; hidden];
                for k in 0..hidden {
                    let (i, f, gg, o, tc) = (gates.i[k], gates.f[k], gates.g[k], gates.o[k], gates.tanh_c[k]);
                    da_o[k] = dh[k] * tc * o * (1.0 - o);
                    dc[k] += dh[k] * o * (1.0 - tc * tc) + da_o[k] * p.p_o[k];
                    da_i[k] = dc[k] * gg * i * (1.0 - i);
                    da_g[k] = dc[k] * i * (1.0 - gg * gg);
                    da_f[k] = dc[k] * c_prev[k] * f * (1.0 - f);
                }
                let mut dc_prev = vec![0.0; hidden];
                for k in 0..hidden {
                    dc_prev[k] = dc[k] * gates.f[k] + da_i[k] * p.p_i[k] + da_f[k] * p.p_f[k];
                }
                add(&mut g.p_i, &mul(&da_i, c_prev));
                add(&mut g.p_f, &mul(&da_f, c_prev));
                add(&mut g.p_o, &mul(&da_o, c));
                add(&mut g.b_i, &da_i);
                add(&mut g.b_f, &da_f);
                add(&mut g.b_c, &da_g);
                add(&mut g.b_o, &da_o);
                g.w_xi.outer_acc(&da_i, x);
                g.w_xf.outer_acc(&da_f, x);
                g.w_xc.outer_acc(&da_g, x);
                g.w_xo.outer_acc(&da_o, x);
                let mut dh_prev = vec![0.0; hidden];
                if prev.is_some() {
                    g.w_hi.outer_acc(&da_i, h_prev);
                    g.w_hf.outer_acc(&da_f, h_prev);
                    g.w_hc.outer_acc(&da_g, h_prev);
                    g.w_ho.outer_acc(&da_o, h_prev);
                    p.w_hi.gemv_t_acc(&da_i, &mut dh_prev);
                    p.w_hf.gemv_t_acc(&da_f, &mut dh_prev);
                    p.w_hc.gemv_t_acc(&da_g, &mut dh_prev);
                    p.w_ho.gemv_t_acc(&da_o, &mut dh_prev);
                }
                p.w_xi.gemv_t_acc(&da_i, &mut dx[t]);
                p.w_xf.gemv_t_acc(&da_f, &mut dx[t]);
                p.w_xc.gemv_t_acc(&da_g, &mut dx[t]);
                p.w_xo.gemv_t_acc(&da_o, &mut dx[t]);
                dh_carry = dh_prev;
                dc_carry = dc_prev;
            }
            (CellParams::Rnn(p), CellParams::Rnn(g)) => {
                let h = &trace.h[t];
                let da: Vec64 = (0..hidden).map(|k| dh[k] * h[k] * (1.0 - h[k])).collect();
                add(&mut g.b_h, &da);
                g.w_xh.outer_acc(&da, x);
                let mut dh_prev = vec![0.0; hidden];
                if prev.is_some() {
                    g.w_hh.outer_acc(&da, h_prev);
                    p.w_hh.gemv_t_acc(&da, &mut dh_prev);
                }
                p.w_xh.gemv_t_acc(&da, &mut dx[t]);
                dh_carry = dh_prev;
            }
            _ => unreachable!("gradient layout mirrors the parameters"),
        }
    }
    dx
}

fn sample_gradient(model: &Model, row: RowView<'_>, label: usize) -> Result<SampleGrad> {
    let params = &model.params;
    let trace = model.forward_trace(row)?;
    let classes = trace.probs.len();
    if label >= classes {
        return Err(Error::Index(format!("label {label} out of range for {classes} classes")));
    }
    let loss = cross_entropy(&trace.probs, label)?;
    let correct = argmax(&trace.probs) == label;

    let mut dense = zeros_without_embedding(params);

    // Below the probability floor the clamped loss is locally constant.
    let dlogits: Vec64 = if trace.probs[label] < PROB_FLOOR {
        vec![0.0; classes]
    } else {
        let mut d = trace.probs.clone();
        d[label] -= 1.0;
        d
    };
    dense.readout.w_out.outer_acc(&dlogits, &trace.feature);
    add(&mut dense.readout.b_out, &dlogits);
    let mut dfeature = vec![0.0; trace.feature.len()];
    params.readout.w_out.gemv_t_acc(&dlogits, &mut dfeature);

    let n = trace.inputs.len();
    let hidden = params.forward.hidden();
    let mut dh_f = vec![vec![0.0; hidden]; n];
    let mut dh_b = vec![vec![0.0; hidden]; n];
    let valid: Vec<usize> = (0..n).filter(|&t| trace.mask[t]).collect();
    let bidir = trace.bwd.is_some();
    match model.config.readout {
        ReadoutMode::Last => {
            let (first, last) = (valid[0], valid[valid.len() - 1]);
            add(&mut dh_f[last], &dfeature[..hidden]);
            if bidir {
                add(&mut dh_b[first], &dfeature[hidden..]);
            }
        }
        ReadoutMode::Mean => {
            let inv = 1.0 / valid.len() as f64;
            for &t in &valid {
                axpy(inv, &dfeature[..hidden], &mut dh_f[t]);
                if bidir {
                    axpy(inv, &dfeature[hidden..], &mut dh_b[t]);
                }
            }
        }
    }

    let mut dx = backprop_direction(&params.forward, &trace.fwd, &trace.inputs, &dh_f, &mut dense.forward);
    if let (Some(bp), Some(bt), Some(bg)) = (&params.backward, &trace.bwd, &mut dense.backward) {
        let dxb = backprop_direction(bp, bt, &trace.inputs, &dh_b, bg);
        for (a, b) in dx.iter_mut().zip(&dxb) {
            add(a, b);
        }
    }

    let embedding_rows = match &trace.ids {
        Some(ids) => valid
            .iter()
            .filter(|&&t| ids[t] != PAD)
            .map(|&t| (ids[t], std::mem::take(&mut dx[t])))
            .collect(),
        None => Vec::new(),
    };
    Ok(SampleGrad { loss, correct, dense, embedding_rows })
}

/// Loss, gradients, and running accuracy of one batch.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub loss: f64,
    pub gradients: GradientSet,
    pub correct: usize,
}

/// Mean cross-entropy over the batch and its exact gradient (serial).
pub fn loss_and_gradients(model: &Model, batch: &Batch) -> Result<(f64, GradientSet)> {
    let out = loss_and_gradients_with(model, batch, &Executor::serial())?;
    Ok((out.loss, out.gradients))
}

/// Like [`loss_and_gradients`], with per-sample work spread over `exec`.
/// Per-sample results are reduced in sample order, so the outcome does not
/// depend on the executor.
pub fn loss_and_gradients_with(model: &Model, batch: &Batch, exec: &Executor) -> Result<BatchOutcome> {
    if batch.is_empty() {
        return Err(Error::shape("empty batch"));
    }
    let per_sample = exec.map(batch.len(), |r| sample_gradient(model, batch.row(r), batch.labels[r]));

    let mut grads = GradientSet::zeros_for(&model.params);
    let mut loss = 0.0;
    let mut correct = 0;
    for sg in per_sample {
        let sg = sg?;
        loss += sg.loss;
        correct += usize::from(sg.correct);
        grads.0.forward_backward_readout_add(&sg.dense);
        if let Some(table) = &mut grads.0.embedding {
            for (id, row) in &sg.embedding_rows {
                add(table.table.row_mut(*id), row);
            }
        }
    }
    let n = batch.len() as f64;
    loss /= n;
    grads.scale(1.0 / n);
    grads.0.pin_pad();
    if !loss.is_finite() || !grads.all_finite() {
        return Err(Error::Numeric("non-finite loss or gradient".into()));
    }
    Ok(BatchOutcome { loss, gradients: grads, correct })
}

impl ModelParams {
    /// Adds every non-embedding block of `other`.
    fn forward_backward_readout_add(&mut self, other: &ModelParams) {
        let mut mine = Vec::new();
        mine.extend(self.forward.tensors_mut());
        if let Some(b) = &mut self.backward {
            mine.extend(b.tensors_mut());
        }
        mine.push(self.readout.w_out.as_mut_slice());
        mine.push(&mut self.readout.b_out);
        let theirs: Vec<&[f64]> = other
            .tensors()
            .into_iter()
            .filter(|(name, _)| name != "embedding")
            .map(|(_, t)| t)
            .collect();
        debug_assert_eq!(mine.len(), theirs.len());
        for (a, b) in mine.into_iter().zip(theirs) {
            add(a, b);
        }
    }
}
