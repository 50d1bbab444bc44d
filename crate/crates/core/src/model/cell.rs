//! Recurrent cells and their unrolled forward passes.
//!
//! Masked positions carry the previous state through unchanged, so padding
//! appended to a sequence never influences the states at real positions in
//! either direction.

use super::params::{CellParams, LstmParams, RnnParams};
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Vec64};

/// Activations of one LSTM step, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct LstmGates {
    pub i: Vec64,
    pub f: Vec64,
    pub g: Vec64,
    pub o: Vec64,
    pub tanh_c: Vec64,
}

/// States of one direction over a whole sequence, aligned to input positions.
#[derive(Debug, Clone)]
pub(crate) struct DirectionTrace {
    pub reverse: bool,
    pub h: Vec<Vec64>,
    /// Cell states (LSTM only).
    pub c: Vec<Vec64>,
    /// `Some` at valid positions (LSTM only).
    pub gates: Vec<Option<LstmGates>>,
    pub valid: Vec<bool>,
}

impl DirectionTrace {
    /// Position processed just before `t`, if any.
    pub fn prev(&self, t: usize) -> Option<usize> {
        if self.reverse {
            (t + 1 < self.h.len()).then_some(t + 1)
        } else {
            t.checked_sub(1)
        }
    }

    /// Positions in processing order.
    pub fn order(&self) -> Box<dyn DoubleEndedIterator<Item = usize>> {
        let n = self.h.len();
        if self.reverse {
            Box::new((0..n).rev())
        } else {
            Box::new(0..n)
        }
    }
}

pub(crate) fn lstm_step(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec64, Vec64, LstmGates) {
    let mut a_i = p.b_i.clone();
    let mut a_f = p.b_f.clone();
    let mut a_g = p.b_c.clone();
    let mut a_o = p.b_o.clone();
    p.w_xi.gemv_acc(x, &mut a_i);
    p.w_hi.gemv_acc(h_prev, &mut a_i);
    p.w_xf.gemv_acc(x, &mut a_f);
    p.w_hf.gemv_acc(h_prev, &mut a_f);
    p.w_xc.gemv_acc(x, &mut a_g);
    p.w_hc.gemv_acc(h_prev, &mut a_g);
    p.w_xo.gemv_acc(x, &mut a_o);
    p.w_ho.gemv_acc(h_prev, &mut a_o);

    let n = p.hidden();
    let mut c = vec![0.0; n];
    for k in 0..n {
        a_i[k] = sigmoid(a_i[k] + p.p_i[k] * c_prev[k]);
        a_f[k] = sigmoid(a_f[k] + p.p_f[k] * c_prev[k]);
        a_g[k] = a_g[k].tanh();
        c[k] = a_f[k] * c_prev[k] + a_i[k] * a_g[k];
    }
    let mut tanh_c = vec![0.0; n];
    let mut h = vec![0.0; n];
    for k in 0..n {
        // Output-gate peephole looks at the new cell state.
        a_o[k] = sigmoid(a_o[k] + p.p_o[k] * c[k]);
        tanh_c[k] = c[k].tanh();
        h[k] = a_o[k] * tanh_c[k];
    }
    (h, c, LstmGates { i: a_i, f: a_f, g: a_g, o: a_o, tanh_c })
}

pub(crate) fn rnn_step(p: &RnnParams, x: &[f64], h_prev: &[f64]) -> Vec64 {
    let mut a = p.b_h.clone();
    p.w_xh.gemv_acc(x, &mut a);
    p.w_hh.gemv_acc(h_prev, &mut a);
    a.iter_mut().for_each(|v| *v = sigmoid(*v));
    a
}

fn check_inputs(cell: &CellParams, inputs: &[Vec64], mask: Option<&[bool]>) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::shape("empty input sequence"));
    }
    if let Some(t) = inputs.iter().position(|x| x.len() != cell.input()) {
        return Err(Error::shape(format!(
            "input {t} has width {}, cell expects {}",
            inputs[t].len(),
            cell.input()
        )));
    }
    if let Some(m) = mask {
        if m.len() != inputs.len() {
            return Err(Error::shape("mask length differs from sequence length"));
        }
        if !m.iter().any(|&v| v) {
            return Err(Error::shape("every position is masked"));
        }
    }
    Ok(())
}

/// Runs one direction. Inputs must already be shape-checked.
pub(crate) fn run_direction(cell: &CellParams, inputs: &[Vec64], mask: Option<&[bool]>, reverse: bool) -> DirectionTrace {
    let n = inputs.len();
    let hidden = cell.hidden();
    let is_lstm = matches!(cell, CellParams::Lstm(_));
    let mut trace = DirectionTrace {
        reverse,
        h: vec![Vec::new(); n],
        c: if is_lstm { vec![Vec::new(); n] } else { Vec::new() },
        gates: vec![None; n],
        valid: (0..n).map(|t| mask.is_none_or(|m| m[t])).collect(),
    };
    let zero = vec![0.0; hidden];
    for t in trace.order() {
        let prev = trace.prev(t);
        let h_prev = prev.map_or(&zero, |p| &trace.h[p]).clone();
        if !trace.valid[t] {
            trace.h[t] = h_prev;
            if is_lstm {
                trace.c[t] = prev.map_or(&zero, |p| &trace.c[p]).clone();
            }
            continue;
        }
        match cell {
            CellParams::Lstm(p) => {
                let c_prev = prev.map_or(&zero, |q| &trace.c[q]);
                let (h, c, gates) = lstm_step(p, &inputs[t], &h_prev, c_prev);
                trace.h[t] = h;
                trace.c[t] = c;
                trace.gates[t] = Some(gates);
            }
            CellParams::Rnn(p) => trace.h[t] = rnn_step(p, &inputs[t], &h_prev),
        }
    }
    trace
}

/// One peephole LSTM step: returns `(h_t, c_t)`.
pub fn lstm_cell_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], params: &LstmParams) -> Result<(Vec64, Vec64)> {
    let n = params.hidden();
    if x.len() != params.input() || h_prev.len() != n || c_prev.len() != n {
        return Err(Error::shape(format!(
            "lstm step expects x:{} h:{n} c:{n}, got x:{} h:{} c:{}",
            params.input(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let (h, c, _) = lstm_step(params, x, h_prev, c_prev);
    Ok((h, c))
}

pub fn rnn_cell_step(x: &[f64], h_prev: &[f64], params: &RnnParams) -> Result<Vec64> {
    if x.len() != params.input() || h_prev.len() != params.hidden() {
        return Err(Error::shape("rnn step input or state width mismatch"));
    }
    Ok(rnn_step(params, x, h_prev))
}

/// Result of a left-to-right unroll from zero initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Unrolled {
    pub hidden: Vec<Vec64>,
    /// Final cell state (LSTM only).
    pub final_cell: Option<Vec64>,
}

pub fn unroll_forward(inputs: &[Vec64], params: &CellParams) -> Result<Unrolled> {
    check_inputs(params, inputs, None)?;
    let mut trace = run_direction(params, inputs, None, false);
    Ok(Unrolled { final_cell: trace.c.pop(), hidden: trace.h })
}

/// Forward states `hf` (left to right) and backward states `hb` (right to
/// left), both aligned to input positions.
pub fn bidirectional_forward(
    inputs: &[Vec64],
    fwd: &CellParams,
    bwd: &CellParams,
) -> Result<(Vec<Vec64>, Vec<Vec64>)> {
    bidirectional_forward_masked(inputs, None, fwd, bwd)
}

pub fn bidirectional_forward_masked(
    inputs: &[Vec64],
    mask: Option<&[bool]>,
    fwd: &CellParams,
    bwd: &CellParams,
) -> Result<(Vec<Vec64>, Vec<Vec64>)> {
    check_inputs(fwd, inputs, mask)?;
    check_inputs(bwd, inputs, mask)?;
    let f = run_direction(fwd, inputs, mask, false);
    let b = run_direction(bwd, inputs, mask, true);
    Ok((f.h, b.h))
}

pub(crate) fn checked_run(cell: &CellParams, inputs: &[Vec64], mask: Option<&[bool]>, reverse: bool) -> Result<DirectionTrace> {
    check_inputs(cell, inputs, mask)?;
    Ok(run_direction(cell, inputs, mask, reverse))
}
