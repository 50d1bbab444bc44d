use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::backprop::GradientSet;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Rescales `g` so its global L2 norm is at most `threshold`. Returns the
/// norm before clipping.
pub fn clip_global_norm(g: &mut GradientSet, threshold: f64) -> f64 {
    let norm = g.norm();
    if threshold > 0.0 && norm > threshold {
        g.scale(threshold / norm);
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub velocity: ModelParams,
}

impl SgdState {
    pub fn new(params: &ModelParams) -> Self {
        SgdState { velocity: params.zeros_like() }
    }
}

/// `v ← μ·v + g; θ ← θ − lr·v`
pub fn sgd_step(params: &mut ModelParams, g: &GradientSet, state: &mut SgdState, lr: f64, momentum: f64) {
    state.velocity.zip_apply(g.params(), |v, gi| *v = momentum * *v + gi);
    params.zip_apply(&state.velocity, |p, v| *p -= lr * v);
    params.pin_pad();
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), step: 0, beta1, beta2, eps }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(params: &mut ModelParams, g: &GradientSet, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    state.m.zip_apply(g.params(), |m, gi| *m = b1 * *m + (1.0 - b1) * gi);
    state.v.zip_apply(g.params(), |v, gi| *v = b2 * *v + (1.0 - b2) * gi * gi);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    // Two passes since zip_apply pairs with one other set at a time.
    let mut update = state.m.clone();
    update.zip_apply(&state.v, |m, v| *m = (*m / c1) / ((v / c2).sqrt() + eps));
    params.zip_apply(&update, |p, u| *p -= lr * u);
    params.pin_pad();
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Optimizer with its state.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { state: SgdState, lr: f64, momentum: f64 },
    Adam { state: AdamState, lr: f64 },
}

impl Optimizer {
    pub fn step(&mut self, params: &mut ModelParams, g: &GradientSet) {
        match self {
            Optimizer::Sgd { state, lr, momentum } => sgd_step(params, g, state, *lr, *momentum),
            Optimizer::Adam { state, lr } => adam_step(params, g, state, *lr),
        }
    }
}
