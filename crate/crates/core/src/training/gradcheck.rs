//! Central finite-difference verification of analytic gradients.

use super::backprop::loss_and_gradients_with;
use std::fmt;

use crate::data::{Batch, FeatureMode, Features, Sample, DENSE_DIM};
use crate::error::{Error, Result};
use crate::model::{CellKind, Model, ModelConfig, ModelParams, ReadoutMode};
use crate::numerics::{Prng, Stream};
use crate::parallel::Executor;

/// Models with at most this many parameters are checked on every
/// coordinate; larger ones on a deterministic subsample.
pub const MAX_FULL_CHECK: usize = 6000;
const SUBSAMPLE: usize = 1000;

/// `|a − n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_coordinate: usize,
    pub coordinates_checked: usize,
}

/// Compares `analytic` with `(L(θ+ε) − L(θ−ε)) / 2ε` on each of `coords`.
/// `theta` is restored before returning.
pub fn check_gradient<F>(
    theta: &mut [f64],
    analytic: &[f64],
    coords: &[usize],
    epsilon: f64,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if theta.len() != analytic.len() {
        return Err(Error::shape("gradient and parameter vectors differ in length"));
    }
    let mut report = GradCheckReport { max_relative_error: 0.0, worst_coordinate: 0, coordinates_checked: 0 };
    for &i in coords {
        let orig = theta[i];
        theta[i] = orig + epsilon;
        let plus = loss(theta);
        theta[i] = orig - epsilon;
        let minus = loss(theta);
        theta[i] = orig;
        let numeric = (plus? - minus?) / (2.0 * epsilon);
        if !numeric.is_finite() {
            return Err(Error::Numeric(format!("non-finite numeric gradient at coordinate {i}")));
        }
        let err = relative_error(analytic[i], numeric);
        if err > report.max_relative_error || report.coordinates_checked == 0 {
            report.max_relative_error = err;
            report.worst_coordinate = i;
        }
        report.coordinates_checked += 1;
    }
    Ok(report)
}

fn coordinates(n: usize) -> Vec<usize> {
    if n <= MAX_FULL_CHECK {
        return (0..n).collect();
    }
    let mut all: Vec<usize> = (0..n).collect();
    Prng::new(0, Stream::GradCheck).shuffle(&mut all);
    all.truncate(SUBSAMPLE);
    all.sort_unstable();
    all
}

/// Largest relative error between backprop and finite differences of the
/// batch loss, over every coordinate (or a fixed subsample of large models).
pub fn grad_check(model: &Model, batch: &Batch, epsilon: f64) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let exec = Executor::serial();
    let analytic = loss_and_gradients_with(model, batch, &exec)?.gradients.to_flat();
    let mut theta = model.params.to_flat();
    let coords = coordinates(theta.len());
    let mut probe = model.clone();
    check_gradient(&mut theta, &analytic, &coords, epsilon, |t| {
        probe.params.copy_from_flat(t)?;
        Ok(loss_and_gradients_with(&probe, batch, &exec)?.loss)
    })
}

/// Architecture of a generated gradient-check problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TinySpec {
    pub mode: FeatureMode,
    pub cell: CellKind,
    pub bidirectional: bool,
    pub readout: ReadoutMode,
}

impl TinySpec {
    /// Every mode × cell × direction × readout combination.
    pub fn all() -> Vec<TinySpec> {
        let mut out = Vec::new();
        for cell in [CellKind::Lstm, CellKind::Rnn] {
            for bidirectional in [false, true] {
                for mode in [FeatureMode::Char, FeatureMode::Word, FeatureMode::Dense] {
                    for readout in [ReadoutMode::Last, ReadoutMode::Mean] {
                        out.push(TinySpec { mode, cell, bidirectional, readout });
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for TinySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dir = if self.bidirectional { "bi" } else { "uni" };
        write!(f, "{}/{dir}/{}/{}", self.cell, self.mode, self.readout)
    }
}

/// Default finite-difference step. Smaller steps let cancellation noise
/// (about 1e-15 / ε in the numeric estimate) swamp coordinates whose true
/// gradient is near zero.
pub const DEFAULT_EPSILON: f64 = 1e-4;
const TINY_SCALE: f64 = 0.5;
const TINY_HIDDEN: usize = 4;
const TINY_CLASSES: usize = 3;
const TINY_FRAME: usize = 80;
const TINY_LENGTHS: [usize; 3] = [6, 4, 5];

/// A small model (H = 4, C = 3) with every parameter drawn from
/// U(−0.5, 0.5) and a padded batch for it: three token rows of lengths
/// 6, 4, 5, or two dense rows framed into 5 steps.
pub fn tiny_problem(spec: TinySpec, seed: u64) -> Result<(Model, Batch)> {
    let vocab_size = match spec.mode {
        FeatureMode::Char => 7,
        FeatureMode::Word => 9,
        FeatureMode::Dense => 0,
    };
    let config = ModelConfig {
        mode: spec.mode,
        cell: spec.cell,
        bidirectional: spec.bidirectional,
        embed_dim: 3,
        hidden_dim: TINY_HIDDEN,
        readout: spec.readout,
        frame_size: TINY_FRAME,
        class_count: TINY_CLASSES,
        vocab_size,
    };
    let mut rng = Prng::new(seed, Stream::GradCheck);
    let mut params = ModelParams::zeros(&config);
    params.randomize(&mut rng, TINY_SCALE);
    let model = Model::new(config, params)?;

    let samples: Vec<Sample> = match spec.mode {
        FeatureMode::Dense => (0..2)
            .map(|r| Sample {
                features: Features::Dense((0..DENSE_DIM).map(|_| rng.symmetric(1.0)).collect()),
                label: 2 * r,
            })
            .collect(),
        _ => TINY_LENGTHS
            .iter()
            .enumerate()
            .map(|(r, &len)| Sample {
                features: Features::Tokens((0..len).map(|_| 1 + rng.below(vocab_size - 1)).collect()),
                label: r % TINY_CLASSES,
            })
            .collect(),
    };
    let refs: Vec<&Sample> = samples.iter().collect();
    Ok((model, Batch::from_samples(&refs)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    // L(θ) = ½‖Aθ + b − y‖², ∇L = Aᵀ(Aθ + b − y)
    fn quadratic(theta: &[f64]) -> (f64, Vec<f64>) {
        let a = [[1.0, 2.0, -0.5], [0.3, -1.0, 2.0]];
        let b = [0.1, -0.2];
        let y = [1.0, 0.5];
        let r: Vec<f64> = (0..2)
            .map(|i| (0..3).map(|j| a[i][j] * theta[j]).sum::<f64>() + b[i] - y[i])
            .collect();
        let loss = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        let grad = (0..3).map(|j| (0..2).map(|i| a[i][j] * r[i]).sum()).collect();
        (loss, grad)
    }

    #[test]
    fn quadratic_toy_is_exact() {
        let mut theta = vec![0.4, -0.7, 1.3];
        let (_, g) = quadratic(&theta);
        let rep = check_gradient(&mut theta, &g, &[0, 1, 2], 1e-5, |t| Ok(quadratic(t).0)).unwrap();
        assert!(rep.max_relative_error < 1e-8, "{rep:?}");
        assert_eq!(theta, vec![0.4, -0.7, 1.3]);
    }

    #[test]
    fn detects_injected_fault() {
        let mut theta = vec![0.4, -0.7, 1.3];
        let (_, mut g) = quadratic(&theta);
        g[0] += 0.1;
        let rep = check_gradient(&mut theta, &g, &[0, 1, 2], 1e-5, |t| Ok(quadratic(t).0)).unwrap();
        assert!(rep.max_relative_error > 1e-2, "{rep:?}");
        assert_eq!(rep.worst_coordinate, 0);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn subsample_is_deterministic() {
        assert_eq!(coordinates(10).len(), 10);
        let a = coordinates(50_000);
        assert_eq!(a.len(), SUBSAMPLE);
        assert_eq!(a, coordinates(50_000));
    }
}
