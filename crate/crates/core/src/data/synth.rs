use rand_distr::{Distribution, Gamma};

use super::dataset::{TextDataset, TextRecord};
use super::vocab::LabelSet;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Prng, Stream};

const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

/// Parameters of the synthetic dialect task: each class is a first-order
/// Markov chain over a small alphabet, with its own Dirichlet-drawn
/// transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub alphabet: usize,
    /// Symmetric Dirichlet concentration; small values give sharply peaked rows.
    pub concentration: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 3,
            alphabet: 8,
            concentration: 0.1,
            min_len: 20,
            max_len: 40,
            samples_per_class: 100,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("synthetic task needs at least 2 classes".into()));
        }
        if self.alphabet == 0 || self.alphabet > ALPHABET.len() {
            return Err(Error::Config(format!("alphabet size must be in 1..={}", ALPHABET.len())));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::Config("concentration must be positive".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config("need 1 <= min_len <= max_len".into()));
        }
        Ok(())
    }

    pub fn symbols(&self) -> Vec<char> {
        ALPHABET.chars().take(self.alphabet).collect()
    }

    pub fn label_names(&self) -> Vec<String> {
        let width = (self.classes - 1).to_string().len();
        (0..self.classes).map(|k| format!("c{k:0width$}")).collect()
    }

    fn draw_transitions(&self, rng: &mut Prng) -> Result<Vec<Matrix>> {
        let gamma = Gamma::new(self.concentration, 1.0)
            .map_err(|e| Error::Config(format!("bad concentration: {e}")))?;
        let a = self.alphabet;
        let mut out = Vec::with_capacity(self.classes);
        for _ in 0..self.classes {
            let mut m = Matrix::zeros(a, a);
            for r in 0..a {
                let row = m.row_mut(r);
                for v in row.iter_mut() {
                    *v = gamma.sample(rng.rng_mut());
                }
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.iter_mut().for_each(|v| *v /= total);
                } else {
                    row.fill(1.0 / a as f64);
                }
            }
            out.push(m);
        }
        Ok(out)
    }

    /// Per-class transition matrices (row = current symbol).
    pub fn transitions(&self) -> Result<Vec<Matrix>> {
        self.validate()?;
        self.draw_transitions(&mut Prng::new(self.seed, Stream::Synth))
    }
}

fn sample_index(rng: &mut Prng, probs: &[f64]) -> usize {
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave acc a hair below 1.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Generates `samples_per_class` strings per class, interleaved by class
/// (c0, c1, …, c0, c1, …). Deterministic in `spec.seed`.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<TextDataset> {
    spec.validate()?;
    let mut rng = Prng::new(spec.seed, Stream::Synth);
    let transitions = spec.draw_transitions(&mut rng)?;
    let symbols = spec.symbols();
    let labels = LabelSet::new(spec.label_names())?;

    let mut records = Vec::with_capacity(spec.classes * spec.samples_per_class);
    for _ in 0..spec.samples_per_class {
        for (k, trans) in transitions.iter().enumerate() {
            let len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
            let mut state = rng.below(spec.alphabet);
            let mut text = String::with_capacity(len);
            text.push(symbols[state]);
            for _ in 1..len {
                state = sample_index(&mut rng, trans.row(state));
                text.push(symbols[state]);
            }
            let line = records.len() + 1;
            records.push(TextRecord { text, label: k, line });
        }
    }
    Ok(TextDataset { records, labels })
}

/// Splits records class by class: the first `counts[0]` of each class go to
/// the first part, the next `counts[1]` to the second, and so on. Records
/// are renumbered per part.
pub fn split_by_class(ds: &TextDataset, counts: &[usize]) -> Result<Vec<TextDataset>> {
    let mut parts: Vec<Vec<TextRecord>> = vec![Vec::new(); counts.len()];
    let mut seen = vec![0usize; ds.labels.len()];
    for rec in &ds.records {
        let n = seen[rec.label];
        seen[rec.label] += 1;
        let mut bound = 0;
        for (p, &c) in counts.iter().enumerate() {
            bound += c;
            if n < bound {
                parts[p].push(rec.clone());
                break;
            }
        }
    }
    if let Some(k) = seen.iter().position(|&n| n < counts.iter().sum::<usize>()) {
        return Err(Error::Config(format!("class {} has only {} records", ds.labels.name(k), seen[k])));
    }
    Ok(parts
        .into_iter()
        .map(|mut records| {
            for (i, r) in records.iter_mut().enumerate() {
                r.line = i + 1;
            }
            TextDataset { records, labels: ds.labels.clone() }
        })
        .collect())
}
