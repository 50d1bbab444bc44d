use super::dataset::{Dataset, Features, Sample};
use super::vocab::PAD;
use crate::error::{Error, Result};
use crate::numerics::{Prng, Stream, Vec64};

#[derive(Debug, Clone, PartialEq)]
pub enum BatchInputs {
    /// Token rows padded with PAD to the batch maximum length.
    Tokens(Vec<Vec<usize>>),
    Dense(Vec<Vec64>),
}

/// A padded mini-batch. For token inputs `mask[r][t]` is true exactly at the
/// pre-padding positions; dense rows have no padding and an empty mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: BatchInputs,
    pub mask: Vec<Vec<bool>>,
    pub labels: Vec<usize>,
}

/// Borrowed view of one batch row.
#[derive(Debug, Clone, Copy)]
pub enum RowView<'a> {
    Tokens { ids: &'a [usize], mask: Option<&'a [bool]> },
    Dense(&'a [f64]),
}

impl Batch {
    pub fn from_samples(samples: &[&Sample]) -> Result<Batch> {
        let Some(first) = samples.first() else {
            return Err(Error::shape("empty batch"));
        };
        let labels = samples.iter().map(|s| s.label).collect();
        match first.features {
            Features::Tokens(_) => {
                let max_len = samples
                    .iter()
                    .map(|s| match &s.features {
                        Features::Tokens(t) => Ok(t.len()),
                        Features::Dense(_) => Err(Error::shape("mixed feature kinds in batch")),
                    })
                    .try_fold(0, |m, l| l.map(|l| m.max(l)))?;
                let mut rows = Vec::with_capacity(samples.len());
                let mut mask = Vec::with_capacity(samples.len());
                for s in samples {
                    if let Features::Tokens(t) = &s.features {
                        let mut row = t.clone();
                        row.resize(max_len, PAD);
                        let mut m = vec![true; t.len()];
                        m.resize(max_len, false);
                        rows.push(row);
                        mask.push(m);
                    }
                }
                Ok(Batch { inputs: BatchInputs::Tokens(rows), mask, labels })
            }
            Features::Dense(_) => {
                let rows = samples
                    .iter()
                    .map(|s| match &s.features {
                        Features::Dense(v) => Ok(v.clone()),
                        Features::Tokens(_) => Err(Error::shape("mixed feature kinds in batch")),
                    })
                    .collect::<Result<_>>()?;
                Ok(Batch { inputs: BatchInputs::Dense(rows), mask: Vec::new(), labels })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, r: usize) -> RowView<'_> {
        match &self.inputs {
            BatchInputs::Tokens(rows) => RowView::Tokens { ids: &rows[r], mask: Some(&self.mask[r]) },
            BatchInputs::Dense(rows) => RowView::Dense(&rows[r]),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = (RowView<'_>, usize)> + '_ {
        (0..self.len()).map(move |r| (self.row(r), self.labels[r]))
    }
}

/// Splits a dataset into batches of `batch_size` (the last may be short),
/// optionally after a seeded shuffle.
pub fn make_batches(dataset: &Dataset, batch_size: usize, seed: u64, shuffle: bool) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    if shuffle {
        Prng::new(seed, Stream::Shuffle).shuffle(&mut order);
    }
    order
        .chunks(batch_size)
        .map(|idx| {
            let refs: Vec<&Sample> = idx.iter().map(|&i| &dataset.samples[i]).collect();
            Batch::from_samples(&refs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureMode, LabelSet};

    fn toy(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| Sample { features: Features::Tokens(vec![2; 1 + i % 4]), label: i % 2 })
            .collect();
        Dataset::new(samples, LabelSet::new(["a", "b"]).unwrap(), FeatureMode::Char).unwrap()
    }

    #[test]
    fn sizes_and_order() {
        let ds = toy(10);
        let batches = make_batches(&ds, 4, 0, false).unwrap();
        let sizes: Vec<usize> = batches.iter().map(Batch::len).collect();
        assert_eq!(sizes, [4, 4, 2]);
        let labels: Vec<usize> = batches.iter().flat_map(|b| b.labels.clone()).collect();
        assert_eq!(labels, (0..10).map(|i| i % 2).collect::<Vec<_>>());
    }

    #[test]
    fn seeded_shuffle_is_reproducible() {
        let ds = toy(37);
        let a = make_batches(&ds, 5, 99, true).unwrap();
        let b = make_batches(&ds, 5, 99, true).unwrap();
        let c = make_batches(&ds, 5, 100, true).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn padding_and_mask() {
        let ds = toy(4);
        let b = &make_batches(&ds, 4, 0, false).unwrap()[0];
        let BatchInputs::Tokens(rows) = &b.inputs else { panic!() };
        assert_eq!(rows[0], vec![2, 0, 0, 0]);
        assert_eq!(b.mask[0], vec![true, false, false, false]);
        assert_eq!(b.mask[3], vec![true; 4]);
    }

    #[test]
    fn zero_batch_size_rejected() {
        assert!(make_batches(&toy(3), 0, 0, false).is_err());
    }
}
