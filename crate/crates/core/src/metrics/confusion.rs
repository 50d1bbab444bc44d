use std::path::Path;

use crate::data::LabelSet;
use crate::error::{Error, Result};

/// Gold × predicted counts: rows are gold labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: LabelSet,
    counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Scores {
    pub micro: f64,
    pub macro_: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn zeros(labels: LabelSet) -> Self {
        let n = labels.len();
        ConfusionMatrix { labels, counts: vec![vec![0; n]; n] }
    }

    pub fn from_counts(labels: LabelSet, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = labels.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(Error::shape(format!("confusion matrix must be {n}x{n}")));
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.len()).map(|k| self.counts[k][k]).sum()
    }

    pub fn row_sum(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        self.counts.iter().map(|r| r[k]).sum()
    }

    /// Same counts, rows and columns rearranged into `order` (which must
    /// hold exactly this matrix's labels).
    pub fn reorder(&self, order: &LabelSet) -> Result<Self> {
        let perm = order
            .permutation_to(&self.labels)
            .ok_or_else(|| Error::Config("label order does not match the matrix labels".into()))?;
        let counts = perm.iter().map(|&g| perm.iter().map(|&p| self.counts[g][p]).collect()).collect();
        Ok(ConfusionMatrix { labels: order.clone(), counts })
    }

    pub fn report(&self) -> Result<MetricReport> {
        let acc = accuracy(self)?;
        let f1 = f1_scores(self)?;
        Ok(MetricReport {
            accuracy: acc,
            per_class: per_class_prf(self),
            f1_micro: f1.micro,
            f1_macro: f1.macro_,
            f1_weighted: f1.weighted,
        })
    }

    /// Parses the TSV layout written by [`ConfusionMatrix::to_tsv`]: a header
    /// `\t<label>...`, then `<label>\t<count>...` per gold label, in header order.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or_else(|| Error::format(1, "empty confusion-matrix file"))?;
        let names: Vec<&str> = header.split('\t').skip(1).map(str::trim).collect();
        let labels = LabelSet::new(names.iter().copied()).map_err(|e| Error::format(hline + 1, e.to_string()))?;
        let n = labels.len();
        if n == 0 {
            return Err(Error::format(hline + 1, "header lists no labels"));
        }
        let mut counts = Vec::with_capacity(n);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let mut cells = line.split('\t');
            let gold = cells.next().unwrap_or_default().trim();
            if counts.len() == n {
                return Err(Error::format(lineno, format!("more than {n} rows")));
            }
            if gold != labels.name(counts.len()) {
                return Err(Error::format(
                    lineno,
                    format!("row label {gold:?}, expected {:?}", labels.name(counts.len())),
                ));
            }
            let row = cells
                .enumerate()
                .map(|(col, cell)| {
                    let cell = cell.trim();
                    match cell.parse::<i64>() {
                        Ok(v) if v < 0 => Err(Error::format(lineno, format!("column {}: negative count {v}", col + 1))),
                        Ok(v) => Ok(v as u64),
                        Err(_) => Err(Error::format(lineno, format!("column {}: not an integer: {cell:?}", col + 1))),
                    }
                })
                .collect::<Result<Vec<u64>>>()?;
            if row.len() != n {
                return Err(Error::format(lineno, format!("row has {} counts, header has {n} labels", row.len())));
            }
            counts.push(row);
        }
        if counts.len() != n {
            return Err(Error::format(0, format!("matrix has {} rows, header has {n} labels", counts.len())));
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for name in self.labels.names() {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        for (k, row) in self.counts.iter().enumerate() {
            out.push_str(self.labels.name(k));
            for c in row {
                out.push('\t');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub fn load_cm(path: impl AsRef<Path>) -> Result<ConfusionMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ConfusionMatrix::parse_tsv(&text)
}

/// Tallies `(gold, predicted)` id pairs.
pub fn confusion_from_pairs(pairs: &[(usize, usize)], labels: &LabelSet) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::zeros(labels.clone());
    let n = labels.len();
    for &(g, p) in pairs {
        if g >= n || p >= n {
            return Err(Error::Index(format!("label pair ({g}, {p}) out of range for {n} labels")));
        }
        cm.counts[g][p] += 1;
    }
    Ok(cm)
}

/// `trace / total`.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::Degenerate("accuracy of an empty confusion matrix".into())),
        total => Ok(cm.trace() as f64 / total as f64),
    }
}

/// Precision, recall, and F1 per class; each is 0 where its denominator is 0.
pub fn per_class_prf(cm: &ConfusionMatrix) -> Vec<ClassScores> {
    (0..cm.len())
        .map(|k| {
            let tp = cm.counts[k][k];
            let support = cm.row_sum(k);
            let precision = ratio(tp, cm.col_sum(k));
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassScores { precision, recall, f1, support }
        })
        .collect()
}

/// Micro (global), macro (unweighted over every label), and support-weighted F1.
pub fn f1_scores(cm: &ConfusionMatrix) -> Result<F1Scores> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Degenerate("F1 of an empty confusion matrix".into()));
    }
    let per = per_class_prf(cm);
    let macro_ = per.iter().map(|c| c.f1).sum::<f64>() / per.len() as f64;
    let weighted = per.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / total as f64;
    // Single-label multiclass: every error is one FP and one FN, so micro
    // precision = recall = F1 = accuracy.
    let micro = cm.trace() as f64 / total as f64;
    Ok(F1Scores { micro, macro_, weighted })
}
