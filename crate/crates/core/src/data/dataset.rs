use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::batch::RowView;
use super::vocab::LabelSet;
use crate::error::{Error, Result};
use crate::numerics::Vec64;

/// Width of a dense utterance vector.
pub const DENSE_DIM: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Char,
    Word,
    Dense,
}

impl FeatureMode {
    pub fn is_text(self) -> bool {
        !matches!(self, FeatureMode::Dense)
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Char => "char",
            FeatureMode::Word => "word",
            FeatureMode::Dense => "dense",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(FeatureMode::Char),
            "word" => Ok(FeatureMode::Word),
            "dense" => Ok(FeatureMode::Dense),
            other => Err(Error::Config(format!("unknown feature mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Tokens(Vec<usize>),
    Dense(Vec64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Features,
    pub label: usize,
}

impl Sample {
    /// Unmasked view for the forward pass.
    pub fn view(&self) -> RowView<'_> {
        match &self.features {
            Features::Tokens(ids) => RowView::Tokens { ids, mask: None },
            Features::Dense(v) => RowView::Dense(v),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub labels: LabelSet,
    pub mode: FeatureMode,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, labels: LabelSet, mode: FeatureMode) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.label >= labels.len() {
                return Err(Error::Index(format!("sample {i}: label id {} out of range", s.label)));
            }
            match (&s.features, mode) {
                (Features::Dense(v), FeatureMode::Dense) if v.len() == DENSE_DIM => {}
                (Features::Tokens(t), FeatureMode::Char | FeatureMode::Word) if !t.is_empty() => {}
                _ => return Err(Error::shape(format!("sample {i} does not match {mode} mode"))),
            }
        }
        Ok(Dataset { samples, labels, mode })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Re-expresses label ids in `target`, which must contain every label in use.
    pub fn relabel(&self, target: &LabelSet) -> Result<Dataset> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let name = self.labels.name(s.label);
                let label = target
                    .id(name)
                    .ok_or_else(|| Error::format(0, format!("label {name:?} not in label set")))?;
                Ok(Sample { features: s.features.clone(), label })
            })
            .collect::<Result<_>>()?;
        Dataset::new(samples, target.clone(), self.mode)
    }
}

/// One `<text>\t<label>` line. `line` is the 1-based source line.
#[derive(Debug, Clone, PartialEq)]
pub struct TextRecord {
    pub text: String,
    pub label: usize,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct TextDataset {
    pub records: Vec<TextRecord>,
    pub labels: LabelSet,
}

impl TextDataset {
    /// Parses TSV content. With `labels = None` the label set is inferred
    /// and sorted lexicographically.
    pub fn parse(bytes: &[u8], labels: Option<&LabelSet>) -> Result<Self> {
        let mut raw = Vec::new();
        for (idx, line) in bytes.split(|&b| b == b'\n').enumerate() {
            let lineno = idx + 1;
            let line = std::str::from_utf8(line)
                .map_err(|e| Error::format(lineno, format!("invalid UTF-8: {e}")))?;
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (text, label) = match (parts.next(), parts.next(), parts.next()) {
                (Some(t), Some(l), None) => (t, l),
                _ => {
                    return Err(Error::format(
                        lineno,
                        "expected exactly one tab separating text and label",
                    ))
                }
            };
            if label.is_empty() {
                return Err(Error::format(lineno, "empty label"));
            }
            raw.push((text, label, lineno));
        }

        let labels = match labels {
            Some(l) => l.clone(),
            None => {
                let names: BTreeSet<&str> = raw.iter().map(|r| r.1).collect();
                LabelSet::new(names).map_err(|e| Error::format(0, e.to_string()))?
            }
        };
        let records = raw
            .into_iter()
            .map(|(text, label, line)| {
                let id = labels
                    .id(label)
                    .ok_or_else(|| Error::format(line, format!("unknown label {label:?}")))?;
                Ok(TextRecord { text: text.to_owned(), label: id, line })
            })
            .collect::<Result<_>>()?;
        Ok(TextDataset { records, labels })
    }

    /// Serializes back to `<text>\t<label>` lines, LF terminated.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.text);
            out.push('\t');
            out.push_str(self.labels.name(r.label));
            out.push('\n');
        }
        out
    }
}

pub fn load_tsv(path: impl AsRef<Path>, labels: Option<&LabelSet>) -> Result<TextDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    TextDataset::parse(&bytes, labels)
}

fn parse_features<'a>(fields: impl Iterator<Item = &'a str>, lineno: usize) -> Result<Vec64> {
    let values = fields
        .enumerate()
        .map(|(i, f)| {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::format(lineno, format!("feature {}: cannot parse {f:?}", i + 1)))?;
            if !v.is_finite() {
                return Err(Error::format(lineno, format!("feature {}: numeric overflow in {f:?}", i + 1)));
            }
            Ok(v)
        })
        .collect::<Result<Vec64>>()?;
    if values.len() != DENSE_DIM {
        return Err(Error::format(
            lineno,
            format!("expected {DENSE_DIM} features, found {}", values.len()),
        ));
    }
    Ok(values)
}

/// Parses `<utt-id> <label> <400 decimals>`.
pub fn parse_dense_line(line: &str, lineno: usize) -> Result<(String, String, Vec64)> {
    let mut fields = line.split_whitespace();
    let id = fields.next().ok_or_else(|| Error::format(lineno, "missing utterance id"))?;
    let label = fields.next().ok_or_else(|| Error::format(lineno, "missing label"))?;
    let v = parse_features(fields, lineno)?;
    Ok((id.to_owned(), label.to_owned(), v))
}

fn read_lines(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| {
        let line = 1 + e.as_bytes()[..e.utf8_error().valid_up_to()].iter().filter(|&&b| b == b'\n').count();
        Error::format(line, "invalid UTF-8")
    })
}

/// Loads a dense feature file. Labels are validated against `labels` or
/// inferred (sorted lexicographically).
pub fn load_dense(path: impl AsRef<Path>, labels: Option<&LabelSet>) -> Result<Dataset> {
    let text = read_lines(path.as_ref())?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (_, label, v) = parse_dense_line(line, idx + 1)?;
        rows.push((label, v, idx + 1));
    }
    let labels = match labels {
        Some(l) => l.clone(),
        None => {
            let names: BTreeSet<&str> = rows.iter().map(|r| r.0.as_str()).collect();
            LabelSet::new(names).map_err(|e| Error::format(0, e.to_string()))?
        }
    };
    let samples = rows
        .into_iter()
        .map(|(label, v, line)| {
            let id = labels
                .id(&label)
                .ok_or_else(|| Error::format(line, format!("unknown label {label:?}")))?;
            Ok(Sample { features: Features::Dense(v), label: id })
        })
        .collect::<Result<_>>()?;
    Dataset::new(samples, labels, FeatureMode::Dense)
}

/// Reads `<utt-id> <400 decimals>` lines for prediction.
pub fn read_dense_unlabeled(path: impl AsRef<Path>) -> Result<Vec<(String, Vec64)>> {
    let text = read_lines(path.as_ref())?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields.next().ok_or_else(|| Error::format(idx + 1, "missing utterance id"))?;
        out.push((id.to_owned(), parse_features(fields, idx + 1)?));
    }
    Ok(out)
}

/// Splits a dense vector into contiguous frames of `frame_size`.
pub fn frame_dense(v: &[f64], frame_size: usize) -> Result<Vec<Vec64>> {
    if frame_size == 0 || !v.len().is_multiple_of(frame_size) {
        return Err(Error::Config(format!(
            "frame size {frame_size} does not divide feature width {}",
            v.len()
        )));
    }
    Ok(v.chunks_exact(frame_size).map(<[f64]>::to_vec).collect())
}
