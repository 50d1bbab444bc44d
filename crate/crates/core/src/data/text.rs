use log::warn;

use super::dataset::{Dataset, FeatureMode, Features, Sample, TextDataset};
use super::vocab::{build_vocab, Vocab, PAD};
use crate::error::{Error, Result};

/// One token per Unicode scalar value, whitespace included.
pub fn tokenize_chars(text: &str) -> Vec<String> {
    text.chars().map(String::from).collect()
}

/// Splits on runs of Unicode whitespace; no other normalization.
pub fn tokenize_words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

pub fn tokenize(text: &str, mode: FeatureMode) -> Result<Vec<String>> {
    match mode {
        FeatureMode::Char => Ok(tokenize_chars(text)),
        FeatureMode::Word => Ok(tokenize_words(text)),
        FeatureMode::Dense => Err(Error::Config("dense mode has no tokenizer".into())),
    }
}

/// Maps tokens to ids (UNK fallback) and keeps the first `max_seq_len`.
/// Never emits PAD. An empty result is reported as degenerate.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocab, max_seq_len: usize) -> Result<Vec<usize>> {
    if max_seq_len == 0 {
        return Err(Error::Config("max_seq_len must be >= 1".into()));
    }
    if tokens.is_empty() {
        return Err(Error::Degenerate("empty token sequence".into()));
    }
    let ids: Vec<usize> = tokens.iter().take(max_seq_len).map(|t| vocab.lookup(t.as_ref())).collect();
    debug_assert!(ids.iter().all(|&id| id != PAD));
    Ok(ids)
}

pub fn decode(ids: &[usize], vocab: &Vocab) -> Vec<String> {
    ids.iter().map(|&id| vocab.token(id).unwrap_or("<unk>").to_owned()).collect()
}

/// Vocabulary over the tokenized records of `text`.
pub fn vocab_for(text: &TextDataset, mode: FeatureMode, min_freq: usize) -> Result<Vocab> {
    let seqs = text.records.iter().map(|r| tokenize(&r.text, mode)).collect::<Result<Vec<_>>>()?;
    build_vocab(&seqs, min_freq)
}

/// Tokenizes and encodes every record. Records that come out empty are
/// dropped with a warning.
pub fn encode_dataset(
    text: &TextDataset,
    vocab: &Vocab,
    mode: FeatureMode,
    max_seq_len: usize,
) -> Result<Dataset> {
    let mut samples = Vec::with_capacity(text.records.len());
    for rec in &text.records {
        let toks = tokenize(&rec.text, mode)?;
        match encode(&toks, vocab, max_seq_len) {
            Ok(ids) => samples.push(Sample { features: Features::Tokens(ids), label: rec.label }),
            Err(Error::Degenerate(_)) => {
                warn!("dropping empty sample at line {}", rec.line);
            }
            Err(e) => return Err(e),
        }
    }
    Dataset::new(samples, text.labels.clone(), mode)
}
