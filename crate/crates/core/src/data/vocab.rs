use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ id mapping. Ids are dense from 0; 0 is PAD and 1 is UNK.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Rebuilds a vocabulary from its ordered token list (as stored in checkpoints).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::format(0, "vocab must start with the reserved <pad>, <unk> tokens"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate().skip(2) {
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::format(0, format!("duplicate vocab token {tok:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id for `token`, UNK when absent.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Keeps tokens with frequency ≥ `min_freq`, ordered by descending frequency
/// then lexicographically, after PAD and UNK.
pub fn build_vocab<S: AsRef<str>>(sequences: &[Vec<S>], min_freq: usize) -> Result<Vocab> {
    if min_freq == 0 {
        return Err(Error::Config("min_freq must be >= 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for seq in sequences {
        for tok in seq {
            *counts.entry(tok.as_ref()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_freq).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens = [PAD_TOKEN, UNK_TOKEN]
        .into_iter()
        .chain(kept.into_iter().map(|(t, _)| t))
        .map(str::to_owned)
        .collect();
    Vocab::from_tokens(tokens)
}

/// Ordered label names. The order is the canonical report order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid label name {n:?}")));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate label {n:?}")));
            }
        }
        Ok(LabelSet { names, index })
    }

    /// Reads a labels-order file: one label per line, blank lines ignored.
    pub fn from_order_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LabelSet::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `perm[i]` = id in `other` of this set's label `i`, when `other` holds
    /// exactly the same names.
    pub fn permutation_to(&self, other: &LabelSet) -> Option<Vec<usize>> {
        if self.len() != other.len() {
            return None;
        }
        self.names.iter().map(|n| other.id(n)).collect()
    }
}
