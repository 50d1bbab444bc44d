use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelParams};
use crate::data::{LabelSet, Vocab};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: i64 = 1;

/// A trained classifier with everything needed to run it on raw input.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub labels: LabelSet,
    /// Absent for dense-mode models.
    pub vocab: Option<Vocab>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: i64,
    config: ModelConfig,
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocab: Option<Vec<String>>,
    params: ModelParams,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::format(e.line(), format!("checkpoint: {e}"))
}

impl Checkpoint {
    pub fn new(model: Model, labels: LabelSet, vocab: Option<Vocab>) -> Result<Self> {
        let cfg = &model.config;
        if labels.len() != cfg.class_count {
            return Err(Error::Config(format!(
                "{} labels for a {}-class model",
                labels.len(),
                cfg.class_count
            )));
        }
        match (&vocab, cfg.mode.is_text()) {
            (Some(v), true) if v.len() == cfg.vocab_size => {}
            (None, false) => {}
            _ => return Err(Error::Config("vocabulary does not match the model's feature mode".into())),
        }
        Ok(Checkpoint { model, labels, vocab })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = Document {
            format_version: FORMAT_VERSION,
            config: self.model.config.clone(),
            labels: self.labels.names().to_vec(),
            vocab: self.vocab.as_ref().map(|v| v.tokens().to_vec()),
            params: self.model.params.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).map_err(json_error)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // Version first, so a future layout reports a version error rather
        // than a confusing field error.
        let value: serde_json::Value = serde_json::from_str(text).map_err(json_error)?;
        match value.get("format_version").and_then(serde_json::Value::as_i64) {
            Some(FORMAT_VERSION) => {}
            Some(found) => return Err(Error::Version { found, expected: FORMAT_VERSION }),
            None => return Err(Error::format(1, "checkpoint: missing integer field `format_version`")),
        }
        let doc: Document = serde_json::from_str(text).map_err(json_error)?;
        let labels = LabelSet::new(doc.labels).map_err(|e| Error::format(0, format!("checkpoint labels: {e}")))?;
        let vocab = doc.vocab.map(Vocab::from_tokens).transpose()?;
        let model = Model::new(doc.config, doc.params)
            .map_err(|e| Error::format(0, format!("checkpoint params: {e}")))?;
        Checkpoint::new(model, labels, vocab).map_err(|e| Error::format(0, format!("checkpoint: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}
