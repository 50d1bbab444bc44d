use std::path::Path;

use dialectid::data::FeatureMode;
use dialectid::model::{CellKind, ModelConfig, ReadoutMode};
use dialectid::training::{OptimizerKind, TrainConfig};
use dialectid::{Error, Result};
use serde::{Deserialize, Serialize};

/// Model section of a run config. Class count and vocabulary size come from
/// the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub mode: FeatureMode,
    pub cell: CellKind,
    pub bidirectional: bool,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub readout: ReadoutMode,
    pub frame_size: usize,
    /// Tokens seen fewer times in training map to UNK.
    pub min_freq: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            mode: FeatureMode::Char,
            cell: CellKind::Lstm,
            bidirectional: true,
            embed_dim: 16,
            hidden_dim: 32,
            readout: ReadoutMode::Last,
            frame_size: 20,
            min_freq: 1,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, class_count: usize, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            mode: self.mode,
            cell: self.cell,
            bidirectional: self.bidirectional,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            readout: self.readout,
            frame_size: self.frame_size,
            class_count,
            vocab_size,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_owned(), source: e })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.model.min_freq == 0 {
            return Err(Error::Config("min_freq must be >= 1".into()));
        }
        // Class count and vocabulary are placeholders here; the real values
        // are checked again once the data is loaded.
        let vocab = if self.model.mode.is_text() { 2 } else { 0 };
        self.model.model_config(2, vocab).validate()
    }
}

/// Command-line overrides for a run config. `None` keeps the file value.
#[derive(Debug, Default, clap::Args)]
pub struct Overrides {
    #[arg(long, value_parser = parse::<FeatureMode>)]
    pub mode: Option<FeatureMode>,
    #[arg(long, value_parser = parse::<CellKind>)]
    pub cell: Option<CellKind>,
    /// `uni` or `bi`.
    #[arg(long, value_parser = parse_direction)]
    pub direction: Option<bool>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long, value_parser = parse::<ReadoutMode>)]
    pub readout: Option<ReadoutMode>,
    #[arg(long)]
    pub frame_size: Option<usize>,
    #[arg(long)]
    pub min_freq: Option<usize>,
    #[arg(long, value_parser = parse::<OptimizerKind>)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub early_stop_patience: Option<usize>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
}

macro_rules! apply {
    ($src:expr, $dst:expr, $($field:ident),+) => {
        $(if let Some(v) = $src.$field { $dst.$field = v; })+
    };
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        apply!(self, cfg.model, mode, cell, embed_dim, hidden_dim, readout, frame_size, min_freq);
        if let Some(bi) = self.direction {
            cfg.model.bidirectional = bi;
        }
        apply!(self, cfg.train, optimizer, learning_rate, momentum, epochs, batch_size, clip_norm, seed,
            early_stop_patience, threads);
        if let Some(n) = self.max_seq_len {
            cfg.train.max_seq_len = Some(n);
        }
    }
}

pub fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn parse_direction(s: &str) -> std::result::Result<bool, String> {
    match s {
        "uni" => Ok(false),
        "bi" => Ok(true),
        other => Err(format!("unknown direction {other:?} (expected uni or bi)")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_gives_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"modle": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"model": {"hidden": 3}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"train": {"lr": 0.1}}"#).is_err());
    }

    #[test]
    fn logged_json_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.model.mode = FeatureMode::Word;
        cfg.train.max_seq_len = Some(9);
        cfg.train.learning_rate = 0.1 + 0.2;
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::default();
        let o = Overrides { direction: Some(false), hidden_dim: Some(5), epochs: Some(3), ..Overrides::default() };
        o.apply(&mut cfg);
        assert!(!cfg.model.bidirectional);
        assert_eq!((cfg.model.hidden_dim, cfg.train.epochs), (5, 3));
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let mut cfg = RunConfig::default();
        cfg.model.hidden_dim = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.model.mode = FeatureMode::Dense;
        cfg.model.frame_size = 7;
        assert!(cfg.validate().is_err());
    }
}
