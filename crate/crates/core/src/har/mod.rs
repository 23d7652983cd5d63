//! Windowed Transformer activity classifiers (one model per annotation track).

pub mod checkpoint;
pub mod dataset;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod train;

use serde::{Deserialize, Serialize};

pub use dataset::{session_windows, RawWindows, Standardizer, WindowConfig, WindowDataset};
pub use metrics::{predict, ClassMetrics, EvalReport};
pub use model::{ModelConfig, ModelParams};
pub use train::{train, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::wire::session::Session;

/// Everything needed to build windows and train a model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarConfig {
    pub windows: WindowConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl HarConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: HarConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        c.windows.validate()?;
        c.model.validate()?;
        c.train.validate()?;
        Ok(c)
    }
}

/// A trained model with the preprocessing it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub track: String,
    pub vocab: Vec<String>,
    pub stats: Standardizer,
    pub windows: WindowConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub params: ModelParams,
}

impl Classifier {
    /// Windows for this model from a set of sessions.
    pub fn session_windows(&self, sessions: &[Session]) -> Result<RawWindows> {
        collect_windows(sessions, &self.track, &self.windows, self.params.config.downsample)
    }

    pub fn evaluate(&self, raw: &RawWindows) -> Result<EvalReport> {
        if raw.track != self.track {
            return Err(Error::VocabularyMismatch(format!(
                "model was trained on track '{}', data is '{}'",
                self.track, raw.track
            )));
        }
        let ds = WindowDataset::with_stats(raw, self.vocab.clone(), self.stats.clone())?;
        if ds.is_empty() {
            return Err(Error::EmptyDataset(format!("no usable windows on track '{}'", self.track)));
        }
        let pred = predict(&self.params, &ds.windows)?;
        EvalReport::from_predictions(&self.track, &self.vocab, &ds.labels, &pred)
    }
}

/// Concatenated windows from several sessions.
pub fn collect_windows(sessions: &[Session], track: &str, cfg: &WindowConfig, downsample: usize) -> Result<RawWindows> {
    let mut out: Option<RawWindows> = None;
    for s in sessions {
        let w = session_windows(s, track, cfg, downsample)?;
        match out.as_mut() {
            Some(o) => o.extend(w)?,
            None => out = Some(w),
        }
    }
    out.ok_or_else(|| Error::EmptyDataset("no sessions given".into()))
}

/// Fits channel statistics and trains a model on `raw`.
pub fn fit(raw: &RawWindows, cfg: &HarConfig, seed: u64) -> Result<(Classifier, TrainReport)> {
    let ds = WindowDataset::fit(raw)?;
    if !ds.stats.dropped.is_empty() {
        log::info!("dropped constant channels: {}", ds.stats.dropped.join(", "));
    }
    let (params, report) = train(&ds, &cfg.model, &cfg.train, seed)?;
    Ok((
        Classifier {
            track: ds.track.clone(),
            vocab: ds.vocab,
            stats: ds.stats,
            windows: cfg.windows.clone(),
            train: cfg.train.clone(),
            seed,
            params,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let params = ModelParams::init(&ModelConfig::default(), 13, 5, 3, 9).unwrap();
        let c = Classifier {
            track: "gait".into(),
            vocab: vec!["a".into(), "b".into(), "c".into()],
            stats: Standardizer {
                channels: (0..5).map(|i| format!("ch{i}")).collect(),
                mean: vec![0.5; 5],
                std: vec![2.0; 5],
                dropped: vec!["z".into()],
            },
            windows: WindowConfig::default(),
            train: TrainConfig::default(),
            seed: 9,
            params,
        };
        let bytes = checkpoint::encode(&c);
        assert_eq!(&bytes[..4], b"EQMC");
        assert_eq!(checkpoint::decode(&bytes).unwrap(), c);
        assert!(matches!(checkpoint::decode(&bytes[..bytes.len() - 1]), Err(Error::BadCheckpoint(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(checkpoint::decode(&bad), Err(Error::BadCheckpoint(_))));
    }

    #[test]
    fn config_rejects_unknown_fields() {
        assert!(HarConfig::from_json(r#"{"model": {"d_model": 32}}"#).is_ok());
        assert!(HarConfig::from_json(r#"{"modle": {}}"#).is_err());
        assert!(HarConfig::from_json(r#"{"model": {"d_model": 30}}"#).is_err());
    }
}
