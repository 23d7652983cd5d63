//! Mini-batch Adam training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::WindowDataset;
use super::model::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 32,
            clip_norm: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.clip_norm > 0.0 && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("learning_rate, clip_norm and epsilon out of range".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::InvalidConfig("Adam betas must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
}

/// Scales `grad` so its L2 norm is at most `max_norm`; returns the norm before.
pub fn clip_gradient(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    /// Accuracy on the training set after the last epoch (inference mode).
    pub train_accuracy: f64,
}

/// Fraction of windows whose arg-max prediction matches the label.
pub fn accuracy(params: &ModelParams, ds: &WindowDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("no windows to score".into()));
    }
    let pred = super::metrics::predict(params, &ds.windows)?;
    Ok(pred.iter().zip(&ds.labels).filter(|(p, y)| p == y).count() as f64 / ds.len() as f64)
}

/// Trains a fresh model. Deterministic for a given seed.
pub fn train(ds: &WindowDataset, model: &ModelConfig, cfg: &TrainConfig, seed: u64) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset(format!("no training windows on track '{}'", ds.track)));
    }
    if ds.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::SingleClass);
    }
    let mut params = ModelParams::init(model, ds.steps(), ds.channels(), ds.vocab.len(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut adam = Adam::new(params.len());
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x: Vec<_> = chunk.iter().map(|&i| ds.windows[i].clone()).collect();
            let y: Vec<usize> = chunk.iter().map(|&i| ds.labels[i]).collect();
            let (loss, mut grad) = params.loss_and_grad(&x, &y, Some(&mut rng))?;
            total += loss * chunk.len() as f64;
            clip_gradient(&mut grad, cfg.clip_norm);
            adam.update(&mut params.values, &grad, cfg);
        }
        let mean = total / ds.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.5}");
        curve.push(mean);
        if !params.is_finite() {
            return Err(Error::InvalidConfig(format!("training diverged at epoch {epoch}")));
        }
    }
    let train_accuracy = accuracy(&params, ds)?;
    Ok((
        params,
        TrainReport {
            loss_curve: curve,
            train_accuracy,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::har::dataset::Standardizer;
    use ndarray::Array2;
    use rand::Rng;

    /// 64 windows of noisy sinusoids at three distinct frequencies.
    pub(crate) fn synthetic(seed: u64) -> WindowDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t, c) = (20, 3);
        let mut windows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..64 {
            let y = i % 3;
            let f = [0.05, 0.15, 0.3][y];
            let ph: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            windows.push(Array2::from_shape_fn((t, c), |(k, j)| {
                (std::f64::consts::TAU * f * k as f64 + ph + j as f64).sin() + rng.random_range(-0.3..0.3)
            }));
            labels.push(y);
        }
        WindowDataset {
            track: "synthetic".into(),
            vocab: vec!["a".into(), "b".into(), "c".into()],
            stats: Standardizer {
                channels: vec!["x".into(), "y".into(), "z".into()],
                mean: vec![0.0; 3],
                std: vec![1.0; 3],
                dropped: Vec::new(),
            },
            windows,
            labels,
            starts_s: vec![0.0; 64],
        }
    }

    fn small() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            heads: 2,
            layers: 1,
            ffn_dim: 32,
            downsample: 1,
            dropout: 0.1,
        }
    }

    #[test]
    fn overfits_small_set() {
        let ds = synthetic(1);
        let cfg = TrainConfig {
            epochs: 300,
            ..TrainConfig::default()
        };
        let (_, rep) = train(&ds, &small(), &cfg, 42).unwrap();
        assert_eq!(rep.train_accuracy, 1.0);
        let blocks: Vec<f64> = rep.loss_curve.chunks(10).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        for w in blocks.windows(2) {
            assert!(w[1] < w[0], "{blocks:?}");
        }
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let ds = synthetic(2);
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let (a, ra) = train(&ds, &small(), &cfg, 7).unwrap();
        let (b, rb) = train(&ds, &small(), &cfg, 7).unwrap();
        assert_eq!(ra.loss_curve.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), rb.loss_curve.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.values, b.values);
        let (c, _) = train(&ds, &small(), &cfg, 8).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let ds = synthetic(3);
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let (p, _) = train(&ds, &small(), &cfg, 5).unwrap();
        let init = ModelParams::init(&small(), 20, 3, 3, 5).unwrap();
        assert_eq!(p.values, init.values);
    }

    #[test]
    fn single_class_is_rejected() {
        let mut ds = synthetic(4);
        ds.labels.iter_mut().for_each(|y| *y = 1);
        assert!(matches!(train(&ds, &small(), &TrainConfig::default(), 1), Err(Error::SingleClass)));
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_gradient(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut h = vec![0.3, 0.4];
        clip_gradient(&mut h, 1.0);
        assert_eq!(h, vec![0.3, 0.4]);
    }
}
