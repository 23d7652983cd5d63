//! Sliding windows over resampled sessions, labelled from an annotation track.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{resample_uniform, UniformTrack};
use crate::types::{Annotation, Placement, SAMPLE_RATE_HZ};
use crate::wire::session::Session;

/// Channels whose spread falls below this are treated as constant.
pub const MIN_CHANNEL_STD: f64 = 1e-9;

const AXES: [&str; 6] = ["ax", "ay", "az", "gx", "gy", "gz"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub window_s: f64,
    pub stride_s: f64,
    /// Minimum fraction of a window covered by its majority label.
    pub min_coverage: f64,
    /// Subtract each window's mean from the hoof-sensor accelerometer axes,
    /// so the static gravity direction (mounting and resting pose) drops out.
    pub remove_limb_gravity: bool,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_s: 5.0,
            stride_s: 2.5,
            min_coverage: 0.8,
            remove_limb_gravity: true,
        }
    }
}

impl WindowConfig {
    pub fn window_samples(&self) -> usize {
        (self.window_s * SAMPLE_RATE_HZ).round() as usize
    }

    pub fn stride_samples(&self) -> usize {
        (self.stride_s * SAMPLE_RATE_HZ).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_samples() == 0 || self.stride_samples() == 0 {
            return Err(Error::InvalidConfig("window and stride must be at least one sample".into()));
        }
        if !(self.min_coverage > 0.5 && self.min_coverage <= 1.0) {
            return Err(Error::InvalidConfig("min_coverage must be in (0.5, 1]".into()));
        }
        Ok(())
    }
}

/// Number of window positions on a grid of `n` samples.
pub fn candidate_windows(n: usize, window: usize, stride: usize) -> usize {
    if n < window {
        0
    } else {
        (n - window) / stride + 1
    }
}

/// Unstandardized windows with string labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawWindows {
    pub track: String,
    pub channels: Vec<String>,
    /// Each `T x C`, already average-pooled.
    pub windows: Vec<Array2<f64>>,
    pub labels: Vec<String>,
    pub starts_s: Vec<f64>,
    pub candidates: usize,
}

impl RawWindows {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Appends another set; the channel layout must agree.
    pub fn extend(&mut self, other: RawWindows) -> Result<()> {
        if self.channels != other.channels {
            return Err(Error::ShapeMismatch(format!(
                "channel sets differ: {:?} vs {:?}",
                self.channels, other.channels
            )));
        }
        self.windows.extend(other.windows);
        self.labels.extend(other.labels);
        self.starts_s.extend(other.starts_s);
        self.candidates += other.candidates;
        Ok(())
    }
}

/// Label covering the largest share of `[a, b)` and that share.
fn majority_label<'a>(ann: &[&'a Annotation], a: f64, b: f64) -> Option<(&'a str, f64)> {
    let mut cover: Vec<(&str, f64)> = Vec::new();
    for x in ann {
        let o = x.end_s.min(b) - x.start_s.max(a);
        if o > 0.0 {
            match cover.iter_mut().find(|(l, _)| *l == x.label) {
                Some(e) => e.1 += o,
                None => cover.push((&x.label, o)),
            }
        }
    }
    cover
        .into_iter()
        .fold(None, |best: Option<(&str, f64)>, c| match best {
            Some(b) if b.1 >= c.1 => Some(b),
            _ => Some(c),
        })
        .map(|(l, c)| (l, c / (b - a)))
}

/// Cuts labelled windows out of resampled tracks.
pub fn windows_from_tracks(
    tracks: &[UniformTrack],
    annotations: &[Annotation],
    track: &str,
    cfg: &WindowConfig,
    downsample: usize,
) -> Result<RawWindows> {
    cfg.validate()?;
    if downsample == 0 {
        return Err(Error::InvalidConfig("downsample must be positive".into()));
    }
    let ann: Vec<&Annotation> = annotations.iter().filter(|a| a.track == track).collect();
    if ann.is_empty() {
        let mut available: Vec<String> = annotations.iter().map(|a| a.track.clone()).collect();
        available.sort();
        available.dedup();
        return Err(Error::MissingTrack {
            track: track.to_string(),
            available,
        });
    }
    let first = tracks
        .first()
        .ok_or_else(|| Error::EmptyDataset("session has no sensor tracks".into()))?;
    let n = tracks.iter().map(|t| t.len()).min().unwrap_or(0);
    let (w, stride) = (cfg.window_samples(), cfg.stride_samples());
    let steps = w / downsample;
    if steps == 0 {
        return Err(Error::InvalidConfig("downsample exceeds window length".into()));
    }
    let mut channels = Vec::with_capacity(tracks.len() * 6);
    for t in tracks {
        let name = Placement::from_device_id(t.device_id)
            .map(|p| p.name().to_string())
            .unwrap_or_else(|| format!("dev{}", t.device_id));
        channels.extend(AXES.iter().map(|a| format!("{name}.{a}")));
    }
    let candidates = candidate_windows(n, w, stride);
    let mut out = RawWindows {
        track: track.to_string(),
        channels,
        windows: Vec::new(),
        labels: Vec::new(),
        starts_s: Vec::new(),
        candidates,
    };
    for i in 0..candidates {
        let k0 = i * stride;
        if tracks.iter().any(|t| t.valid[k0..k0 + w].iter().any(|v| !v)) {
            continue;
        }
        let a = first.time(k0);
        let Some((label, cover)) = majority_label(&ann, a, a + cfg.window_s) else {
            continue;
        };
        if cover < cfg.min_coverage {
            continue;
        }
        let c = out.channels.len();
        let mut x = Array2::zeros((steps, c));
        for (ti, t) in tracks.iter().enumerate() {
            for s in 0..steps {
                let mut acc = [0.0; 6];
                for k in k0 + s * downsample..k0 + (s + 1) * downsample {
                    let (av, gv) = (t.accel[k], t.gyro[k]);
                    for (j, v) in [av.x, av.y, av.z, gv.x, gv.y, gv.z].into_iter().enumerate() {
                        acc[j] += v;
                    }
                }
                for (j, v) in acc.into_iter().enumerate() {
                    x[[s, ti * 6 + j]] = v / downsample as f64;
                }
            }
            let limb = Placement::from_device_id(t.device_id).is_some_and(|p| p.is_horse_limb());
            if cfg.remove_limb_gravity && limb {
                for j in ti * 6..ti * 6 + 3 {
                    let mut col = x.column_mut(j);
                    let m = col.mean().unwrap_or(0.0);
                    col -= m;
                }
            }
        }
        out.windows.push(x);
        out.labels.push(label.to_string());
        out.starts_s.push(a);
    }
    Ok(out)
}

/// Resamples a session and windows it.
pub fn session_windows(session: &Session, track: &str, cfg: &WindowConfig, downsample: usize) -> Result<RawWindows> {
    if !session.annotations.iter().any(|a| a.track == track) {
        return Err(Error::MissingTrack {
            track: track.to_string(),
            available: session.tracks(),
        });
    }
    let tracks = resample_uniform(&session.samples)?;
    windows_from_tracks(&tracks, &session.annotations, track, cfg, downsample)
}

/// Per-channel z-scoring fitted on training windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    /// Source channel names that are kept, in model input order.
    pub channels: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels removed because they were constant in the training data.
    pub dropped: Vec<String>,
}

impl Standardizer {
    pub fn fit(raw: &RawWindows) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyDataset("no windows to fit channel statistics".into()));
        }
        let c = raw.channels.len();
        let mut sum = vec![0.0; c];
        let mut count = 0usize;
        for w in &raw.windows {
            for row in w.rows() {
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
            }
            count += w.nrows();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut ss = vec![0.0; c];
        for w in &raw.windows {
            for row in w.rows() {
                for ((s, v), m) in ss.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let mut out = Standardizer {
            channels: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
            dropped: Vec::new(),
        };
        for j in 0..c {
            let sd = (ss[j] / count as f64).sqrt();
            if sd > MIN_CHANNEL_STD {
                out.channels.push(raw.channels[j].clone());
                out.mean.push(mean[j]);
                out.std.push(sd);
            } else {
                out.dropped.push(raw.channels[j].clone());
            }
        }
        if out.channels.is_empty() {
            return Err(Error::EmptyDataset("every channel is constant".into()));
        }
        Ok(out)
    }

    pub fn apply(&self, raw: &RawWindows) -> Result<Vec<Array2<f64>>> {
        let idx = self
            .channels
            .iter()
            .map(|name| {
                raw.channels
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::ShapeMismatch(format!("channel {name} missing from data")))
            })
            .collect::<Result<Vec<usize>>>()?;
        Ok(raw
            .windows
            .iter()
            .map(|w| {
                Array2::from_shape_fn((w.nrows(), idx.len()), |(t, j)| (w[[t, idx[j]]] - self.mean[j]) / self.std[j])
            })
            .collect())
    }
}

/// Standardized model inputs with class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    pub track: String,
    pub vocab: Vec<String>,
    pub stats: Standardizer,
    pub windows: Vec<Array2<f64>>,
    pub labels: Vec<usize>,
    pub starts_s: Vec<f64>,
}

impl WindowDataset {
    /// Builds a training set: vocabulary and statistics come from `raw`.
    pub fn fit(raw: &RawWindows) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyDataset(format!("no usable windows on track '{}'", raw.track)));
        }
        let mut vocab = raw.labels.clone();
        vocab.sort();
        vocab.dedup();
        let stats = Standardizer::fit(raw)?;
        Self::with_stats(raw, vocab, stats)
    }

    /// Builds an evaluation set with fixed vocabulary and statistics.
    pub fn with_stats(raw: &RawWindows, vocab: Vec<String>, stats: Standardizer) -> Result<Self> {
        let labels = raw
            .labels
            .iter()
            .map(|l| vocab.iter().position(|v| v == l).ok_or_else(|| Error::UnknownLabel(l.clone())))
            .collect::<Result<Vec<usize>>>()?;
        Ok(WindowDataset {
            track: raw.track.clone(),
            windows: stats.apply(raw)?,
            vocab,
            stats,
            labels,
            starts_s: raw.starts_s.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.windows.first().map_or(0, |w| w.nrows())
    }

    pub fn channels(&self) -> usize {
        self.stats.channels.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.vocab.len()];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }
}
