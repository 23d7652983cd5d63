//! Classification metrics.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use crate::error::{Error, Result};

/// Windows scored per forward call during inference.
const PREDICT_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub track: String,
    pub averaging: String,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Rows are truth, columns prediction.
    pub confusion: Vec<Vec<usize>>,
}

/// Arg-max class per window.
pub fn predict(params: &ModelParams, windows: &[Array2<f64>]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(PREDICT_CHUNK) {
        let logits = params.logits(chunk)?;
        for row in logits.rows() {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            out.push(best);
        }
    }
    Ok(out)
}

impl EvalReport {
    pub fn from_predictions(track: &str, vocab: &[String], truth: &[usize], pred: &[usize]) -> Result<Self> {
        let k = vocab.len();
        if truth.len() != pred.len() {
            return Err(Error::ShapeMismatch(format!("{} labels vs {} predictions", truth.len(), pred.len())));
        }
        if truth.is_empty() {
            return Err(Error::EmptyDataset("nothing to evaluate".into()));
        }
        let mut confusion = vec![vec![0usize; k]; k];
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= k || p >= k {
                return Err(Error::ShapeMismatch(format!("class index outside vocabulary of {k}")));
            }
            confusion[t][p] += 1;
        }
        let mut per_class = Vec::with_capacity(k);
        for (c, label) in vocab.iter().enumerate() {
            let tp = confusion[c][c] as f64;
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|r| r[c]).sum();
            let ratio = |a: f64, b: usize| if b == 0 { 0.0 } else { a / b as f64 };
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            per_class.push(ClassMetrics {
                label: label.clone(),
                precision,
                recall,
                f1,
                support,
            });
        }
        let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / k as f64;
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        Ok(EvalReport {
            track: track.to_string(),
            averaging: "macro".into(),
            macro_f1,
            accuracy: correct as f64 / truth.len() as f64,
            per_class,
            confusion,
        })
    }

    /// Class with the lowest F1 (first on ties).
    pub fn worst_class(&self) -> Option<&ClassMetrics> {
        self.per_class
            .iter()
            .fold(None, |w: Option<&ClassMetrics>, c| match w {
                Some(b) if b.f1 <= c.f1 => Some(b),
                _ => Some(c),
            })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "track: {}", self.track);
        let _ = writeln!(s, "averaging: {} (unweighted mean of per-class F1)", self.averaging);
        let _ = writeln!(s, "macro_f1: {:.4}", self.macro_f1);
        let _ = writeln!(s, "accuracy: {:.4}", self.accuracy);
        let _ = writeln!(s, "{:<16} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
        for c in &self.per_class {
            let _ = writeln!(s, "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>8}", c.label, c.precision, c.recall, c.f1, c.support);
        }
        s
    }

    pub fn write_confusion_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidConfig(format!("{other:?}")),
        })?;
        let mut header = vec!["truth".to_string()];
        header.extend(self.per_class.iter().map(|c| c.label.clone()));
        w.write_record(&header)?;
        for (c, row) in self.per_class.iter().zip(&self.confusion) {
            let mut rec = vec![c.label.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1];
        let r = EvalReport::from_predictions("gait", &vocab(3), &y, &y).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.confusion, vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]);
    }

    #[test]
    fn all_one_class_on_balanced_pair() {
        let r = EvalReport::from_predictions("gait", &vocab(2), &[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap();
        assert!((r.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class[1].f1, 0.0);
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.worst_class().unwrap().label, "c1");
    }

    #[test]
    fn absent_class_counts_as_zero() {
        let r = EvalReport::from_predictions("gait", &vocab(3), &[0, 1], &[0, 1]).unwrap();
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn confusion_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let r = EvalReport::from_predictions("gait", &vocab(2), &[0, 1, 1], &[0, 0, 1]).unwrap();
        r.write_confusion_csv(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "truth,c0,c1\nc0,1,0\nc1,1,1\n");
    }

    proptest! {
        #[test]
        fn rows_sum_to_support(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..200)) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let r = EvalReport::from_predictions("x", &vocab(4), &t, &p).unwrap();
            for (c, row) in r.confusion.iter().enumerate() {
                prop_assert_eq!(row.iter().sum::<usize>(), t.iter().filter(|&&y| y == c).count());
                prop_assert_eq!(row.iter().sum::<usize>(), r.per_class[c].support);
            }
            for c in &r.per_class {
                prop_assert!((0.0..=1.0).contains(&c.f1));
            }
            prop_assert!((0.0..=1.0).contains(&r.macro_f1));
        }
    }
}
