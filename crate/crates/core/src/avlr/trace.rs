use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// State of both parties at the start of one iteration, with the gradients
/// each recovered during it. `loss` is `-L`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss: f64,
    pub auc: f64,
    pub weak_weights: Vec<f64>,
    pub strong_weights: Vec<f64>,
    pub weak_gradient: Vec<f64>,
    pub strong_gradient: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

/// Largest per-iteration gaps between two traces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceGap {
    pub loss: f64,
    pub auc: f64,
    pub weight: f64,
}

#[derive(Serialize)]
struct WeightSnapshot<'a> {
    iterations: usize,
    strong: &'a [f64],
    weak: &'a [f64],
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// Maximum absolute differences against `other`. Traces of different
    /// lengths are infinitely far apart.
    pub fn gap(&self, other: &TrainTrace) -> TraceGap {
        if self.len() != other.len() {
            return TraceGap {
                loss: f64::INFINITY,
                auc: f64::INFINITY,
                weight: f64::INFINITY,
            };
        }
        let mut gap = TraceGap {
            loss: 0.0,
            auc: 0.0,
            weight: 0.0,
        };
        for (a, b) in self.records.iter().zip(&other.records) {
            gap.loss = gap.loss.max((a.loss - b.loss).abs());
            gap.auc = gap.auc.max(abs_gap(a.auc, b.auc));
            let pairs = a
                .weak_weights
                .iter()
                .zip(&b.weak_weights)
                .chain(a.strong_weights.iter().zip(&b.strong_weights));
            for (x, y) in pairs {
                gap.weight = gap.weight.max((x - y).abs());
            }
            if a.weak_weights.len() != b.weak_weights.len()
                || a.strong_weights.len() != b.strong_weights.len()
            {
                gap.weight = f64::INFINITY;
            }
        }
        gap
    }

    /// `iteration,loss,auc` rows with shortest round-trip float formatting.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iteration", "loss", "auc"])?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                r.loss.to_string(),
                r.auc.to_string(),
            ])?;
        }
        w.into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    /// Reads back `(iteration, loss, auc)` rows.
    pub fn read_csv(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
        let mut rows = Vec::new();
        for rec in csv::Reader::from_path(path)?.deserialize() {
            rows.push(rec?);
        }
        Ok(rows)
    }
}

/// Final weights of both parties as JSON.
pub fn write_weights_json(
    path: &Path,
    iterations: usize,
    strong: &[f64],
    weak: &[f64],
) -> Result<()> {
    let snapshot = WeightSnapshot {
        iterations,
        strong,
        weak,
    };
    std::fs::write(path, serde_json::to_vec_pretty(&snapshot)?)?;
    Ok(())
}

fn abs_gap(a: f64, b: f64) -> f64 {
    if a.is_nan() && b.is_nan() {
        0.0
    } else {
        (a - b).abs()
    }
}
