//! Centralized plaintext logistic regression over the joined intersection
//! rows. Shares no arithmetic with the federated path, so it can serve as
//! its oracle.

use super::metrics::auc;
use super::trace::{TraceRecord, TrainTrace};
use crate::error::{Error, Result};

/// One intersection row with both parties' features joined.
#[derive(Clone, Debug, PartialEq)]
pub struct JoinedRow {
    pub strong: Vec<f64>,
    pub weak: Vec<f64>,
    pub label: u8,
}

/// Average log-likelihood at `(w_s, w_w)`.
pub fn log_likelihood(rows: &[JoinedRow], w_s: &[f64], w_w: &[f64]) -> f64 {
    let total: f64 = rows
        .iter()
        .map(|r| {
            let l = logit(r, w_s, w_w);
            let log1p_exp = if l > 0.0 {
                l + (-l).exp().ln_1p()
            } else {
                l.exp().ln_1p()
            };
            r.label as f64 * l - log1p_exp
        })
        .sum();
    total / rows.len() as f64
}

fn logit(r: &JoinedRow, w_s: &[f64], w_w: &[f64]) -> f64 {
    let s: f64 = r.strong.iter().zip(w_s).map(|(x, w)| x * w).sum();
    let w: f64 = r.weak.iter().zip(w_w).map(|(x, w)| x * w).sum();
    s + w
}

/// Analytic gradient `(grad_s, grad_w)` of [`log_likelihood`].
pub fn gradient(rows: &[JoinedRow], w_s: &[f64], w_w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut g_s = vec![0.0; w_s.len()];
    let mut g_w = vec![0.0; w_w.len()];
    for r in rows {
        let p = 1.0 / (1.0 + (-logit(r, w_s, w_w)).exp());
        let e = r.label as f64 - p;
        for (g, x) in g_s.iter_mut().zip(&r.strong) {
            *g += e * x / n;
        }
        for (g, x) in g_w.iter_mut().zip(&r.weak) {
            *g += e * x / n;
        }
    }
    (g_s, g_w)
}

/// Full-batch gradient ascent from the given weights, recording the same
/// per-iteration quantities as the federated trainer.
pub fn train(
    rows: &[JoinedRow],
    mut w_s: Vec<f64>,
    mut w_w: Vec<f64>,
    eta: f64,
    iterations: usize,
) -> Result<TrainTrace> {
    if rows.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let mut trace = TrainTrace::default();
    for iteration in 0..iterations {
        let loss = -log_likelihood(rows, &w_s, &w_w);
        let scored: Vec<(f64, u8)> = rows
            .iter()
            .map(|r| (logit(r, &w_s, &w_w), r.label))
            .collect();
        let (g_s, g_w) = gradient(rows, &w_s, &w_w);
        trace.records.push(TraceRecord {
            iteration,
            loss,
            auc: auc(&scored).unwrap_or(f64::NAN),
            weak_weights: w_w.clone(),
            strong_weights: w_s.clone(),
            weak_gradient: g_w.clone(),
            strong_gradient: g_s.clone(),
        });
        for (w, g) in w_s.iter_mut().zip(&g_s) {
            *w += eta * g;
        }
        for (w, g) in w_w.iter_mut().zip(&g_w) {
            *w += eta * g;
        }
    }
    Ok(trace)
}
