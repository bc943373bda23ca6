//! Vertical logistic regression where the weak party pads with dummies.
//!
//! The strong party holds features for every id in the obfuscated set; the
//! weak party holds features and labels for the true intersection only. For
//! ids it does not hold, the weak party sends encrypted zeros as residuals.
//! Paillier ciphertexts of zero are indistinguishable from any others, and a
//! zero residual contributes nothing to the strong party's encrypted
//! gradient, so training proceeds exactly as if the obfuscated set were the
//! intersection.
//!
//! Sign convention: `L` is the average log-likelihood and is maximized,
//! `w <- w + eta * grad L`. Traces report `-L` as the loss.
//!
//! The strong party's mask `r` is positive, so the weak party learns the sign
//! of every strong-side gradient component when it decrypts the masked
//! gradient.

mod metrics;
mod ops;
pub mod reference;
mod trace;
mod trainer;

pub use metrics::auc;
pub use ops::{
    encrypt_residuals, mask, reveal_masked, sample_mask, sigmoid, softplus,
    strong_encrypted_gradient, strong_partial_scores, unmask, weak_loss_and_gradient,
    weak_residuals, EncodedFeatures, Residual, MASK_BITS,
};
pub use trace::{write_weights_json, TraceGap, TraceRecord, TrainTrace};
pub use trainer::{
    merge_trace, run_strong_training, run_weak_training, train, Participants, StrongOutcome,
    WeakOutcome, WeakRecord, TAG_GRADIENT, TAG_MASKED_GRADIENT, TAG_RESIDUALS, TAG_SCORES,
    TAG_SETUP,
};

use std::collections::BTreeMap;

use crate::apsi::SampleId;
use crate::error::{Error, Result};

/// Per-party feature rows, plus labels on the weak side.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerticalDataset {
    dim: usize,
    rows: BTreeMap<SampleId, Vec<f64>>,
    labels: Option<BTreeMap<SampleId, u8>>,
}

impl VerticalDataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: BTreeMap::new(),
            labels: None,
        }
    }

    pub fn insert(&mut self, id: SampleId, features: Vec<f64>) -> Result<()> {
        if features.len() != self.dim {
            return Err(Error::Data(format!(
                "row {id} has {} features, expected {}",
                features.len(),
                self.dim
            )));
        }
        if let Some(x) = features.iter().find(|x| !x.is_finite()) {
            return Err(Error::Data(format!("row {id} has non-finite feature {x}")));
        }
        if self.rows.contains_key(&id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        self.rows.insert(id, features);
        Ok(())
    }

    pub fn set_label(&mut self, id: &SampleId, label: u8) -> Result<()> {
        if label > 1 {
            return Err(Error::Data(format!("label {label} of {id} is not binary")));
        }
        if !self.rows.contains_key(id) {
            return Err(Error::MissingSample(id.to_string()));
        }
        self.labels
            .get_or_insert_with(BTreeMap::new)
            .insert(id.clone(), label);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn ids(&self) -> impl Iterator<Item = &SampleId> {
        self.rows.keys()
    }

    pub fn contains(&self, id: &SampleId) -> bool {
        self.rows.contains_key(id)
    }

    pub fn features(&self, id: &SampleId) -> Result<&[f64]> {
        self.rows
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingSample(id.to_string()))
    }

    pub fn label(&self, id: &SampleId) -> Result<u8> {
        self.labels
            .as_ref()
            .and_then(|l| l.get(id).copied())
            .ok_or_else(|| Error::MissingSample(format!("label for {id}")))
    }
}

/// One party's weights and step size.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub weights: Vec<f64>,
    pub iteration: usize,
    pub learning_rate: f64,
}

impl ModelState {
    /// Zero-initialized weights.
    pub fn new(dim: usize, learning_rate: f64) -> Result<Self> {
        Self::with_weights(vec![0.0; dim], learning_rate)
    }

    pub fn with_weights(weights: Vec<f64>, learning_rate: f64) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning rate {learning_rate} must be positive"
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "initial weights must be finite".into(),
            ));
        }
        Ok(Self {
            weights,
            iteration: 0,
            learning_rate,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Ascent step `w += eta * grad`.
    pub(crate) fn step(&mut self, grad: &[f64]) -> Result<()> {
        if grad.len() != self.weights.len() {
            return Err(Error::InvariantViolation(format!(
                "gradient has {} components for {} weights",
                grad.len(),
                self.weights.len()
            )));
        }
        for (w, g) in self.weights.iter_mut().zip(grad) {
            *w += self.learning_rate * g;
        }
        if let Some(w) = self.weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::Divergence {
                iteration: self.iteration,
                detail: format!("weight became {w}"),
            });
        }
        self.iteration += 1;
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
