//! The per-step computations of one training iteration, independent of
//! transport.

use num_bigint::BigUint;
use rand::Rng;

use super::{dot, ModelState, VerticalDataset};
use crate::apsi::SampleId;
use crate::error::{Error, Result};
use crate::hom_crypto::{Ciphertext, FixedPointCodec, HomKeypair, PublicKey, ScalarKind};

/// Masks are drawn from `[1, 2^MASK_BITS)`.
pub const MASK_BITS: u32 = 32;

/// A residual at one position of the obfuscated order. Dummies have no id
/// and `phi == 0.0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub id: Option<SampleId>,
    pub phi: f64,
}

pub fn sigmoid(l: f64) -> f64 {
    if l >= 0.0 {
        1.0 / (1.0 + (-l).exp())
    } else {
        let e = l.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(l))` without overflow.
pub fn softplus(l: f64) -> f64 {
    l.max(0.0) + (-l.abs()).exp().ln_1p()
}

/// Strong-side partial scores `w_s . x_s` for every obfuscated id, in order.
pub fn strong_partial_scores(
    model: &ModelState,
    data: &VerticalDataset,
    obf_ids: &[SampleId],
) -> Result<Vec<f64>> {
    check_dim(model, data)?;
    obf_ids
        .iter()
        .map(|id| Ok(dot(&model.weights, data.features(id)?)))
        .collect()
}

fn check_dim(model: &ModelState, data: &VerticalDataset) -> Result<()> {
    if model.dim() != data.dim() {
        return Err(Error::InvariantViolation(format!(
            "model has {} weights for {} features",
            model.dim(),
            data.dim()
        )));
    }
    Ok(())
}

struct Genuine<'a> {
    logit: f64,
    label: u8,
    features: &'a [f64],
}

fn genuine_rows<'a>(
    model: &ModelState,
    data: &'a VerticalDataset,
    scores: &[f64],
    aligned: &[Option<SampleId>],
) -> Result<Vec<Genuine<'a>>> {
    check_dim(model, data)?;
    if scores.len() != aligned.len() {
        return Err(Error::InvariantViolation(format!(
            "{} scores for {} obfuscated ids",
            scores.len(),
            aligned.len()
        )));
    }
    let mut out = Vec::new();
    for (score, id) in scores.iter().zip(aligned) {
        if let Some(id) = id {
            let features = data.features(id)?;
            out.push(Genuine {
                logit: score + dot(&model.weights, features),
                label: data.label(id)?,
                features,
            });
        }
    }
    Ok(out)
}

/// `phi_i = y_i - sigmoid(l_i)` for genuine positions, exactly zero for
/// dummies.
pub fn weak_residuals(
    model: &ModelState,
    data: &VerticalDataset,
    scores: &[f64],
    aligned: &[Option<SampleId>],
) -> Result<Vec<Residual>> {
    let genuine = genuine_rows(model, data, scores, aligned)?;
    let mut g = genuine.iter();
    Ok(aligned
        .iter()
        .map(|id| match id {
            Some(id) => {
                let row = g.next().expect("one genuine row per id");
                Residual {
                    id: Some(id.clone()),
                    phi: row.label as f64 - sigmoid(row.logit),
                }
            }
            None => Residual { id: None, phi: 0.0 },
        })
        .collect())
}

/// Average log-likelihood over the intersection and the weak-side gradient
/// `(1/N) sum phi_i x_w_i`.
pub fn weak_loss_and_gradient(
    model: &ModelState,
    data: &VerticalDataset,
    scores: &[f64],
    aligned: &[Option<SampleId>],
) -> Result<(f64, Vec<f64>)> {
    let genuine = genuine_rows(model, data, scores, aligned)?;
    if genuine.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let n = genuine.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.dim()];
    for row in &genuine {
        let y = row.label as f64;
        loss += y * row.logit - softplus(row.logit);
        let phi = y - sigmoid(row.logit);
        for (g, x) in grad.iter_mut().zip(row.features) {
            *g += phi * x;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Encodes and encrypts each residual with fresh randomness.
pub fn encrypt_residuals<R: Rng + ?Sized>(
    keys: &HomKeypair,
    codec: &FixedPointCodec,
    residuals: &[Residual],
    rng: &mut R,
) -> Result<Vec<Ciphertext>> {
    residuals
        .iter()
        .map(|r| keys.encrypt(&codec.encode(r.phi)?, rng))
        .collect()
}

/// Strong features over the obfuscated order, encoded column by column.
#[derive(Clone, Debug)]
pub struct EncodedFeatures {
    columns: Vec<Vec<BigUint>>,
    rows: usize,
}

impl EncodedFeatures {
    /// Encodes the features and checks that no masked gradient component can
    /// wrap around `n`: with `|phi| < 1`, component `j` is bounded by
    /// `scale * sum_i |enc(x_ij)| * 2^MASK_BITS`.
    pub fn new(
        codec: &FixedPointCodec,
        data: &VerticalDataset,
        obf_ids: &[SampleId],
    ) -> Result<Self> {
        let mut columns = vec![Vec::with_capacity(obf_ids.len()); data.dim()];
        let mut magnitude = vec![BigUint::default(); data.dim()];
        for id in obf_ids {
            for (j, &x) in data.features(id)?.iter().enumerate() {
                let m = codec.encode(x)?;
                magnitude[j] += codec.to_signed(&m)?.magnitude();
                columns[j].push(m);
            }
        }
        let half_n = codec.modulus() >> 1;
        for (j, total) in magnitude.iter().enumerate() {
            let bound = (total * codec.scale()) << MASK_BITS;
            if bound >= half_n {
                return Err(Error::CodecOverflow(format!(
                    "feature column {j} could overflow the plaintext space"
                )));
            }
        }
        Ok(Self {
            columns,
            rows: obf_ids.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// `<N * grad_s>_j = sum_i <phi_i> * enc(x_ij)` over the whole obfuscated
/// set. Dummy rows carry encryptions of zero and drop out of the sum.
pub fn strong_encrypted_gradient(
    pk: &PublicKey,
    features: &EncodedFeatures,
    residuals: &[Ciphertext],
) -> Result<Vec<Ciphertext>> {
    if residuals.len() != features.rows {
        return Err(Error::InvariantViolation(format!(
            "{} residuals for {} obfuscated rows",
            residuals.len(),
            features.rows
        )));
    }
    if let Some(c) = residuals.iter().find(|c| c.scale_exponent() != 1) {
        return Err(Error::ScaleMismatch {
            left: 1,
            right: c.scale_exponent(),
        });
    }
    features
        .columns
        .iter()
        .map(|col| {
            let terms: Vec<(&Ciphertext, &BigUint)> = residuals.iter().zip(col).collect();
            pk.dot(&terms, ScalarKind::Encoded)
        })
        .collect()
}

/// A fresh mask vector with entries in `[1, 2^MASK_BITS)`.
pub fn sample_mask<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<u64> {
    (0..dim)
        .map(|_| rng.gen_range(1..1u64 << MASK_BITS))
        .collect()
}

/// Componentwise `r_j * <g_j>` with raw integer masks.
pub fn mask(pk: &PublicKey, gradient: &[Ciphertext], r: &[u64]) -> Result<Vec<Ciphertext>> {
    if gradient.len() != r.len() {
        return Err(Error::InvariantViolation(format!(
            "{} mask entries for {} gradient components",
            r.len(),
            gradient.len()
        )));
    }
    if r.contains(&0) {
        return Err(Error::InvalidParameter(
            "mask entries must be nonzero".into(),
        ));
    }
    gradient
        .iter()
        .zip(r)
        .map(|(c, &k)| pk.scalar_mul(c, &BigUint::from(k), ScalarKind::Raw))
        .collect()
}

/// Weak side: decrypts, removes the fixed-point scale, then divides by the
/// intersection size.
pub fn reveal_masked(
    keys: &HomKeypair,
    codec: &FixedPointCodec,
    masked: &[Ciphertext],
    n_inter: usize,
) -> Result<Vec<f64>> {
    if n_inter == 0 {
        return Err(Error::EmptyIntersection);
    }
    masked
        .iter()
        .map(|c| Ok(codec.decode(&keys.decrypt(c)?, c.scale_exponent())? / n_inter as f64))
        .collect()
}

/// Strong side: Hadamard division by the mask.
pub fn unmask(values: &[f64], r: &[u64]) -> Result<Vec<f64>> {
    if values.len() != r.len() {
        return Err(Error::InvariantViolation(format!(
            "{} values for {} mask entries",
            values.len(),
            r.len()
        )));
    }
    if r.contains(&0) {
        return Err(Error::InvalidParameter(
            "mask entries must be nonzero".into(),
        ));
    }
    Ok(values.iter().zip(r).map(|(v, &k)| v / k as f64).collect())
}
