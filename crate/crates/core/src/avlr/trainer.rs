use std::thread;

use super::metrics::auc;
use super::ops::{
    encrypt_residuals, mask, reveal_masked, sample_mask, strong_encrypted_gradient,
    strong_partial_scores, unmask, weak_loss_and_gradient, weak_residuals, EncodedFeatures,
};
use super::trace::{TraceRecord, TrainTrace};
use super::{dot, ModelState, VerticalDataset};
use crate::apsi::SampleId;
use crate::error::{join_parties, Error, ProtocolError, Result};
use crate::hom_crypto::{FixedPointCodec, HomKeypair, PublicKey};
use crate::seeding;
use crate::transport::{Payload, Protocol, Session};

pub const TAG_SETUP: &str = "avlr/1/setup";
pub const TAG_SCORES: &str = "avlr/4/scores";
pub const TAG_RESIDUALS: &str = "avlr/6/residuals";
pub const TAG_MASKED_GRADIENT: &str = "avlr/9/masked_gradient";
pub const TAG_GRADIENT: &str = "avlr/10/gradient";

/// The strong party's view of a run: its final model and, per iteration, the
/// weights it started from and the gradient it recovered.
#[derive(Clone, Debug)]
pub struct StrongOutcome {
    pub model: ModelState,
    pub weights: Vec<Vec<f64>>,
    pub gradients: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakRecord {
    /// `-L` at the start of the iteration.
    pub loss: f64,
    /// NaN when the intersection holds a single class.
    pub auc: f64,
    pub weights: Vec<f64>,
    pub gradient: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct WeakOutcome {
    pub model: ModelState,
    pub records: Vec<WeakRecord>,
}

fn abort_on_error<T>(session: &mut Session, result: Result<T>) -> Result<T> {
    if let Err(e) = &result {
        if !matches!(e, Error::Protocol(_) | Error::Transport(_) | Error::Io(_)) {
            session.abort(Protocol::Avlr, &e.to_string());
        }
    }
    result
}

/// Strong side. `obf_ids` must be in the order agreed with the weak party.
pub fn run_strong_training(
    session: &mut Session,
    data: &VerticalDataset,
    obf_ids: &[SampleId],
    model: ModelState,
    iterations: usize,
    seed: u64,
) -> Result<StrongOutcome> {
    let result = strong_loop(session, data, obf_ids, model, iterations, seed);
    abort_on_error(session, result)
}

fn strong_loop(
    session: &mut Session,
    data: &VerticalDataset,
    obf_ids: &[SampleId],
    mut model: ModelState,
    iterations: usize,
    seed: u64,
) -> Result<StrongOutcome> {
    let pk = match session.recv(TAG_SETUP)?.payload {
        Payload::AvlrSetup {
            n,
            samples,
            iterations: peer_iterations,
        } => {
            if samples != obf_ids.len() as u64 || peer_iterations != iterations as u64 {
                return Err(Error::InvariantViolation(format!(
                    "peer expects {samples} samples over {peer_iterations} iterations, \
                     this side has {} over {iterations}",
                    obf_ids.len()
                )));
            }
            PublicKey::from_modulus(n)?
        }
        other => {
            return Err(
                ProtocolError::UnexpectedPayload(format!("{TAG_SETUP} carried {other:?}")).into(),
            )
        }
    };
    let codec = FixedPointCodec::new(pk.n());
    let features = EncodedFeatures::new(&codec, data, obf_ids)?;
    let mut mask_rng = seeding::stream(seed, "avlr/mask");

    let mut weights = Vec::with_capacity(iterations);
    let mut gradients = Vec::with_capacity(iterations);
    for k in 0..iterations {
        let scores = strong_partial_scores(&model, data, obf_ids)?;
        session.send(TAG_SCORES, Payload::Reals(scores))?;

        let residuals = session.recv(TAG_RESIDUALS)?.into_ciphertexts()?;
        let encrypted = strong_encrypted_gradient(&pk, &features, &residuals)?;
        let r = sample_mask(model.dim(), &mut mask_rng);
        session.send(
            TAG_MASKED_GRADIENT,
            Payload::Ciphertexts(mask(&pk, &encrypted, &r)?),
        )?;

        let revealed = session.recv(TAG_GRADIENT)?.into_reals()?;
        let grad = unmask(&revealed, &r)?;
        weights.push(model.weights.clone());
        gradients.push(grad.clone());
        model.step(&grad)?;
        log::debug!("strong iteration {k} done");
    }
    Ok(StrongOutcome {
        model,
        weights,
        gradients,
    })
}

/// Weak side. `aligned[i]` is the weak id at obfuscated position `i`, or
/// `None` for a dummy.
pub fn run_weak_training(
    session: &mut Session,
    data: &VerticalDataset,
    aligned: &[Option<SampleId>],
    model: ModelState,
    iterations: usize,
    keys: &HomKeypair,
    seed: u64,
) -> Result<WeakOutcome> {
    let result = weak_loop(session, data, aligned, model, iterations, keys, seed);
    abort_on_error(session, result)
}

fn weak_loop(
    session: &mut Session,
    data: &VerticalDataset,
    aligned: &[Option<SampleId>],
    mut model: ModelState,
    iterations: usize,
    keys: &HomKeypair,
    seed: u64,
) -> Result<WeakOutcome> {
    let genuine: Vec<&SampleId> = aligned.iter().flatten().collect();
    if genuine.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    for id in &genuine {
        data.label(id)?;
    }
    let n_inter = genuine.len();
    let codec = FixedPointCodec::new(keys.public().n());
    let mut nonce_rng = seeding::stream(seed, "avlr/nonce");

    session.send(
        TAG_SETUP,
        Payload::AvlrSetup {
            n: keys.public().n().clone(),
            samples: aligned.len() as u64,
            iterations: iterations as u64,
        },
    )?;

    let mut records = Vec::with_capacity(iterations);
    for k in 0..iterations {
        let scores = session.recv(TAG_SCORES)?.into_reals()?;
        if scores.len() != aligned.len() {
            return Err(Error::InvariantViolation(format!(
                "{} scores for {} obfuscated ids",
                scores.len(),
                aligned.len()
            )));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Divergence {
                iteration: k,
                detail: format!("strong score {s}"),
            });
        }

        let residuals = weak_residuals(&model, data, &scores, aligned)?;
        let cts = encrypt_residuals(keys, &codec, &residuals, &mut nonce_rng)?;
        session.send(TAG_RESIDUALS, Payload::Ciphertexts(cts))?;

        let (likelihood, grad) = weak_loss_and_gradient(&model, data, &scores, aligned)?;
        if !likelihood.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                detail: format!("log-likelihood {likelihood}"),
            });
        }
        let scored = scores
            .iter()
            .zip(aligned)
            .filter_map(|(s, id)| id.as_ref().map(|id| (s, id)))
            .map(|(s, id)| Ok((s + dot(&model.weights, data.features(id)?), data.label(id)?)))
            .collect::<Result<Vec<_>>>()?;

        let masked = session.recv(TAG_MASKED_GRADIENT)?.into_ciphertexts()?;
        let revealed = reveal_masked(keys, &codec, &masked, n_inter)?;
        session.send(TAG_GRADIENT, Payload::Reals(revealed))?;

        records.push(WeakRecord {
            loss: -likelihood,
            auc: auc(&scored).unwrap_or(f64::NAN),
            weights: model.weights.clone(),
            gradient: grad.clone(),
        });
        model.step(&grad)?;
        log::debug!("weak iteration {k}: loss {}", -likelihood);
    }
    Ok(WeakOutcome { model, records })
}

/// Both parties' inputs for an in-process run.
#[derive(Clone, Copy, Debug)]
pub struct Participants<'a> {
    pub strong_data: &'a VerticalDataset,
    pub obf_ids: &'a [SampleId],
    pub weak_data: &'a VerticalDataset,
    pub aligned: &'a [Option<SampleId>],
}

/// Runs both trainers on two threads over an in-process channel and merges
/// their views into one trace.
pub fn train(
    parties: Participants<'_>,
    strong_init: ModelState,
    weak_init: ModelState,
    iterations: usize,
    keys: &HomKeypair,
    seed: u64,
) -> Result<(ModelState, ModelState, TrainTrace)> {
    let (mut s_session, mut w_session) = Session::in_process_pair();
    let (strong, weak) = thread::scope(|scope| {
        let strong = scope.spawn(move || {
            run_strong_training(
                &mut s_session,
                parties.strong_data,
                parties.obf_ids,
                strong_init,
                iterations,
                seed,
            )
        });
        let weak = run_weak_training(
            &mut w_session,
            parties.weak_data,
            parties.aligned,
            weak_init,
            iterations,
            keys,
            seed,
        );
        join_parties(strong.join().expect("strong trainer panicked"), weak)
    })?;
    Ok((
        strong.model.clone(),
        weak.model.clone(),
        merge_trace(&strong, &weak),
    ))
}

pub fn merge_trace(strong: &StrongOutcome, weak: &WeakOutcome) -> TrainTrace {
    let records = weak
        .records
        .iter()
        .zip(strong.weights.iter().zip(&strong.gradients))
        .enumerate()
        .map(|(iteration, (w, (s_weights, s_grad)))| TraceRecord {
            iteration,
            loss: w.loss,
            auc: w.auc,
            weak_weights: w.weights.clone(),
            strong_weights: s_weights.clone(),
            weak_gradient: w.gradient.clone(),
            strong_gradient: s_grad.clone(),
        })
        .collect();
    TrainTrace { records }
}
