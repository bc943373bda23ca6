//! Experiment driver: data loading, party wiring and trace output.

mod data;

pub use data::{
    ingest_csv, ingest_reader, joined_intersection, split_vertical, synthetic_gaussian, CsvSchema,
    FeatureColumns, LabelRule,
};

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::apsi::{self, ApsiResultStrong, ApsiResultWeak, IdSet, SampleId, SecurityNumber};
use crate::avlr::{
    self, reference, run_strong_training, run_weak_training, ModelState, StrongOutcome, TraceGap,
    TrainTrace, VerticalDataset, WeakOutcome,
};
use crate::error::{join_parties, Error, Result};
use crate::federation::{classify, FederationClass, FederationProfile};
use crate::hom_crypto::{hom_keygen, HomKeypair};
use crate::ph_cipher::{generate_group, GroupParams};
use crate::seeding;
use crate::transport::Session;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// Gaussian two-class data; see [`synthetic_gaussian`].
    Synthetic {
        rows: usize,
        features: usize,
    },
    Csv {
        path: PathBuf,
        schema: CsvSchema,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    /// Both parties in this process, talking over a loopback socket.
    TcpLoopback,
}

impl FromStr for TransportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inproc" => Ok(TransportKind::InProcess),
            "tcp" => Ok(TransportKind::TcpLoopback),
            _ => Err(Error::InvalidParameter(format!("unknown transport {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    /// Feature index where the strong party's block starts.
    pub split: usize,
    pub weak_fraction: f64,
    pub lambdas: Vec<f64>,
    pub eta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub group_bits: u64,
    pub key_bits: u64,
    pub transport: TransportKind,
    pub out_dir: Option<PathBuf>,
    /// Largest loss or weight gap tolerated between traces.
    pub tolerance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic {
                rows: 500,
                features: 10,
            },
            split: 5,
            weak_fraction: 0.25,
            lambdas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            eta: 0.15,
            iterations: 50,
            seed: 0,
            group_bits: 2048,
            key_bits: 2048,
            transport: TransportKind::InProcess,
            out_dir: None,
            tolerance: 1e-6,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eta {} must be positive",
                self.eta
            )));
        }
        if self.lambdas.is_empty() {
            return Err(Error::InvalidParameter("no security numbers given".into()));
        }
        for &l in &self.lambdas {
            SecurityNumber::new(l)?;
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::InvalidParameter(
                "tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn load_data(&self) -> Result<(VerticalDataset, VerticalDataset)> {
        let full = match &self.source {
            DataSource::Synthetic { rows, features } => {
                synthetic_gaussian(*rows, *features, self.seed)?
            }
            DataSource::Csv { path, schema } => ingest_csv(path, schema)?,
        };
        split_vertical(&full, self.split, self.weak_fraction, self.seed)
    }
}

/// Step size, iteration count and seed shared by both parties.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingParams {
    pub eta: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// The RFC groups for 1024 and 2048 bits, otherwise a safe prime generated
/// from `seed`.
pub fn group_for_bits(bits: u64, seed: u64) -> Result<GroupParams> {
    match bits {
        1024 => Ok(GroupParams::modp_1024()),
        2048 => Ok(GroupParams::modp_2048()),
        _ => generate_group(bits, &mut seeding::stream(seed, "harness/group")),
    }
}

pub fn paillier_keys(bits: u64, seed: u64) -> Result<HomKeypair> {
    hom_keygen(bits, &mut seeding::stream(seed, "harness/paillier"))
}

/// Party 1 holds the strong data, party 2 the weak data.
pub fn preflight(strong: &VerticalDataset, weak: &VerticalDataset) -> Result<FederationClass> {
    let s: HashSet<&SampleId> = strong.ids().collect();
    let w: HashSet<&SampleId> = weak.ids().collect();
    classify(&FederationProfile::from_sets(&s, &w)?)
}

/// Strong role: APSI as the group proposer, then training over the
/// obfuscated set.
pub fn run_strong_party(
    session: &mut Session,
    data: &VerticalDataset,
    group: GroupParams,
    params: &TrainingParams,
) -> Result<(ApsiResultStrong, StrongOutcome)> {
    let ids = IdSet::from_ids(data.ids().cloned())?;
    let mut rng = seeding::stream(params.seed, "apsi/strong");
    let psi = apsi::run_strong(session, ids, group, &mut rng)?;
    let obf_ids = psi.aligned_ids();
    let init = ModelState::new(data.dim(), params.eta)?;
    let outcome = run_strong_training(
        session,
        data,
        &obf_ids,
        init,
        params.iterations,
        params.seed,
    )?;
    Ok((psi, outcome))
}

/// Weak role: APSI with the given security number, then training as the
/// key holder.
pub fn run_weak_party(
    session: &mut Session,
    data: &VerticalDataset,
    lambda: SecurityNumber,
    min_group_bits: u64,
    keys: &HomKeypair,
    params: &TrainingParams,
) -> Result<(ApsiResultWeak, WeakOutcome)> {
    let ids = IdSet::from_ids(data.ids().cloned())?;
    let mut rng = seeding::stream(params.seed, "apsi/weak");
    let psi = apsi::run_weak(session, ids, lambda, min_group_bits, &mut rng)?;
    let init = ModelState::new(data.dim(), params.eta)?;
    let outcome = run_weak_training(
        session,
        data,
        &psi.aligned_ids(),
        init,
        params.iterations,
        keys,
        params.seed,
    )?;
    Ok((psi, outcome))
}

#[derive(Clone, Debug)]
pub struct LambdaRun {
    pub lambda: f64,
    pub intersection: usize,
    pub obfuscated: usize,
    pub trace: TrainTrace,
    pub strong: ModelState,
    pub weak: ModelState,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub class: FederationClass,
    pub strong_rows: usize,
    pub weak_rows: usize,
    pub runs: Vec<LambdaRun>,
    pub reference: TrainTrace,
    /// Largest gap over every pair of runs.
    pub lambda_gap: TraceGap,
    /// Largest gap between any run and the plaintext reference.
    pub reference_gap: TraceGap,
    pub tolerance: f64,
}

impl ExperimentReport {
    pub fn lambda_invariant(&self) -> bool {
        within(&self.lambda_gap, self.tolerance)
    }

    pub fn matches_reference(&self) -> bool {
        within(&self.reference_gap, self.tolerance)
    }

    pub fn passed(&self) -> bool {
        self.lambda_invariant() && self.matches_reference()
    }

    fn to_summary(&self) -> Summary {
        Summary {
            verdict: self.class.to_string(),
            strong_rows: self.strong_rows,
            weak_rows: self.weak_rows,
            runs: self
                .runs
                .iter()
                .map(|r| RunSummary {
                    lambda: r.lambda,
                    intersection: r.intersection,
                    obfuscated: r.obfuscated,
                    final_loss: r.trace.records.last().map(|t| t.loss),
                    final_auc: r.trace.records.last().map(|t| t.auc),
                })
                .collect(),
            max_lambda_loss_gap: self.lambda_gap.loss,
            max_lambda_weight_gap: self.lambda_gap.weight,
            max_reference_loss_gap: self.reference_gap.loss,
            max_reference_weight_gap: self.reference_gap.weight,
            tolerance: self.tolerance,
            passed: self.passed(),
        }
    }
}

fn within(gap: &TraceGap, tolerance: f64) -> bool {
    gap.loss <= tolerance && gap.weight <= tolerance
}

// Timings are left out so that reruns produce identical files.
#[derive(Serialize)]
struct Summary {
    verdict: String,
    strong_rows: usize,
    weak_rows: usize,
    runs: Vec<RunSummary>,
    max_lambda_loss_gap: f64,
    max_lambda_weight_gap: f64,
    max_reference_loss_gap: f64,
    max_reference_weight_gap: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Serialize)]
struct RunSummary {
    lambda: f64,
    intersection: usize,
    obfuscated: usize,
    final_loss: Option<f64>,
    final_auc: Option<f64>,
}

impl fmt::Display for ExperimentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.class)?;
        writeln!(
            f,
            "strong rows {}, weak rows {}",
            self.strong_rows, self.weak_rows
        )?;
        for r in &self.runs {
            let last = r.trace.records.last();
            writeln!(
                f,
                "lambda {:<5} |I| {:<6} |I_obf| {:<6} loss {:<12} auc {:<8} {:.1?}",
                r.lambda,
                r.intersection,
                r.obfuscated,
                last.map_or("-".into(), |t| format!("{:.6}", t.loss)),
                last.map_or("-".into(), |t| format!("{:.4}", t.auc)),
                r.elapsed,
            )?;
        }
        writeln!(
            f,
            "max gap across lambdas: loss {:.3e}, weight {:.3e}",
            self.lambda_gap.loss, self.lambda_gap.weight
        )?;
        writeln!(
            f,
            "max gap to plaintext reference: loss {:.3e}, weight {:.3e}",
            self.reference_gap.loss, self.reference_gap.weight
        )?;
        write!(
            f,
            "{} (tolerance {:e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.tolerance
        )
    }
}

pub fn trace_file_name(lambda: f64) -> String {
    format!("trace_lambda_{lambda}.csv")
}

/// Runs APSI then training once per security number, both parties in this
/// process, and compares every trace with the others and with a plaintext
/// run on the intersection.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let (strong, weak) = config.load_data()?;
    let class = preflight(&strong, &weak)?;
    log::info!("{class}");

    let group = group_for_bits(config.group_bits, config.seed)?;
    let keys = paillier_keys(config.key_bits, config.seed)?;
    let params = TrainingParams {
        eta: config.eta,
        iterations: config.iterations,
        seed: config.seed,
    };

    let mut runs = Vec::with_capacity(config.lambdas.len());
    for &lambda in &config.lambdas {
        let started = Instant::now();
        let (mut s_session, mut w_session) = match config.transport {
            TransportKind::InProcess => Session::in_process_pair(),
            TransportKind::TcpLoopback => Session::tcp_loopback_pair()?,
        };
        let security = SecurityNumber::new(lambda)?;
        let min_bits = group.bits();
        let ((s_psi, s_out), (w_psi, w_out)) = thread::scope(|scope| {
            let strong_side =
                scope.spawn(|| run_strong_party(&mut s_session, &strong, group.clone(), &params));
            let weak_side =
                run_weak_party(&mut w_session, &weak, security, min_bits, &keys, &params);
            join_parties(
                strong_side.join().expect("strong party panicked"),
                weak_side,
            )
        })?;
        let run = LambdaRun {
            lambda,
            intersection: w_psi.intersection().len(),
            obfuscated: s_psi.len(),
            trace: avlr::merge_trace(&s_out, &w_out),
            strong: s_out.model,
            weak: w_out.model,
            elapsed: started.elapsed(),
        };
        log::info!(
            "lambda {lambda}: |I| = {}, |I_obf| = {}, {:.1?}",
            run.intersection,
            run.obfuscated,
            run.elapsed
        );
        runs.push(run);
    }

    let rows = joined_intersection(&strong, &weak)?;
    let reference = reference::train(
        &rows,
        vec![0.0; strong.dim()],
        vec![0.0; weak.dim()],
        config.eta,
        config.iterations,
    )?;

    let mut lambda_gap = zero_gap();
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            lambda_gap = max_gap(lambda_gap, a.trace.gap(&b.trace));
        }
    }
    let reference_gap = runs
        .iter()
        .fold(zero_gap(), |g, r| max_gap(g, r.trace.gap(&reference)));

    let report = ExperimentReport {
        class,
        strong_rows: strong.len(),
        weak_rows: weak.len(),
        runs,
        reference,
        lambda_gap,
        reference_gap,
        tolerance: config.tolerance,
    };
    if let Some(dir) = &config.out_dir {
        write_outputs(&report, dir)?;
    }
    Ok(report)
}

fn zero_gap() -> TraceGap {
    TraceGap {
        loss: 0.0,
        auc: 0.0,
        weight: 0.0,
    }
}

fn max_gap(a: TraceGap, b: TraceGap) -> TraceGap {
    TraceGap {
        loss: a.loss.max(b.loss),
        auc: a.auc.max(b.auc),
        weight: a.weight.max(b.weight),
    }
}

/// Per-lambda trace CSVs and weight snapshots, the reference trace and
/// `summary.json`.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for run in &report.runs {
        run.trace
            .write_csv(&dir.join(trace_file_name(run.lambda)))?;
        avlr::write_weights_json(
            &dir.join(format!("weights_lambda_{}.json", run.lambda)),
            run.trace.len(),
            &run.strong.weights,
            &run.weak.weights,
        )?;
    }
    report
        .reference
        .write_csv(&dir.join("trace_reference.csv"))?;
    let summary = serde_json::to_string_pretty(&report.to_summary())?;
    fs::write(dir.join("summary.json"), summary + "\n")?;
    Ok(())
}
