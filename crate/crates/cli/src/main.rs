use std::path::PathBuf;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use avfl::apsi::SecurityNumber;
use avfl::avlr::{write_weights_json, TraceRecord, TrainTrace};
use avfl::federation::{classify, FederationProfile};
use avfl::harness::{
    group_for_bits, paillier_keys, preflight, run_experiment, run_strong_party, run_weak_party,
    trace_file_name, CsvSchema, DataSource, ExperimentConfig, LabelRule, TrainingParams,
    TransportKind,
};
use avfl::hom_crypto::{FixedPointCodec, ScalarKind};
use avfl::ph_cipher::{hash_to_group, keygen};
use avfl::seeding;
use avfl::transport::{self, Session};

#[derive(Parser)]
#[command(
    name = "avfl",
    version,
    about = "Asymmetric vertical federated learning toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a group and a Paillier key and run a quick sanity check on both.
    KeygenCheck {
        #[arg(long, default_value_t = 2048)]
        group_bits: u64,
        #[arg(long, default_value_t = 2048)]
        key_bits: u64,
        #[arg(long, env = "AVFL_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Classify a federation from the two parties' sample counts.
    Classify {
        #[arg(long)]
        n1: u64,
        #[arg(long)]
        n2: u64,
        /// Size of the whole id space; defaults to n1 + n2.
        #[arg(long)]
        world: Option<u64>,
    },
    /// Run the asymmetric PSI only.
    Apsi(RunArgs),
    /// Run PSI and then training for one security number.
    Train(RunArgs),
    /// Run PSI and training for every security number and compare the traces.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Role {
    Strong,
    Weak,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Mnist,
}

#[derive(Args, Clone, Debug)]
struct DataArgs {
    /// CSV file (optionally gzipped). Without it, synthetic data is used.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, default_value = "id")]
    id_column: String,
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Label is 1 when the column is at least this; otherwise it must be 0/1.
    #[arg(long)]
    label_threshold: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    feature_scale: f64,
    /// Synthetic row count.
    #[arg(long, default_value_t = 500)]
    rows: usize,
    /// Synthetic feature count.
    #[arg(long, default_value_t = 10)]
    features: usize,
    /// First feature index owned by the strong party.
    #[arg(long, default_value_t = 5)]
    split: usize,
    #[arg(long, default_value_t = 0.25)]
    weak_fraction: f64,
}

#[derive(Args, Clone, Debug)]
struct CommonArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.15)]
    eta: f64,
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    #[arg(long, env = "AVFL_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2048)]
    group_bits: u64,
    #[arg(long, default_value_t = 2048)]
    key_bits: u64,
    #[arg(long, default_value = "inproc")]
    transport: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Play one side over TCP; requires --transport tcp.
    #[arg(long, value_enum)]
    role: Option<Role>,
    #[arg(long, conflicts_with = "connect")]
    listen: Option<String>,
    #[arg(long)]
    connect: Option<String>,
}

#[derive(Args, Clone, Debug)]
struct ExperimentArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    lambdas: Vec<f64>,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
}

impl CommonArgs {
    fn config(&self, lambdas: Vec<f64>) -> Result<ExperimentConfig> {
        let d = &self.data;
        let source = match (&d.data, d.preset) {
            (None, None) => DataSource::Synthetic {
                rows: d.rows,
                features: d.features,
            },
            (None, Some(_)) => bail!("--preset needs --data"),
            (Some(path), Some(Preset::Mnist)) => DataSource::Csv {
                path: path.clone(),
                schema: CsvSchema::mnist(),
            },
            (Some(path), None) => {
                let rule = d
                    .label_threshold
                    .map_or(LabelRule::Binary, LabelRule::AtLeast);
                DataSource::Csv {
                    path: path.clone(),
                    schema: CsvSchema::new(d.id_column.clone())
                        .with_label(d.label_column.clone(), rule)
                        .with_feature_scale(d.feature_scale),
                }
            }
        };
        let config = ExperimentConfig {
            source,
            split: d.split,
            weak_fraction: d.weak_fraction,
            lambdas,
            eta: self.eta,
            iterations: self.iterations,
            seed: self.seed,
            group_bits: self.group_bits,
            key_bits: self.key_bits,
            transport: self.transport.parse()?,
            out_dir: self.out.clone(),
            ..ExperimentConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::KeygenCheck {
            group_bits,
            key_bits,
            seed,
        } => keygen_check(group_bits, key_bits, seed),
        Command::Classify { n1, n2, world } => {
            let profile = FederationProfile::new(n1, n2, world.unwrap_or(n1 + n2))?;
            println!("{}", classify(&profile)?);
            Ok(())
        }
        Command::Apsi(args) => run_single(&args, false),
        Command::Train(args) => run_single(&args, true),
        Command::Experiment(args) => {
            let mut config = args.common.config(args.lambdas.clone())?;
            config.tolerance = args.tolerance;
            let report = run_experiment(&config)?;
            println!("{report}");
            if let Some(dir) = &config.out_dir {
                println!("outputs written to {}", dir.display());
            }
            if !report.passed() {
                bail!("traces diverged beyond tolerance");
            }
            Ok(())
        }
    }
}

fn keygen_check(group_bits: u64, key_bits: u64, seed: u64) -> Result<()> {
    let started = Instant::now();
    let group = group_for_bits(group_bits, seed)?;
    println!("group: {} bits ({:.1?})", group.bits(), started.elapsed());
    let mut rng = seeding::stream(seed, "keygen-check");
    let (a, b) = (keygen(&group, &mut rng), keygen(&group, &mut rng));
    let m = hash_to_group(&group, b"keygen-check");
    let ab = a.encrypt(&b.encrypt(&m)?)?;
    if ab != b.encrypt(&a.encrypt(&m)?)? || a.decrypt(&a.encrypt(&m)?)? != m {
        bail!("commutative cipher check failed");
    }

    let started = Instant::now();
    let keys = paillier_keys(key_bits, seed)?;
    println!(
        "paillier: {} bit modulus ({:.1?})",
        keys.public().n().bits(),
        started.elapsed()
    );
    let pk = keys.public();
    let codec = FixedPointCodec::new(pk.n());
    let x = keys.encrypt(&codec.encode(1.25)?, &mut rng)?;
    let y = keys.encrypt(&codec.encode(-0.5)?, &mut rng)?;
    let sum = pk.add(&x, &y)?;
    let twice = pk.scalar_mul(&sum, &2u32.into(), ScalarKind::Raw)?;
    let got = codec.decode(&keys.decrypt(&twice)?, twice.scale_exponent())?;
    if (got - 1.5).abs() > 1e-9 {
        bail!("homomorphic check failed: 2 * (1.25 - 0.5) decoded as {got}");
    }
    println!("ok");
    Ok(())
}

fn open_session(args: &RunArgs) -> Result<Session> {
    let channel = match (&args.listen, &args.connect) {
        (Some(addr), None) => transport::listen(addr.as_str())?,
        (None, Some(addr)) => {
            transport::connect_with_retry(addr.as_str(), Duration::from_secs(30))?
        }
        _ => bail!("--role needs exactly one of --listen or --connect"),
    };
    Ok(Session::new(Box::new(channel)))
}

fn run_single(args: &RunArgs, train: bool) -> Result<()> {
    let common = &args.common;
    let config = common.config(vec![args.lambda])?;
    let (strong, weak) = config.load_data()?;
    println!("{}", preflight(&strong, &weak)?);
    let lambda = SecurityNumber::new(args.lambda)?;
    let params = TrainingParams {
        eta: config.eta,
        iterations: if train { config.iterations } else { 0 },
        seed: config.seed,
    };

    let Some(role) = args.role else {
        if config.transport != TransportKind::InProcess {
            bail!(
                "--transport tcp without --role runs both sides in one process; use `experiment`"
            );
        }
        let report = run_experiment(&ExperimentConfig {
            iterations: params.iterations,
            ..config
        })?;
        let run = &report.runs[0];
        println!("|I| = {}, |I_obf| = {}", run.intersection, run.obfuscated);
        if train {
            println!("{report}");
        }
        return Ok(());
    };
    if config.transport != TransportKind::TcpLoopback {
        bail!("--role requires --transport tcp");
    }
    let mut session = open_session(args)?;
    match role {
        Role::Strong => {
            let group = group_for_bits(config.group_bits, config.seed)?;
            let (psi, outcome) = run_strong_party(&mut session, &strong, group, &params)?;
            println!("|I_obf| = {}", psi.len());
            if train {
                println!("strong weights: {:?}", outcome.model.weights);
            }
        }
        Role::Weak => {
            let keys = paillier_keys(config.key_bits, config.seed)?;
            let (psi, outcome) = run_weak_party(
                &mut session,
                &weak,
                lambda,
                config.group_bits,
                &keys,
                &params,
            )?;
            println!(
                "|I| = {}, |I_obf| = {}",
                psi.intersection().len(),
                psi.obfuscated_len()
            );
            if let (true, Some(last)) = (train, outcome.records.last()) {
                println!("final loss {:.6}, auc {:.4}", last.loss, last.auc);
            }
            if let (true, Some(dir)) = (train, &config.out_dir) {
                std::fs::create_dir_all(dir)?;
                let trace = TrainTrace {
                    records: outcome
                        .records
                        .iter()
                        .enumerate()
                        .map(|(iteration, r)| TraceRecord {
                            iteration,
                            loss: r.loss,
                            auc: r.auc,
                            weak_weights: r.weights.clone(),
                            strong_weights: Vec::new(),
                            weak_gradient: r.gradient.clone(),
                            strong_gradient: Vec::new(),
                        })
                        .collect(),
                };
                let path = dir.join(trace_file_name(args.lambda));
                trace
                    .write_csv(&path)
                    .with_context(|| format!("writing {}", path.display()))?;
                write_weights_json(
                    &dir.join(format!("weights_weak_lambda_{}.json", args.lambda)),
                    trace.len(),
                    &[],
                    &outcome.model.weights,
                )?;
            }
        }
    }
    Ok(())
}
