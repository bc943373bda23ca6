use std::path::PathBuf;

use avfl::harness::{
    ingest_csv, run_experiment, split_vertical, CsvSchema, DataSource, ExperimentConfig,
    TransportKind,
};

fn small() -> ExperimentConfig {
    ExperimentConfig {
        source: DataSource::Synthetic {
            rows: 200,
            features: 6,
        },
        split: 3,
        weak_fraction: 0.2,
        lambdas: vec![0.0, 0.5, 1.0],
        iterations: 5,
        group_bits: 160,
        key_bits: 512,
        ..ExperimentConfig::default()
    }
}

#[test]
fn tcp_and_in_process_runs_are_identical() {
    let inproc = run_experiment(&small()).unwrap();
    let tcp = run_experiment(&ExperimentConfig {
        transport: TransportKind::TcpLoopback,
        ..small()
    })
    .unwrap();
    assert!(inproc.passed() && tcp.passed());
    for (a, b) in inproc.runs.iter().zip(&tcp.runs) {
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.obfuscated, b.obfuscated);
    }
}

#[test]
fn trace_files_are_byte_identical_across_reruns() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        run_experiment(&ExperimentConfig {
            out_dir: Some(dir.path().to_path_buf()),
            ..small()
        })
        .unwrap();
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 8);
    for name in names {
        let a = std::fs::read(dirs[0].path().join(&name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&name)).unwrap();
        assert_eq!(a, b, "{name:?}");
    }
}

#[test]
fn different_seeds_give_different_traces() {
    let a = run_experiment(&small()).unwrap();
    let b = run_experiment(&ExperimentConfig { seed: 1, ..small() }).unwrap();
    assert_ne!(a.runs[0].trace, b.runs[0].trace);
}

#[test]
fn weak_fraction_one_is_symmetric() {
    let report = run_experiment(&ExperimentConfig {
        weak_fraction: 1.0,
        lambdas: vec![0.0, 1.0],
        ..small()
    })
    .unwrap();
    assert!(report.class.weak.is_none());
    assert!(report
        .runs
        .iter()
        .all(|r| r.obfuscated == 200 && r.intersection == 200));
    assert!(report.passed());
}

#[test]
fn bundled_mnist_subsample_shape() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist_2k.csv.gz");
    let data = ingest_csv(&path, &CsvSchema::mnist()).unwrap();
    assert_eq!((data.len(), data.dim()), (2000, 784));
    let (strong, weak) = split_vertical(&data, 392, 1.0 / 6.0, 0).unwrap();
    assert_eq!((strong.dim(), weak.dim()), (392, 392));
    assert_eq!(weak.len(), 333);
    let positives = weak.ids().filter(|id| weak.label(id).unwrap() == 1).count();
    assert!(positives > 100 && positives < 233, "{positives}");
    let pixels = data
        .ids()
        .flat_map(|id| data.features(id).unwrap().to_vec());
    assert!(pixels.into_iter().all(|p| (0.0..1.0).contains(&p)));
}
