use std::path::PathBuf;

use gfrag::experiments::*;
use gfrag::{KernelShape, ModelParams};

fn config_b() -> ModelParams {
    ModelParams::new(0.3, 0.5, 0.1, 1.0, KernelShape::Uniform)
}

fn small_transient() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Transient, &config_b());
    cfg.replicas = 200;
    cfg.spine_runs = 5000;
    cfg
}

#[test]
fn outputs_round_trip() {
    let rec = run(&small_transient()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_outputs(&rec, dir.path()).unwrap();

    let back: ResultRecord = serde_json::from_str(&std::fs::read_to_string(&paths.summary).unwrap()).unwrap();
    assert_eq!(back.header, rec.header);
    assert_eq!(back.checks, rec.checks);
    assert_eq!(back.series, rec.series);

    let jsonl = std::fs::read_to_string(&paths.replicas).unwrap();
    let lines: Vec<&str> = jsonl.lines().collect();
    assert_eq!(lines.len(), 1 + rec.replicas.len());
    let head: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(head["header"]["config_hash"], rec.header.config_hash.as_str());
    let first: ReplicaRecord = serde_json::from_str(lines[1]).unwrap();
    assert_eq!(first, rec.replicas[0]);

    let csv = std::fs::read_to_string(&paths.series).unwrap();
    let mut it = csv.lines();
    assert!(it.next().unwrap().starts_with(&format!("# kind=transient config_hash={}", rec.header.config_hash)));
    assert_eq!(it.next().unwrap(), "series,t,mean,se,n,target");
    let rows: usize = rec.series.iter().map(|s| s.points.len()).sum();
    assert_eq!(it.count(), rows);
}

#[test]
fn reruns_share_a_fingerprint() {
    let cfg = small_transient();
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(run(&other).unwrap().fingerprint().unwrap(), a.fingerprint().unwrap());
    assert_ne!(other.config_hash().unwrap(), cfg.config_hash().unwrap());
}

#[test]
fn shipped_configs_load_and_hash_like_inline_models() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["slln.json", "transient.json", "crosscheck.json"] {
        let cfg = ExperimentConfig::from_json_file(&dir.join(name)).unwrap();
        let model = cfg.resolve_model().unwrap();
        let mut inline = cfg.clone();
        inline.model = ModelSource::Inline(model.to_config());
        assert_eq!(cfg.config_hash().unwrap(), inline.config_hash().unwrap(), "{name}");
        assert_eq!(cfg.tolerances, Tolerances::standard(), "{name}");
    }
}
