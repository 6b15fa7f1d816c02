//! End-to-end pipeline runs over the bundled sample specification.

use scachain::chains::EdgeKind;
use scachain::config::{PipelineConfig, SpecInput};
use scachain::pipeline::{
    cmd_all, cmd_analyze, cmd_extract, cmd_ingest, cmd_link, cmd_stats, cmd_testgen,
    load_test_case,
};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sample_spec.txt")
}

fn fixture_config(dir: &Path) -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.inputs.push(SpecInput {
        spec_id: "TS 24.501".to_string(),
        path: fixture_path(),
        version: "16.8.0".to_string(),
    });
    config.paths.corpus = dir.join("corpus.jsonl");
    config.paths.nodes = dir.join("nodes.jsonl");
    config.paths.edges = dir.join("edges.jsonl");
    config.paths.chains = dir.join("chains.jsonl");
    config.paths.reports_dir = dir.join("reports");
    config.paths.tests_dir = dir.join("tests");
    config.paths.cache = dir.join("cache.jsonl");
    config
}

fn artifact_files(dir: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for entry in walk(dir) {
        files.push(entry);
    }
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                out.extend(walk(&path));
            } else {
                out.push(path);
            }
        }
    }
    out
}

#[test]
fn full_pipeline_on_bundled_sample() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path());
    let summary = cmd_all(&config).unwrap();

    assert_eq!(summary.ingest.specs, 1);
    assert_eq!(summary.ingest.clauses, 7);
    assert_eq!(summary.ingest.sentences, 8);
    assert_eq!(summary.ingest.warnings, 0);

    assert_eq!(summary.extract.nodes, 6);
    assert_eq!(summary.extract.skipped, 0);

    let stats = &summary.link.stats;
    assert_eq!(stats.pair_count, 18);
    assert_eq!(stats.edges_by_kind["temporal"], 2);
    assert_eq!(stats.edges_by_kind["semantic"], 1);
    assert_eq!(stats.edges_by_kind["causal"], 2);
    assert_eq!(stats.chain_count, 1);
    assert_eq!(stats.largest_chain, 6);
    assert_eq!(stats.unresolved_references, 0);

    assert_eq!(summary.analyze.checks_executed, 9 * 4 * 6);
    assert_eq!(summary.analyze.unchecked, 0);
    assert_eq!(summary.analyze.violations, 3);
    assert_eq!(summary.testgen.test_cases, 3);

    // The edge list is exactly the hand-derived set.
    let (_, edges): (_, Vec<scachain::chains::ConnectionEdge>) =
        scachain::store::read_jsonl(&config.paths.edges).unwrap();
    let got: Vec<(u64, u64, EdgeKind, bool)> = edges
        .iter()
        .map(|e| (e.src, e.dst, e.kind, e.via_reference))
        .collect();
    assert_eq!(
        got,
        vec![
            (1, 2, EdgeKind::Temporal, false),
            (2, 3, EdgeKind::Temporal, false),
            (3, 4, EdgeKind::Causal, false),
            (3, 5, EdgeKind::Causal, true),
            (5, 6, EdgeKind::Semantic, false),
        ]
    );

    let (_, chains): (_, Vec<scachain::chains::FunctionChain>) =
        scachain::store::read_jsonl(&config.paths.chains).unwrap();
    assert_eq!(chains.len(), 1);
    assert_eq!(chains[0].node_ids, BTreeSet::from([1, 2, 3, 4, 5, 6]));

    // Every synthesized case parses back from its structured file.
    for entry in std::fs::read_dir(&config.paths.tests_dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
            let case = load_test_case(&path).unwrap();
            assert_eq!(
                path.file_stem().and_then(|s| s.to_str()).unwrap(),
                case.test_id
            );
        }
    }
}

#[test]
fn all_matches_stagewise_runs_byte_for_byte() {
    // One config, one directory: run `all`, snapshot every artifact, then
    // run the stages individually and require exact byte equality.
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path());
    cmd_all(&config).unwrap();
    let all_files = artifact_files(dir.path());
    assert!(all_files.len() >= 10);
    let snapshot: Vec<(PathBuf, Vec<u8>)> = all_files
        .iter()
        .map(|p| (p.clone(), std::fs::read(p).unwrap()))
        .collect();

    cmd_ingest(&config).unwrap();
    cmd_extract(&config).unwrap();
    cmd_link(&config).unwrap();
    cmd_analyze(&config).unwrap();
    cmd_testgen(&config).unwrap();
    cmd_stats(&config).unwrap();

    let stage_files = artifact_files(dir.path());
    assert_eq!(
        stage_files.len(),
        snapshot.len(),
        "stagewise run created or removed artifacts"
    );
    for (path, bytes) in &snapshot {
        let now = std::fs::read(path).unwrap();
        assert_eq!(&now, bytes, "artifact differs after stagewise rerun: {}", path.display());
    }
}

#[test]
fn binary_runs_the_pipeline_and_reports_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path());
    let config_path = dir.path().join("scachain.toml");
    std::fs::write(&config_path, config.to_toml()).unwrap();

    // Downstream command before its inputs exist: exit code 1, named artifact.
    let out = Command::new(env!("CARGO_BIN_EXE_scachain"))
        .args(["--config", config_path.to_str().unwrap(), "link"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("node store"), "stderr: {stderr}");
    assert!(stderr.contains("extract"), "stderr: {stderr}");

    let out = Command::new(env!("CARGO_BIN_EXE_scachain"))
        .args(["--config", config_path.to_str().unwrap(), "--jobs", "2", "all"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("6 nodes"), "stdout: {stdout}");
    assert!(stdout.contains("3 test case(s)"), "stdout: {stdout}");

    // Re-running a single stage over existing artifacts succeeds.
    let out = Command::new(env!("CARGO_BIN_EXE_scachain"))
        .args(["--config", config_path.to_str().unwrap(), "stats"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));

    // Service extraction with a dead endpoint and no cached responses is a
    // backend failure: exit code 2.
    let mut service_config = fixture_config(dir.path());
    service_config.extractor.backend = "service".to_string();
    service_config.backend.endpoint = Some("http://127.0.0.1:9/unreachable".to_string());
    service_config.backend.retry_attempts = 1;
    service_config.backend.backoff_ms = 1;
    let service_config_path = dir.path().join("service.toml");
    std::fs::write(&service_config_path, service_config.to_toml()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_scachain"))
        .args(["--config", service_config_path.to_str().unwrap(), "extract"])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn config_file_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path());
    let path = dir.path().join("scachain.toml");
    std::fs::write(&path, config.to_toml()).unwrap();
    let loaded = PipelineConfig::load(&path).unwrap();
    assert_eq!(loaded, config);
}

#[test]
fn gold_metrics_report_on_self_extraction() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = fixture_config(dir.path());
    cmd_ingest(&config).unwrap();
    cmd_extract(&config).unwrap();

    // Gold = the extraction itself: accuracy 1.0 across fields, ROUGE-L 1.0.
    config.metrics.gold = Some(config.paths.nodes.clone());
    let report = cmd_stats(&config).unwrap();
    let accuracy = report.accuracy.unwrap();
    assert_eq!(accuracy.compared, 6);
    assert_eq!(
        (accuracy.start, accuracy.condition, accuracy.action, accuracy.end),
        (1.0, 1.0, 1.0, 1.0)
    );
    let rouge = report.rouge.unwrap();
    assert!((rouge.rouge_l_f1 - 1.0).abs() < 1e-12);
    assert_eq!(report.completeness.counts, [0, 0, 2, 2, 2]);
}
