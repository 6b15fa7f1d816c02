//! Stage orchestration behind the CLI. Each command reads its upstream
//! artifacts, runs one stage, and writes its outputs; `all` chains the six
//! stages. Every command is re-runnable and deterministic given identical
//! inputs and cache: artifacts are byte-identical across runs and across
//! worker counts.

use crate::backends::{
    BackendError, FallbackSimilarityJudge, LexiconCausalJudge, ResponseCache, ServiceCausalJudge,
    ServiceClient, ServicePropertyJudge, ServiceSettings, ServiceSimilarityJudge,
};
use crate::chains::{
    assemble_chains, build_scope, estimated_serial_years, link_all, link_stats, FunctionChain,
    LinkStats, ScopeOptions,
};
use crate::config::{ConfigError, PipelineConfig};
use crate::corpus::{segment, ClauseTree, SentenceRecord};
use crate::metrics::{
    completeness_distribution, field_accuracy, rouge, CompletenessDistribution,
    FieldAccuracyReport, MatchMode, MetricsError,
};
use crate::oracle::{
    sweep, CheckMatrixReport, PropertyRegistry, RegistryError, RuleJudge, RuleSet,
};
use crate::sca::{extract, PatternBackend, ScaNode, ServiceExtractionBackend};
use crate::store::{
    file_digest, read_json_doc, read_jsonl, write_json_doc, write_jsonl, RunMeta, StoreError,
};
use crate::vulntester::{parse_structured, render, synthesize, RenderFormat, SynthesisError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as FmtWrite;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing artifact: {name} (run `{produced_by}` first)")]
    MissingArtifact {
        name: &'static str,
        produced_by: &'static str,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("input {path}: {source}")]
    Input {
        path: String,
        source: std::io::Error,
    },
    #[error("internal invariant failed: {0}")]
    Internal(String),
}

impl PipelineError {
    /// 1 = user/config error, 2 = backend unavailable, 3 = internal failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Backend(_) => 2,
            PipelineError::Synthesis(_) | PipelineError::Internal(_) => 3,
            _ => 1,
        }
    }
}

fn require(path: &Path, name: &'static str, produced_by: &'static str) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingArtifact { name, produced_by })
    }
}

fn meta_for(config: &PipelineConfig, artifact: &str) -> RunMeta {
    RunMeta::new(
        artifact,
        &config.digest(),
        &file_digest(&config.paths.cache),
    )
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub specs: u64,
    pub clauses: u64,
    pub sentences: u64,
    pub warnings: u64,
    pub skipped_preamble_lines: u64,
}

pub fn cmd_ingest(config: &PipelineConfig) -> Result<IngestSummary, PipelineError> {
    let mut records: Vec<SentenceRecord> = Vec::new();
    let mut summary = IngestSummary::default();
    for input in &config.inputs {
        let raw = std::fs::read_to_string(&input.path).map_err(|source| PipelineError::Input {
            path: input.path.display().to_string(),
            source,
        })?;
        let outcome = segment(&input.spec_id, &raw);
        for warning in &outcome.warnings {
            tracing::warn!(spec_id = %input.spec_id, ?warning, "segmentation warning");
        }
        summary.specs += 1;
        summary.clauses += outcome.document.iter_clauses().count() as u64;
        summary.warnings += outcome.warnings.len() as u64;
        summary.skipped_preamble_lines += outcome.skipped_preamble_lines as u64;
        records.extend(outcome.document.to_records());
    }
    summary.sentences = records.len() as u64;
    write_jsonl(&config.paths.corpus, &meta_for(config, "corpus"), &records)?;
    Ok(summary)
}

fn load_corpus(config: &PipelineConfig) -> Result<Vec<SentenceRecord>, PipelineError> {
    require(&config.paths.corpus, "corpus", "ingest")?;
    Ok(read_jsonl(&config.paths.corpus)?.1)
}

fn load_nodes(config: &PipelineConfig) -> Result<Vec<ScaNode>, PipelineError> {
    require(&config.paths.nodes, "node store", "extract")?;
    Ok(read_jsonl(&config.paths.nodes)?.1)
}

fn load_chains(config: &PipelineConfig) -> Result<Vec<FunctionChain>, PipelineError> {
    require(&config.paths.chains, "chain store", "link")?;
    Ok(read_jsonl(&config.paths.chains)?.1)
}

fn service_client(config: &PipelineConfig) -> Result<Arc<ServiceClient>, PipelineError> {
    let cache = ResponseCache::open(&config.paths.cache)?;
    Ok(ServiceClient::new(
        ServiceSettings {
            endpoint: config.backend.endpoint.clone(),
            max_concurrency: config.backend.max_concurrency,
            retry_attempts: config.backend.retry_attempts,
            backoff_ms: config.backend.backoff_ms,
        },
        cache,
    )?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub sentences: u64,
    pub nodes: u64,
    pub skipped: u64,
}

pub fn cmd_extract(config: &PipelineConfig) -> Result<ExtractSummary, PipelineError> {
    let sentences = load_corpus(config)?;
    let outcome = match config.extractor.backend.as_str() {
        "service" => {
            let backend = ServiceExtractionBackend::new(
                service_client(config)?,
                config.extractor.examples_per_spec as usize,
                config.backend.max_response_chars,
            );
            extract(&sentences, &backend)?
        }
        _ => {
            let backend = PatternBackend::default();
            extract(&sentences, &backend)?
        }
    };
    write_jsonl(&config.paths.nodes, &meta_for(config, "nodes"), &outcome.nodes)?;
    Ok(ExtractSummary {
        sentences: sentences.len() as u64,
        nodes: outcome.nodes.len() as u64,
        skipped: outcome.skipped.len() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub stats: LinkStats,
}

pub fn cmd_link(config: &PipelineConfig) -> Result<LinkSummary, PipelineError> {
    let nodes = load_nodes(config)?;
    let corpus = load_corpus(config)?;

    let mut ids_by_spec: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for record in &corpus {
        ids_by_spec
            .entry(record.spec_id.clone())
            .or_default()
            .push(record.clause_id.clone());
    }
    let trees: HashMap<String, ClauseTree> = ids_by_spec
        .into_iter()
        .map(|(spec, ids)| (spec, ClauseTree::from_ids(ids)))
        .collect();

    let scope = build_scope(
        &nodes,
        config.chains.mode,
        &trees,
        ScopeOptions {
            clause_local_depth: config.chains.clause_local_depth,
        },
    );

    // The semantic/causal judges follow the extractor's backend choice: a
    // service-backed run verifies candidate pairs through the endpoint, an
    // offline run stays on the deterministic fallbacks.
    let edges = if config.extractor.backend == "service" {
        let client = service_client(config)?;
        let similarity = ServiceSimilarityJudge {
            client: Arc::clone(&client),
            max_response_chars: config.backend.max_response_chars,
        };
        let causal = ServiceCausalJudge {
            client,
            max_response_chars: config.backend.max_response_chars,
        };
        link_all(&nodes, &scope, &similarity, &causal, config.chains.semantic_threshold)?
    } else {
        link_all(
            &nodes,
            &scope,
            &FallbackSimilarityJudge,
            &LexiconCausalJudge::default(),
            config.chains.semantic_threshold,
        )?
    };

    let chains = assemble_chains(&edges, &nodes);
    let stats = link_stats(config.chains.mode, &scope, &edges, &chains);

    write_jsonl(&config.paths.edges, &meta_for(config, "edges"), &edges)?;
    write_jsonl(&config.paths.chains, &meta_for(config, "chains"), &chains)?;
    write_json_doc(
        &config.paths.reports_dir.join("link_report.json"),
        &meta_for(config, "link_report"),
        &stats,
    )?;
    Ok(LinkSummary { stats })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisDoc {
    pub judge: String,
    pub matrix: CheckMatrixReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeSummary {
    pub checks_executed: u64,
    pub unchecked: u64,
    pub violations: u64,
}

fn violations_path(config: &PipelineConfig) -> std::path::PathBuf {
    config.paths.reports_dir.join("violations.json")
}

fn summary_table(registry: &PropertyRegistry, report: &CheckMatrixReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "checks executed: {}", report.checks_executed);
    let _ = writeln!(out, "unchecked:       {}", report.unchecked);
    let _ = writeln!(out, "violations:      {}", report.violations.len());
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<28} violations", "property");
    for p in &registry.properties {
        let _ = writeln!(
            out,
            "{:<28} {}",
            p.property_id,
            report.per_property_counts.get(&p.property_id).copied().unwrap_or(0)
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<28} violations", "attack action");
    for (action, count) in &report.per_attack_counts {
        let _ = writeln!(out, "{:<28} {}", action, count);
    }
    out
}

pub fn cmd_analyze(config: &PipelineConfig) -> Result<AnalyzeSummary, PipelineError> {
    let nodes = load_nodes(config)?;
    let chains = load_chains(config)?;

    let registry = match &config.oracle.properties_file {
        Some(path) => PropertyRegistry::from_file(path)?,
        None => PropertyRegistry::bundled(),
    };
    let report = if config.oracle.judge == "service" {
        let judge = ServicePropertyJudge {
            client: service_client(config)?,
            max_response_chars: config.backend.max_response_chars,
        };
        sweep(&chains, &nodes, &judge, &registry)
    } else {
        let rules = match &config.oracle.rules_file {
            Some(path) => RuleSet::from_file(path)?,
            None => RuleSet::bundled(),
        };
        let judge = RuleJudge::new(rules);
        sweep(&chains, &nodes, &judge, &registry)
    };

    let member_count: u64 = chains.iter().map(|c| c.node_ids.len() as u64).sum();
    let expected = registry.properties.len() as u64 * 4 * member_count;
    if report.checks_executed + report.unchecked != expected {
        return Err(PipelineError::Internal(format!(
            "check matrix not total: {} + {} != {}",
            report.checks_executed, report.unchecked, expected
        )));
    }

    let summary = AnalyzeSummary {
        checks_executed: report.checks_executed,
        unchecked: report.unchecked,
        violations: report.violations.len() as u64,
    };
    let doc = AnalysisDoc {
        judge: config.oracle.judge.clone(),
        matrix: report,
    };
    write_json_doc(&violations_path(config), &meta_for(config, "violations"), &doc)?;
    crate::store::ensure_parent_dir(&config.paths.reports_dir.join("x"))?;
    std::fs::write(
        config.paths.reports_dir.join("violations_summary.txt"),
        summary_table(&registry, &doc.matrix),
    )
    .map_err(|source| PipelineError::Input {
        path: config
            .paths
            .reports_dir
            .join("violations_summary.txt")
            .display()
            .to_string(),
        source,
    })?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestIndexEntry {
    pub test_id: String,
    pub structured: String,
    pub table: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TestgenSummary {
    pub test_cases: u64,
}

pub fn cmd_testgen(config: &PipelineConfig) -> Result<TestgenSummary, PipelineError> {
    require(&violations_path(config), "violation report", "analyze")?;
    let doc: AnalysisDoc = read_json_doc(&violations_path(config))?;
    let nodes = load_nodes(config)?;
    let chains = load_chains(config)?;

    let node_index: HashMap<u64, &ScaNode> = nodes.iter().map(|n| (n.node_id, n)).collect();
    let chain_index: HashMap<u64, &FunctionChain> =
        chains.iter().map(|c| (c.chain_id, c)).collect();

    let mut cases = Vec::new();
    for violation in &doc.matrix.violations {
        let chain = chain_index.get(&violation.chain_id).ok_or_else(|| {
            PipelineError::Internal(format!("violation names unknown chain {}", violation.chain_id))
        })?;
        cases.push(synthesize(violation, chain, &node_index)?);
    }
    cases.sort_by(|a, b| a.test_id.cmp(&b.test_id));

    std::fs::create_dir_all(&config.paths.tests_dir).map_err(|source| PipelineError::Input {
        path: config.paths.tests_dir.display().to_string(),
        source,
    })?;
    let mut index = Vec::new();
    for case in &cases {
        let structured_name = format!("{}.jsonl", case.test_id);
        let table_name = format!("{}.txt", case.test_id);
        std::fs::write(
            config.paths.tests_dir.join(&structured_name),
            render(case, RenderFormat::Structured) + "\n",
        )
        .map_err(|source| PipelineError::Input {
            path: structured_name.clone(),
            source,
        })?;
        std::fs::write(
            config.paths.tests_dir.join(&table_name),
            render(case, RenderFormat::TableText) + "\n",
        )
        .map_err(|source| PipelineError::Input {
            path: table_name.clone(),
            source,
        })?;
        index.push(TestIndexEntry {
            test_id: case.test_id.clone(),
            structured: structured_name,
            table: table_name,
        });
    }
    write_json_doc(
        &config.paths.tests_dir.join("index.json"),
        &meta_for(config, "test_index"),
        &index,
    )?;
    Ok(TestgenSummary {
        test_cases: cases.len() as u64,
    })
}

/// Reads one structured test case back; used by tooling and tests.
pub fn load_test_case(path: &Path) -> Result<crate::vulntester::TestCase, PipelineError> {
    let data = std::fs::read_to_string(path).map_err(|source| PipelineError::Input {
        path: path.display().to_string(),
        source,
    })?;
    parse_structured(&data)
        .map_err(|e| PipelineError::Internal(format!("{}: {e}", path.display())))
}

const SENTENCE_COUNT_NOTE: &str =
    "sentence counts cover clause body sentences only; headings and front matter are excluded";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCostEstimate {
    pub spec_id: String,
    pub node_count: u64,
    pub seconds_per_pair: f64,
    pub serial_years: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RougeMeans {
    pub rouge1_f1: f64,
    pub rouge2_f1: f64,
    pub rouge_l_f1: f64,
    pub pairs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub note: String,
    pub sentences: u64,
    pub sentences_per_spec: BTreeMap<String, u64>,
    pub completeness: CompletenessDistribution,
    pub pair_cost: Vec<PairCostEstimate>,
    pub accuracy: Option<FieldAccuracyReport>,
    pub rouge: Option<RougeMeans>,
}

fn stats_tables(report: &StatsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "completeness distribution ({} nodes)", report.completeness.total);
    let _ = writeln!(out, "fields | count | percent");
    for k in 0..=4usize {
        let _ = writeln!(
            out,
            "{}      | {:>5} | {:6.1}",
            k, report.completeness.counts[k], report.completeness.percentages[k]
        );
    }
    if let Some(acc) = &report.accuracy {
        let _ = writeln!(out);
        let _ = writeln!(out, "field accuracy vs gold ({} pairs, {})", acc.compared, acc.mode);
        let _ = writeln!(out, "start  | cond   | action | end");
        let _ = writeln!(
            out,
            "{:.3}  | {:.3}  | {:.3}  | {:.3}",
            acc.start, acc.condition, acc.action, acc.end
        );
    }
    out
}

pub fn cmd_stats(config: &PipelineConfig) -> Result<StatsReport, PipelineError> {
    let corpus = load_corpus(config)?;
    let nodes: Vec<ScaNode> = if config.paths.nodes.exists() {
        read_jsonl(&config.paths.nodes)?.1
    } else {
        Vec::new()
    };

    let mut sentences_per_spec: BTreeMap<String, u64> = BTreeMap::new();
    for record in &corpus {
        *sentences_per_spec.entry(record.spec_id.clone()).or_insert(0) += 1;
    }
    let mut nodes_per_spec: BTreeMap<String, u64> = BTreeMap::new();
    for node in &nodes {
        *nodes_per_spec.entry(node.spec_id.clone()).or_insert(0) += 1;
    }
    let pair_cost = nodes_per_spec
        .iter()
        .map(|(spec_id, &count)| PairCostEstimate {
            spec_id: spec_id.clone(),
            node_count: count,
            seconds_per_pair: config.chains.seconds_per_pair,
            serial_years: estimated_serial_years(count, config.chains.seconds_per_pair),
        })
        .collect();

    let (accuracy, rouge_means) = match &config.metrics.gold {
        Some(gold_path) => {
            let gold: Vec<ScaNode> = read_jsonl(Path::new(gold_path))?.1;
            let mode = match config.metrics.accuracy_mode.as_str() {
                "exact_canonical" => MatchMode::ExactCanonical,
                _ => MatchMode::Similarity(config.metrics.accuracy_threshold),
            };
            let accuracy = field_accuracy(&nodes, &gold, mode)?;
            let by_source: HashMap<(String, String, u64), &ScaNode> = nodes
                .iter()
                .map(|n| ((n.spec_id.clone(), n.clause_id.clone(), n.sentence_id), n))
                .collect();
            let mut sums = (0.0f64, 0.0f64, 0.0f64);
            let mut pairs = 0u64;
            for g in &gold {
                if let Some(e) =
                    by_source.get(&(g.spec_id.clone(), g.clause_id.clone(), g.sentence_id))
                {
                    let scores = rouge(&e.fields().join(" "), &g.fields().join(" "));
                    sums.0 += scores.rouge1.f1;
                    sums.1 += scores.rouge2.f1;
                    sums.2 += scores.rouge_l.f1;
                    pairs += 1;
                }
            }
            let means = (pairs > 0).then(|| RougeMeans {
                rouge1_f1: sums.0 / pairs as f64,
                rouge2_f1: sums.1 / pairs as f64,
                rouge_l_f1: sums.2 / pairs as f64,
                pairs,
            });
            (Some(accuracy), means)
        }
        None => (None, None),
    };

    let report = StatsReport {
        note: SENTENCE_COUNT_NOTE.to_string(),
        sentences: corpus.len() as u64,
        sentences_per_spec,
        completeness: completeness_distribution(&nodes),
        pair_cost,
        accuracy,
        rouge: rouge_means,
    };
    write_json_doc(
        &config.paths.reports_dir.join("stats.json"),
        &meta_for(config, "stats"),
        &report,
    )?;
    crate::store::ensure_parent_dir(&config.paths.reports_dir.join("x"))?;
    std::fs::write(
        config.paths.reports_dir.join("stats_tables.txt"),
        stats_tables(&report),
    )
    .map_err(|source| PipelineError::Input {
        path: "stats_tables.txt".to_string(),
        source,
    })?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllSummary {
    pub ingest: IngestSummary,
    pub extract: ExtractSummary,
    pub link: LinkSummary,
    pub analyze: AnalyzeSummary,
    pub testgen: TestgenSummary,
    pub stats: StatsReport,
}

pub fn cmd_all(config: &PipelineConfig) -> Result<AllSummary, PipelineError> {
    Ok(AllSummary {
        ingest: cmd_ingest(config)?,
        extract: cmd_extract(config)?,
        link: cmd_link(config)?,
        analyze: cmd_analyze(config)?,
        testgen: cmd_testgen(config)?,
        stats: cmd_stats(config)?,
    })
}
