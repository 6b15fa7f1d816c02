use clap::{Parser, Subcommand};
use scachain::config::PipelineConfig;
use scachain::pipeline::{
    cmd_all, cmd_analyze, cmd_extract, cmd_ingest, cmd_link, cmd_stats, cmd_testgen,
    PipelineError,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "scachain",
    version,
    about = "Specification text -> SCA nodes -> function chains -> security sweep -> test cases"
)]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "scachain.toml")]
    config: PathBuf,

    /// Worker cap for all parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Override extractor.backend ("pattern" or "service").
    #[arg(long, global = true)]
    extractor_backend: Option<String>,

    /// Override chains.mode (exhaustive, clause_local, reference_guided).
    #[arg(long, global = true)]
    chains_mode: Option<String>,

    /// Override chains.semantic_threshold.
    #[arg(long, global = true)]
    semantic_threshold: Option<f64>,

    /// Override oracle.judge ("rules" or "service").
    #[arg(long, global = true)]
    oracle_judge: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment the configured specification files into the corpus store.
    Ingest,
    /// Extract SCA nodes from the corpus into the node store.
    Extract,
    /// Link nodes into edges and assemble function chains.
    Link,
    /// Sweep every chain node against the security-property matrix.
    Analyze,
    /// Synthesize a test case for every recorded violation.
    Testgen,
    /// Emit completeness, pair-cost, and accuracy statistics.
    Stats,
    /// Run the five stages plus stats in sequence.
    All,
}

fn apply_overrides(config: &mut PipelineConfig, cli: &Cli) -> Result<(), String> {
    if let Some(backend) = &cli.extractor_backend {
        config.extractor.backend = backend.clone();
    }
    if let Some(mode) = &cli.chains_mode {
        config.chains.mode = serde_json::from_value(serde_json::Value::String(mode.clone()))
            .map_err(|_| format!("--chains-mode: unknown mode {mode:?}"))?;
    }
    if let Some(threshold) = cli.semantic_threshold {
        config.chains.semantic_threshold = threshold;
    }
    if let Some(judge) = &cli.oracle_judge {
        config.oracle.judge = judge.clone();
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let mut config = PipelineConfig::load(&cli.config)?;
    apply_overrides(&mut config, cli).map_err(|message| {
        PipelineError::Config(scachain::config::ConfigError::Invalid {
            key: "cli override".to_string(),
            message,
        })
    })?;
    config.validate()?;

    match cli.command {
        Command::Ingest => {
            let s = cmd_ingest(&config)?;
            println!(
                "ingest: {} spec(s), {} clauses, {} sentences ({} warnings, {} preamble lines skipped)",
                s.specs, s.clauses, s.sentences, s.warnings, s.skipped_preamble_lines
            );
        }
        Command::Extract => {
            let s = cmd_extract(&config)?;
            println!(
                "extract: {} sentences -> {} nodes ({} skipped)",
                s.sentences, s.nodes, s.skipped
            );
        }
        Command::Link => {
            let s = cmd_link(&config)?.stats;
            println!(
                "link [{}]: {} candidate pairs, edges {:?}, {} chain(s), largest {}",
                s.mode, s.pair_count, s.edges_by_kind, s.chain_count, s.largest_chain
            );
        }
        Command::Analyze => {
            let s = cmd_analyze(&config)?;
            println!(
                "analyze: {} checks executed, {} unchecked, {} violation(s)",
                s.checks_executed, s.unchecked, s.violations
            );
            if s.unchecked > 0 {
                eprintln!("warning: {} check(s) could not run (backend unavailable)", s.unchecked);
            }
        }
        Command::Testgen => {
            let s = cmd_testgen(&config)?;
            println!("testgen: {} test case(s)", s.test_cases);
        }
        Command::Stats => {
            let s = cmd_stats(&config)?;
            println!(
                "stats: {} sentences, {} nodes; note: {}",
                s.sentences, s.completeness.total, s.note
            );
            for estimate in &s.pair_cost {
                println!(
                    "  {}: {} nodes -> {:.2} serial years at {:.2} s/pair exhaustive",
                    estimate.spec_id,
                    estimate.node_count,
                    estimate.serial_years,
                    estimate.seconds_per_pair
                );
            }
        }
        Command::All => {
            let s = cmd_all(&config)?;
            println!(
                "all: {} sentences -> {} nodes -> {} chain(s) -> {} violation(s) -> {} test case(s)",
                s.ingest.sentences,
                s.extract.nodes,
                s.link.stats.chain_count,
                s.analyze.violations,
                s.testgen.test_cases
            );
            if s.analyze.unchecked > 0 {
                eprintln!(
                    "warning: {} check(s) could not run (backend unavailable)",
                    s.analyze.unchecked
                );
            }
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // Ignore the error if a pool already exists (tests, repeated init).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }

    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
