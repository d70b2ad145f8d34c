use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rationale_cli::ingest::{ingest, stats_summary, write_dataset, IngestOptions, SourceFormat};
use rationale_cli::manifest::ExperimentManifest;
use rationale_cli::pipeline;
use rationale_cli::report::{read_table, OutputFormat};
use rationale_core::corpus::RationaleMode;

#[derive(Parser)]
#[command(
    name = "rationale",
    version,
    about = "Contextual impact and rationale learnability experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a source corpus into a canonical JSONL dataset.
    Ingest {
        /// Source format: jsonl, conll-chunk, conll-ner, multi-annotator, sentiment-tree.
        #[arg(long)]
        format: SourceFormat,
        /// Input file.
        path: PathBuf,
        /// Output JSONL file.
        #[arg(long)]
        out: PathBuf,
        /// Chunk or entity type marked as rationale (CoNLL formats).
        #[arg(long)]
        tag: Option<String>,
        /// Zero-based CoNLL tag column (default: last column).
        #[arg(long)]
        tag_column: Option<usize>,
        /// Rationale aggregation for multi-annotator input: union or intersection.
        #[arg(long, default_value = "union", value_parser = parse_mode)]
        aggregate: RationaleMode,
    },
    /// Run every cell of an experiment manifest and write the report tables.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// Report directory (overrides the manifest).
        #[arg(long, env = "RATIONALE_OUT")]
        out: Option<PathBuf>,
        /// Cells run concurrently (overrides the manifest).
        #[arg(long, env = "RATIONALE_WORKERS")]
        workers: Option<usize>,
        /// Run seeds (overrides the manifest); repeat for several.
        #[arg(long)]
        seed: Vec<u64>,
    },
    /// Print one table of a report directory.
    Report {
        /// Report directory.
        #[arg(long, env = "RATIONALE_OUT")]
        out: PathBuf,
        /// Table id, e.g. ci-overview, tc-ar-grid, delta-pred.
        #[arg(long)]
        table: String,
        /// csv or json.
        #[arg(long, default_value = "csv")]
        format: OutputFormat,
    },
}

fn parse_mode(s: &str) -> Result<RationaleMode, String> {
    match s {
        "union" => Ok(RationaleMode::Union),
        "intersection" => Ok(RationaleMode::Intersection),
        other => Err(format!(
            "unknown aggregation {other:?}; expected union or intersection"
        )),
    }
}

fn execute(command: Command) -> rationale_cli::Result<bool> {
    match command {
        Command::Ingest {
            format,
            path,
            out,
            tag,
            tag_column,
            aggregate,
        } => {
            let options = IngestOptions {
                tag,
                tag_column,
                aggregate,
                ..Default::default()
            };
            let outcome = ingest(format, &path, &options)?;
            write_dataset(&outcome.dataset, &out)?;
            println!("{}", stats_summary(&outcome.dataset)?);
            if !outcome.dropped.is_empty() {
                println!("dropped={}", outcome.dropped.len());
            }
            Ok(true)
        }
        Command::Run {
            manifest,
            out,
            workers,
            seed,
        } => {
            let mut m = ExperimentManifest::load(&manifest)?;
            if let Some(out) = out {
                m.output_dir = out;
            }
            if workers.is_some() {
                m.workers = workers;
            }
            if !seed.is_empty() {
                m.seeds = seed;
            }
            let summary = pipeline::run(&m)?;
            println!(
                "report={} manifest-sha256={} cells={} failed={}",
                summary.report_dir.display(),
                summary.manifest_hash,
                summary.cells,
                summary.failures.len()
            );
            for f in &summary.failures {
                let provider = if f.provider.is_empty() {
                    "*"
                } else {
                    &f.provider
                };
                println!(
                    "failed task={} provider={provider} seed={}: {}",
                    f.task, f.seed, f.message
                );
            }
            Ok(summary.succeeded())
        }
        Command::Report { out, table, format } => {
            print!("{}", read_table(&out, &table, format)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
