use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use seafarer::config::ExperimentConfig;
use seafarer::corpus::{self, SynthParams};
use seafarer::experiment::{self, Overrides};
use seafarer::metrics;
use seafarer::search::{serve_mock, MockOptions};
use seafarer::service::LabelingService;
use seafarer::{RunRecord, Strategy};

#[derive(Parser)]
#[command(name = "seafarer", version, about = "Active learning with a tag-search bandit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run only this strategy.
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Search server base URL (switches the source to remote).
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured strategy and seed, writing CSVs and a summary.
    Run(RunArgs),
    /// Run the first strategy/seed with a human oracle behind the labeling API.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
    /// Serve a corpus over the search protocol.
    MockSearch {
        /// Corpus JSONL file.
        #[arg(long, conflicts_with = "config")]
        corpus: Option<PathBuf>,
        /// Take the corpus from an experiment config instead.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8090")]
        bind: String,
        /// Artificial latency per response, in milliseconds.
        #[arg(long)]
        latency_ms: Option<u64>,
    },
    /// Write a synthetic corpus (`corpus.jsonl`) and tag embeddings (`embeddings.txt`).
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        n_items: usize,
        #[arg(long, default_value_t = 100)]
        n_tags: usize,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        cluster_spread: f64,
    },
    /// Summarize run CSVs (files or directories) grouped by strategy.
    Summarize {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Summary CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type BoxError = Box<dyn std::error::Error>;

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, BoxError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    Overrides {
        strategy: args.strategy,
        seed: args.seed,
        output_dir: args.out.clone(),
        endpoint: args.endpoint.clone(),
    }
    .apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<(), BoxError> {
    let cfg = load_config(&args)?;
    let outcome = experiment::run_experiment(&cfg)?;
    for (strategy, summary) in &outcome.summaries {
        println!("{strategy}: final mean AUC {:.4}", summary.final_auc_mean);
    }
    println!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}

fn cmd_serve(args: RunArgs, bind: &str) -> Result<(), BoxError> {
    let cfg = load_config(&args)?;
    let mut service = LabelingService::start(&cfg, bind)?;
    println!("labeling service at {}", service.url());
    let record = service.wait()?;
    println!("run complete with {} labels", record.rows.len());
    Ok(())
}

fn cmd_mock_search(
    corpus_path: Option<PathBuf>,
    config: Option<PathBuf>,
    bind: &str,
    latency_ms: Option<u64>,
) -> Result<(), BoxError> {
    let corpus = match (corpus_path, config) {
        (Some(p), _) => Arc::new(corpus::load_corpus(p)?),
        (None, Some(c)) => ExperimentConfig::load(&c)?.materialize()?.0,
        (None, None) => return Err("one of --corpus or --config is required".into()),
    };
    let opts = MockOptions {
        latency: latency_ms.map(std::time::Duration::from_millis),
        workers: 8,
    };
    let server = serve_mock(corpus, bind, opts)?;
    println!("mock search at {}", server.url());
    loop {
        std::thread::park();
    }
}

fn cmd_synth(out: &Path, params: SynthParams) -> Result<(), BoxError> {
    let (corpus, embeddings) = corpus::synth_corpus(&params)?;
    std::fs::create_dir_all(out)?;
    corpus.save(out.join("corpus.jsonl"))?;
    embeddings.save(out.join("embeddings.txt"))?;
    println!("wrote {} items, {} tags to {}", corpus.len(), embeddings.len(), out.display());
    Ok(())
}

fn collect_csvs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, BoxError> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension().is_some_and(|e| e == "csv")
                        && p.file_name().is_some_and(|n| n != experiment::SUMMARY_FILE)
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

fn cmd_summarize(inputs: &[PathBuf], out: Option<&Path>) -> Result<(), BoxError> {
    let mut groups: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    for file in collect_csvs(inputs)? {
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let name = stem.rsplit_once("_seed").map_or(stem, |(s, _)| s).to_string();
        let record = RunRecord::load(&file).map_err(|e| format!("{}: {e}", file.display()))?;
        groups.entry(name).or_default().push(record);
    }
    if groups.is_empty() {
        return Err("no run CSVs found".into());
    }
    let mut blocks = Vec::new();
    for (name, records) in groups {
        let summary = metrics::summarize(&records)?;
        eprintln!(
            "{name}: {} runs, final mean AUC {:.4}, label efficiency {:.4}",
            records.len(),
            summary.final_auc_mean,
            summary.label_efficiency
        );
        blocks.push((name, summary));
    }
    match out {
        Some(path) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            metrics::write_summary_blocks(&mut f, &blocks)?;
            std::io::Write::flush(&mut f)?;
        }
        None => metrics::write_summary_blocks(&mut std::io::stdout().lock(), &blocks)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEAFARER_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Serve { run, bind } => cmd_serve(run, &bind),
        Command::MockSearch {
            corpus,
            config,
            bind,
            latency_ms,
        } => cmd_mock_search(corpus, config, &bind, latency_ms),
        Command::SynthCorpus {
            out,
            n_items,
            n_tags,
            d,
            k,
            seed,
            cluster_spread,
        } => cmd_synth(
            &out,
            SynthParams {
                n_items,
                n_tags,
                d,
                k,
                seed,
                cluster_spread,
            },
        ),
        Command::Summarize { inputs, out } => cmd_summarize(&inputs, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
