//! Multi-seed, multi-strategy experiment runs with CSV artifacts.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use log::info;

use crate::config::{ConfigError, ExperimentConfig, OracleMode, SourceConfig};
use crate::corpus::{Corpus, TagEmbeddings};
use crate::engine::{self, EngineError, Environment, LoopConfig, RunRecord};
use crate::metrics::{self, MetricsError, Summary};
use crate::retrieval::{RetrievalConfig, Strategy};
use crate::search::{CorpusSearch, RemoteSearch, SearchSource};

pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{strategy} seed {seed}: {source}")]
    Run {
        strategy: Strategy,
        seed: u64,
        source: EngineError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("the human oracle needs the labeling service (`serve`)")]
    HumanOracle,
}

/// Restrict a config to one strategy and/or one seed.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub strategy: Option<Strategy>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub endpoint: Option<String>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.strategy {
            cfg.strategies = vec![s];
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.output_dir {
            cfg.output_dir = out.clone();
        }
        if let Some(endpoint) = &self.endpoint {
            cfg.source = match &cfg.source {
                SourceConfig::Remote { timeout_ms, query_cap, .. } => SourceConfig::Remote {
                    endpoint: endpoint.clone(),
                    timeout_ms: *timeout_ms,
                    query_cap: *query_cap,
                },
                SourceConfig::InMemory => SourceConfig::Remote {
                    endpoint: endpoint.clone(),
                    timeout_ms: 10_000,
                    query_cap: None,
                },
            };
        }
    }
}

/// Loop parameters of one `(strategy, seed)` run.
pub fn loop_config(cfg: &ExperimentConfig, strategy: Strategy, seed: u64) -> LoopConfig {
    LoopConfig {
        acquisition: cfg.acquisition,
        retrieval: RetrievalConfig {
            strategy,
            seed,
            ..cfg.retrieval
        },
        train: crate::classifier::TrainConfig { seed, ..cfg.train },
        budget: cfg.budget,
    }
}

/// A fresh search source for one run.
pub fn make_source(cfg: &ExperimentConfig, corpus: &Arc<Corpus>) -> Box<dyn SearchSource> {
    let cap = cfg.query_cap();
    match &cfg.source {
        SourceConfig::InMemory => Box::new(CorpusSearch::with_cap(corpus.clone(), cap)),
        SourceConfig::Remote { endpoint, timeout_ms, .. } => Box::new(RemoteSearch::new(
            endpoint.clone(),
            std::time::Duration::from_millis(*timeout_ms),
            cap,
        )),
    }
}

/// One simulated-oracle run.
pub fn run_one(
    cfg: &ExperimentConfig,
    corpus: &Arc<Corpus>,
    embeddings: &TagEmbeddings,
    strategy: Strategy,
    seed: u64,
) -> Result<RunRecord, EngineError> {
    let (oracle, split) = engine::build_task(corpus, &cfg.task, seed)?;
    let source = make_source(cfg, corpus);
    let env = Environment {
        corpus,
        embeddings,
        source: source.as_ref(),
    };
    engine::run(env, &oracle, &split, &loop_config(cfg, strategy, seed), &mut ())
}

pub fn run_csv_path(dir: &Path, strategy: Strategy, seed: u64) -> PathBuf {
    dir.join(format!("{strategy}_seed{seed}.csv"))
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    /// Records per strategy, in config order, each in seed order.
    pub records: Vec<(Strategy, Vec<RunRecord>)>,
    pub summaries: Vec<(Strategy, Summary)>,
}

/// Execute every `(strategy, seed)` run in parallel and write the artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    if cfg.oracle == OracleMode::Human {
        return Err(ExperimentError::HumanOracle);
    }
    let (corpus, embeddings) = cfg.materialize()?;
    std::fs::create_dir_all(&cfg.output_dir)?;

    let jobs: Vec<(Strategy, u64)> = cfg
        .strategies
        .iter()
        .flat_map(|&s| cfg.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let results: Mutex<Vec<Option<Result<RunRecord, EngineError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(jobs.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(strategy, seed)) = jobs.get(i) else { break };
                info!("starting {strategy} seed {seed}");
                let out = run_one(cfg, &corpus, &embeddings, strategy, seed);
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(out);
            });
        }
    });

    let mut results = results.into_inner().unwrap_or_else(|e| e.into_inner()).into_iter();
    let mut records = Vec::new();
    for &strategy in &cfg.strategies {
        let mut runs = Vec::new();
        for &seed in &cfg.seeds {
            let record = results
                .next()
                .flatten()
                .expect("every job ran")
                .map_err(|source| ExperimentError::Run { strategy, seed, source })?;
            record
                .save(&run_csv_path(&cfg.output_dir, strategy, seed))
                .map_err(|source| ExperimentError::Run { strategy, seed, source })?;
            runs.push(record);
        }
        records.push((strategy, runs));
    }

    let summaries = records
        .iter()
        .map(|(s, runs)| Ok((*s, metrics::summarize(runs)?)))
        .collect::<Result<Vec<_>, MetricsError>>()?;
    let named: Vec<(String, Summary)> = summaries.iter().map(|(s, sum)| (s.to_string(), sum.clone())).collect();
    let mut f = std::io::BufWriter::new(std::fs::File::create(cfg.output_dir.join(SUMMARY_FILE))?);
    metrics::write_summary_blocks(&mut f, &named)?;
    std::io::Write::flush(&mut f)?;
    std::fs::write(cfg.output_dir.join("config.json"), cfg.to_json() + "\n")?;

    Ok(ExperimentOutcome { records, summaries })
}
