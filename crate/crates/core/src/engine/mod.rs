//! The active-learning loop: train, evaluate, select, label, repeat.

mod oracle;
mod task;

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionConfig;
use crate::classifier::{self, BinaryClassifier, ClassifierError, TrainConfig};
use crate::corpus::{Corpus, TagEmbeddings};
use crate::metrics::{self, MetricsError};
use crate::retrieval::{
    self, seafaring_select, small_exact_init, small_exact_select, RetrievalConfig,
    RetrievalError, SelectionReport, SmallPool, Strategy,
};
use crate::rng::{self, Stream};
use crate::search::SearchSource;

pub use oracle::{
    cosine, HumanOracle, LabelingSession, Oracle, OracleError, PendingItem, SessionStatus,
    SimilarityOracle, SubmitError, TagOracle,
};
pub use task::{build_task, pick_rare_tag, TaskKind, TaskOracle, TaskSpec, TaskSplit, N_REFERENCES};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("selection failed: {0}")]
    Selection(#[from] RetrievalError),
    #[error("oracle failed: {0}")]
    Oracle(#[from] OracleError),
    #[error("training failed: {0}")]
    Classifier(#[from] ClassifierError),
    #[error("evaluation failed: {0}")]
    Metrics(#[from] MetricsError),
    #[error("item `{0}` is already labeled")]
    AlreadyLabeled(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Ordered `(item id, label)` pairs without duplicates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(String, bool)>", into = "Vec<(String, bool)>")]
pub struct LabeledSet {
    entries: Vec<(String, bool)>,
    ids: HashSet<String>,
    n_pos: usize,
}

impl LabeledSet {
    pub fn push(&mut self, id: String, label: bool) -> Result<(), EngineError> {
        if !self.ids.insert(id.clone()) {
            return Err(EngineError::AlreadyLabeled(id));
        }
        self.n_pos += usize::from(label);
        self.entries.push((id, label));
        Ok(())
    }

    pub fn entries(&self) -> &[(String, bool)] {
        &self.entries
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(n_pos, n_neg)`.
    pub fn counts(&self) -> (usize, usize) {
        (self.n_pos, self.entries.len() - self.n_pos)
    }
}

impl TryFrom<Vec<(String, bool)>> for LabeledSet {
    type Error = String;

    fn try_from(entries: Vec<(String, bool)>) -> Result<Self, Self::Error> {
        let mut set = LabeledSet::default();
        for (id, y) in entries {
            set.push(id, y).map_err(|e| e.to_string())?;
        }
        Ok(set)
    }
}

impl From<LabeledSet> for Vec<(String, bool)> {
    fn from(set: LabeledSet) -> Self {
        set.entries
    }
}

/// One loop iteration. `auc` is measured before selection, so row `i` reflects
/// a model trained on `i + 1` labels; counts include the row's new label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub iter: usize,
    pub selected_id: String,
    #[serde(with = "label_01")]
    pub label: bool,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub neg_pos_ratio: f64,
    pub max_candidate_pos_prob: f64,
    pub n_model_evals: usize,
    pub n_queries: u64,
}

mod label_01 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

pub const RUN_CSV_HEADER: &str =
    "iter,selected_id,label,auc,n_pos,n_neg,neg_pos_ratio,max_candidate_pos_prob,n_model_evals,n_queries";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub config: serde_json::Value,
    pub seed: u64,
}

impl RunRecord {
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(RUN_CSV_HEADER.split(','))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, EngineError> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r
            .headers()
            .map_err(|e| EngineError::Checkpoint(e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        if header.join(",") != RUN_CSV_HEADER {
            return Err(EngineError::Checkpoint(format!("unexpected header `{}`", header.join(","))));
        }
        let rows = r
            .deserialize()
            .collect::<Result<Vec<RunRow>, _>>()
            .map_err(|e| EngineError::Checkpoint(e.to_string()))?;
        Ok(Self {
            rows,
            ..Default::default()
        })
    }

    pub fn save(&self, csv_path: &Path) -> Result<(), EngineError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        let sidecar = csv_path.with_extension("json");
        let snapshot = serde_json::json!({ "seed": self.seed, "config": self.config });
        std::fs::write(sidecar, serde_json::to_string_pretty(&snapshot).expect("json serializes") + "\n")?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self, EngineError> {
        Self::read_csv(std::fs::File::open(csv_path)?)
    }
}

/// Loop parameters. `train.seed` and `retrieval.seed` are the run seeds;
/// per-iteration streams are derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub acquisition: AcquisitionConfig,
    pub retrieval: RetrievalConfig,
    pub train: TrainConfig,
    pub budget: usize,
}

/// Everything the learner may see.
#[derive(Clone, Copy)]
pub struct Environment<'a> {
    /// Evaluator-side corpus, used for the initial pair and test features.
    pub corpus: &'a Corpus,
    pub embeddings: &'a TagEmbeddings,
    pub source: &'a dyn SearchSource,
}

/// Hooks into the loop. All methods default to no-ops.
pub trait RunObserver {
    fn on_start(&mut self, _state: &Checkpoint) {}
    fn on_evaluated(&mut self, _iter: usize, _auc: f64) {}
    /// Called after each completed iteration; `state.rows` ends with the new row.
    fn on_row(&mut self, _state: &Checkpoint) -> Result<(), EngineError> {
        Ok(())
    }
}

impl RunObserver for () {}

/// Resumable loop state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: LoopConfig,
    pub labeled: LabeledSet,
    pub rows: Vec<RunRow>,
    /// Features of labeled items that came from the search source.
    pub features: HashMap<String, Vec<f64>>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        let tmp = path.with_extension("tmp");
        let body = serde_json::to_vec(self).map_err(|e| EngineError::Checkpoint(e.to_string()))?;
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let body = std::fs::read(path)?;
        serde_json::from_slice(&body).map_err(|e| EngineError::Checkpoint(e.to_string()))
    }
}

fn validate(env: &Environment<'_>, split: &TaskSplit, cfg: &LoopConfig) -> Result<(), EngineError> {
    if cfg.budget == 0 {
        return Err(EngineError::InvalidTask("budget must be >= 1".into()));
    }
    cfg.train.validate()?;
    cfg.retrieval.validate()?;
    let (n_pos, n_neg) = split.initial.counts();
    if n_pos != 1 || n_neg != 1 {
        return Err(EngineError::InvalidTask("initial labeled set must hold one positive and one negative".into()));
    }
    if split.test_ids.len() != split.test_labels.len() {
        return Err(EngineError::InvalidTask("test ids and labels differ in length".into()));
    }
    if !split.test_labels.iter().any(|&y| y) || split.test_labels.iter().all(|&y| y) {
        return Err(EngineError::InvalidTask("test set needs both classes".into()));
    }
    let test: HashSet<&str> = split.test_ids.iter().map(String::as_str).collect();
    for (id, _) in split.initial.entries() {
        if test.contains(id.as_str()) {
            return Err(EngineError::InvalidTask(format!("initial item `{id}` is in the test set")));
        }
        if env.corpus.get(id).is_none() {
            return Err(EngineError::InvalidTask(format!("initial item `{id}` is not in the corpus")));
        }
    }
    Ok(())
}

/// Run the loop for `cfg.budget` iterations from the task's initial pair.
pub fn run(
    env: Environment<'_>,
    oracle: &dyn Oracle,
    split: &TaskSplit,
    cfg: &LoopConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunRecord, EngineError> {
    validate(&env, split, cfg)?;
    let start = Checkpoint {
        config: *cfg,
        labeled: split.initial.clone(),
        rows: Vec::new(),
        features: HashMap::new(),
    };
    drive(env, oracle, split, start, observer)
}

/// Continue a checkpointed run. The result equals an uninterrupted run.
pub fn resume(
    env: Environment<'_>,
    oracle: &dyn Oracle,
    split: &TaskSplit,
    checkpoint: Checkpoint,
    observer: &mut dyn RunObserver,
) -> Result<RunRecord, EngineError> {
    validate(&env, split, &checkpoint.config)?;
    if checkpoint.labeled.len() != split.initial.len() + checkpoint.rows.len()
        || checkpoint.labeled.entries()[..2] != split.initial.entries()[..]
    {
        return Err(EngineError::Checkpoint("checkpoint does not extend this task".into()));
    }
    drive(env, oracle, split, checkpoint, observer)
}

fn drive(
    env: Environment<'_>,
    oracle: &dyn Oracle,
    split: &TaskSplit,
    mut state: Checkpoint,
    observer: &mut dyn RunObserver,
) -> Result<RunRecord, EngineError> {
    let cfg = state.config;
    let test_items: Vec<_> = split
        .test_ids
        .iter()
        .map(|id| {
            env.corpus
                .get(id)
                .ok_or_else(|| EngineError::InvalidTask(format!("test item `{id}` is not in the corpus")))
        })
        .collect::<Result<_, _>>()?;

    let mut features: HashMap<String, Vec<f64>> = HashMap::new();
    for (id, _) in state.labeled.entries() {
        let f = state
            .features
            .get(id)
            .cloned()
            .or_else(|| env.corpus.get(id).map(|it| it.features.clone()))
            .ok_or_else(|| EngineError::Checkpoint(format!("no features for labeled item `{id}`")))?;
        features.insert(id.clone(), f);
    }
    let test: HashSet<String> = split.test_ids.iter().cloned().collect();
    let mut exclude = test.clone();
    exclude.extend(state.labeled.entries().iter().map(|(id, _)| id.clone()));

    let pool = match cfg.retrieval.strategy {
        Strategy::SmallExact => {
            let pool = small_exact_init(
                env.source,
                cfg.retrieval.small_pool_size,
                cfg.retrieval.page_size,
                cfg.retrieval.seed,
                &test,
            )?;
            if pool.shortfall > 0 {
                info!("small pool is {} items short of {}", pool.shortfall, cfg.retrieval.small_pool_size);
            }
            Some(pool)
        }
        _ => None,
    };

    observer.on_start(&state);
    for iter in state.rows.len() + 1..=cfg.budget {
        let train_cfg = TrainConfig {
            seed: rng::derive(cfg.train.seed, Stream::Train, iter as u64),
            ..cfg.train
        };
        let model = classifier::train(&state.labeled, &features, &train_cfg)?;
        let auc = evaluate(&model, &test_items, &split.test_labels)?;
        observer.on_evaluated(iter, auc);

        let select_seed = rng::derive(cfg.retrieval.seed, Stream::Select, iter as u64);
        let before = env.source.meter().used();
        let report = select(env, &model, &cfg, pool.as_ref(), select_seed, &exclude)?;
        let n_queries = env.source.meter().used() - before;

        let chosen = report.chosen;
        if exclude.contains(&chosen.id) {
            return Err(EngineError::AlreadyLabeled(chosen.id));
        }
        let label = oracle.label(&chosen)?;
        state.labeled.push(chosen.id.clone(), label)?;
        exclude.insert(chosen.id.clone());
        if env.corpus.get(&chosen.id).map(|it| &it.features) != Some(&chosen.features) {
            state.features.insert(chosen.id.clone(), chosen.features.clone());
        }
        features.insert(chosen.id.clone(), chosen.features);

        let (n_pos, n_neg) = state.labeled.counts();
        let row = RunRow {
            iter,
            selected_id: chosen.id,
            label,
            auc,
            n_pos,
            n_neg,
            neg_pos_ratio: n_neg as f64 / n_pos.max(1) as f64,
            max_candidate_pos_prob: report.max_pos_prob_seen,
            n_model_evals: report.n_model_evals,
            n_queries,
        };
        debug!(
            "iter {iter}: {} label={} auc={auc:.4} evals={} queries={n_queries}",
            row.selected_id, label, row.n_model_evals
        );
        state.rows.push(row);
        observer.on_row(&state)?;
    }

    Ok(RunRecord {
        rows: state.rows,
        config: serde_json::to_value(cfg).expect("config serializes"),
        seed: cfg.retrieval.seed,
    })
}

fn evaluate(
    model: &BinaryClassifier,
    items: &[&crate::corpus::Item],
    labels: &[bool],
) -> Result<f64, EngineError> {
    let scored = items
        .iter()
        .zip(labels)
        .map(|(it, &y)| model.logit(&it.features).map(|z| (z, y)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(metrics::roc_auc(&scored)?)
}

fn select(
    env: Environment<'_>,
    model: &BinaryClassifier,
    cfg: &LoopConfig,
    pool: Option<&SmallPool>,
    seed: u64,
    exclude: &HashSet<String>,
) -> Result<SelectionReport, RetrievalError> {
    match cfg.retrieval.strategy {
        Strategy::Seafaring => {
            let rcfg = RetrievalConfig { seed, ..cfg.retrieval };
            seafaring_select(env.source, env.embeddings, model, &cfg.acquisition, &rcfg, exclude)
        }
        Strategy::SmallExact => small_exact_select(
            pool.expect("pool is built for small_exact"),
            model,
            &cfg.acquisition,
            exclude,
        ),
        Strategy::Random => retrieval::random_select(
            env.source,
            model,
            &cfg.acquisition,
            cfg.retrieval.page_size,
            seed,
            exclude,
        ),
    }
}

#[cfg(test)]
mod tests;
