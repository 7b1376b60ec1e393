//! Selection strategies: the LinUCB tag bandit ("seafaring"), exhaustive
//! search over a small fixed pool, and uniform random selection.

mod linucb;

use std::collections::{BTreeMap, HashSet};

use nalgebra::DVector;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{better, AcquisitionConfig, AcquisitionError};
use crate::classifier::BinaryClassifier;
use crate::corpus::{Item, TagEmbeddings};
use crate::rng::{self, Stream};
use crate::search::{SearchError, SearchSource};

pub use linucb::BanditState;

/// Attempts before random selection over a remote source gives up.
pub const RANDOM_RETRIES: usize = 50;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("no selectable item was retrieved in {rounds} rounds")]
    NothingRetrieved { rounds: usize },
    #[error("bandit design matrix is not positive definite")]
    LinearAlgebra,
    #[error("the pool has no selectable item left")]
    PoolExhausted,
    #[error("random selection found nothing in {0} attempts")]
    RetriesExhausted(usize),
    #[error("the source is empty")]
    EmptySource,
    #[error("invalid retrieval configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Seafaring,
    SmallExact,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Seafaring, Strategy::SmallExact, Strategy::Random];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Seafaring => "seafaring",
            Strategy::SmallExact => "small_exact",
            Strategy::Random => "random",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s || st.name().replace('_', "-") == s)
            .ok_or_else(|| format!("unknown strategy `{s}` (expected seafaring, small_exact or random)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardAgg {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub strategy: Strategy,
    pub linucb_iters: usize,
    pub page_size: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub reward_agg: RewardAgg,
    pub small_pool_size: usize,
    pub seed: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Seafaring,
            linucb_iters: 1000,
            page_size: 10,
            alpha: 1.0,
            lambda: 1.0,
            reward_agg: RewardAgg::Mean,
            small_pool_size: 1000,
            seed: 0,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.linucb_iters == 0 || self.page_size == 0 || self.small_pool_size == 0 {
            return Err(RetrievalError::InvalidConfig(
                "linucb_iters, page_size and small_pool_size must be >= 1".into(),
            ));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(RetrievalError::InvalidConfig("lambda must be > 0".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(RetrievalError::InvalidConfig("alpha must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub chosen: Item,
    pub chosen_score: f64,
    pub n_model_evals: usize,
    pub n_queries: usize,
    /// Highest positive-class probability among evaluated items.
    pub max_pos_prob_seen: f64,
    pub per_tag_pulls: BTreeMap<String, usize>,
}

struct Best {
    item: Item,
    score: f64,
}

fn consider(best: &mut Option<Best>, item: &Item, score: f64) {
    if better(score, &item.id, best.as_ref().map(|b| (b.score, b.item.id.as_str()))) {
        *best = Some(Best {
            item: item.clone(),
            score,
        });
    }
}

/// Run one bandit search for the highest-scoring unlabeled item.
///
/// Each round pulls the max-UCB tag, queries one page, scores items not seen
/// earlier in this call, and feeds back the aggregated, rescaled score as the
/// reward. Bandit state lives only for the duration of the call.
pub fn seafaring_select(
    source: &dyn SearchSource,
    embeddings: &TagEmbeddings,
    model: &BinaryClassifier,
    acq: &AcquisitionConfig,
    cfg: &RetrievalConfig,
    exclude: &HashSet<String>,
) -> Result<SelectionReport, RetrievalError> {
    cfg.validate()?;
    let mut vocab = source.vocabulary()?;
    vocab.sort();
    vocab.dedup();
    if vocab.is_empty() {
        return Err(RetrievalError::EmptySource);
    }
    let contexts: Vec<DVector<f64>> = vocab
        .iter()
        .map(|t| DVector::from_column_slice(&embeddings.lookup(t)))
        .collect();
    let mut bandit = BanditState::new(embeddings.dim(), cfg.alpha, cfg.lambda)?;

    let mut seen: HashSet<String> = HashSet::new();
    let mut best: Option<Best> = None;
    let mut pulls: BTreeMap<String, usize> = BTreeMap::new();
    let mut n_evals = 0;
    let mut n_queries = 0;
    let mut max_p1: f64 = 0.0;

    for round in 0..cfg.linucb_iters {
        let arm = bandit.select(&contexts)?;
        let tag = &vocab[arm];
        let token = rng::derive(cfg.seed, Stream::Select, round as u64);
        let page = source.search(tag, cfg.page_size, token)?;
        n_queries += 1;
        *pulls.entry(tag.clone()).or_default() += 1;

        let mut n_new = 0usize;
        let mut agg = 0.0f64;
        for item in &page {
            if exclude.contains(&item.id) || !seen.insert(item.id.clone()) {
                continue;
            }
            let proba = model.predict_proba(&item.features).map_err(AcquisitionError::from)?;
            let score = acq.score(proba)?;
            n_evals += 1;
            n_new += 1;
            max_p1 = max_p1.max(proba.1);
            consider(&mut best, item, score);
            agg = match cfg.reward_agg {
                RewardAgg::Mean => agg + score,
                RewardAgg::Max if n_new == 1 => score,
                RewardAgg::Max => agg.max(score),
            };
        }
        let reward = match cfg.reward_agg {
            _ if n_new == 0 => 0.0,
            RewardAgg::Mean => acq.to_reward(agg / n_new as f64),
            RewardAgg::Max => acq.to_reward(agg),
        };
        bandit.update(&contexts[arm], reward);
    }

    let best = best.ok_or(RetrievalError::NothingRetrieved {
        rounds: cfg.linucb_iters,
    })?;
    Ok(SelectionReport {
        chosen: best.item,
        chosen_score: best.score,
        n_model_evals: n_evals,
        n_queries,
        max_pos_prob_seen: max_p1,
        per_tag_pulls: pulls,
    })
}

/// A fixed sub-pool sampled once per experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallPool {
    pub items: Vec<Item>,
    /// How many items short of the requested size the pool is.
    pub shortfall: usize,
}

/// Sample `size` distinct items. `exclude` removes ids (e.g. a held-out test set)
/// from consideration. Over a remote source the pool is gathered page by page
/// from uniformly drawn tags.
pub fn small_exact_init(
    source: &dyn SearchSource,
    size: usize,
    page_size: usize,
    seed: u64,
    exclude: &HashSet<String>,
) -> Result<SmallPool, RetrievalError> {
    let mut rng = rng::rng_for(seed, Stream::SmallPool, 0);
    if let Some(corpus) = source.as_corpus() {
        let eligible: Vec<&Item> = corpus
            .items()
            .iter()
            .filter(|it| !exclude.contains(&it.id))
            .collect();
        if eligible.is_empty() {
            return Err(RetrievalError::EmptySource);
        }
        let take = size.min(eligible.len());
        let items = rand::seq::index::sample(&mut rng, eligible.len(), take)
            .into_iter()
            .map(|i| eligible[i].clone())
            .collect();
        return Ok(SmallPool {
            items,
            shortfall: size - take,
        });
    }

    let vocab = source.vocabulary()?;
    if vocab.is_empty() {
        return Err(RetrievalError::EmptySource);
    }
    let page = page_size.max(1);
    let max_queries = 10 * size.div_ceil(page);
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(size);
    for q in 0..max_queries {
        if items.len() >= size {
            break;
        }
        let tag = vocab.choose(&mut rng).expect("vocabulary is non-empty");
        for it in source.search(tag, page, rng::derive(seed, Stream::SmallPool, q as u64 + 1))? {
            if items.len() < size && !exclude.contains(&it.id) && seen.insert(it.id.clone()) {
                items.push(it);
            }
        }
    }
    if items.is_empty() {
        return Err(RetrievalError::EmptySource);
    }
    Ok(SmallPool {
        shortfall: size - items.len(),
        items,
    })
}

/// Exhaustive argmax over the non-excluded pool items.
pub fn small_exact_select(
    pool: &SmallPool,
    model: &BinaryClassifier,
    acq: &AcquisitionConfig,
    exclude: &HashSet<String>,
) -> Result<SelectionReport, RetrievalError> {
    let mut best = None;
    let mut n_evals = 0;
    let mut max_p1: f64 = 0.0;
    for item in pool.items.iter().filter(|it| !exclude.contains(&it.id)) {
        let proba = model.predict_proba(&item.features).map_err(AcquisitionError::from)?;
        let score = acq.score(proba)?;
        n_evals += 1;
        max_p1 = max_p1.max(proba.1);
        consider(&mut best, item, score);
    }
    let best = best.ok_or(RetrievalError::PoolExhausted)?;
    Ok(SelectionReport {
        chosen: best.item,
        chosen_score: best.score,
        n_model_evals: n_evals,
        n_queries: 0,
        max_pos_prob_seen: max_p1,
        per_tag_pulls: BTreeMap::new(),
    })
}

/// Uniform pick from the pool. The chosen item is scored once for reporting.
pub fn random_select(
    source: &dyn SearchSource,
    model: &BinaryClassifier,
    acq: &AcquisitionConfig,
    page_size: usize,
    seed: u64,
    exclude: &HashSet<String>,
) -> Result<SelectionReport, RetrievalError> {
    let mut rng = rng::rng_for(seed, Stream::Select, u64::MAX);
    let mut n_queries = 0;
    let mut pulls = BTreeMap::new();
    let chosen = if let Some(corpus) = source.as_corpus() {
        let eligible: Vec<&Item> = corpus
            .items()
            .iter()
            .filter(|it| !exclude.contains(&it.id))
            .collect();
        (*eligible.choose(&mut rng).ok_or(RetrievalError::PoolExhausted)?).clone()
    } else {
        let mut vocab = source.vocabulary()?;
        if vocab.is_empty() {
            return Err(RetrievalError::EmptySource);
        }
        vocab.sort();
        let mut found = None;
        for attempt in 0..RANDOM_RETRIES {
            let tag = &vocab[rng.random_range(0..vocab.len())];
            let mut page = source.search(tag, page_size.max(1), rng::derive(seed, Stream::Select, attempt as u64))?;
            n_queries += 1;
            *pulls.entry(tag.clone()).or_default() += 1;
            page.retain(|it| !exclude.contains(&it.id));
            page.shuffle(&mut rng);
            if let Some(it) = page.into_iter().next() {
                found = Some(it);
                break;
            }
        }
        found.ok_or(RetrievalError::RetriesExhausted(RANDOM_RETRIES))?
    };
    let proba = model.predict_proba(&chosen.features).map_err(AcquisitionError::from)?;
    Ok(SelectionReport {
        chosen_score: acq.score(proba)?,
        chosen,
        n_model_evals: 1,
        n_queries,
        max_pos_prob_seen: proba.1,
        per_tag_pulls: pulls,
    })
}
