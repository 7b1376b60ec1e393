//! The tag-search boundary.
//!
//! [`SearchSource`] is what retrieval strategies talk to. [`CorpusSearch`]
//! answers queries from an in-memory [`Corpus`]; [`RemoteSearch`] speaks the
//! JSON-over-HTTP protocol served by [`MockServer`] (or any compatible server).

mod mock;
mod remote;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Item};
use crate::rng;

pub use mock::{serve_mock, MockOptions, MockServer};
pub use remote::RemoteSearch;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("request timed out")]
    Timeout,
    #[error("server returned HTTP {status}")]
    Status { status: u16 },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("query budget of {cap} exhausted")]
    BudgetExceeded { cap: u64 },
}

impl SearchError {
    /// Whether repeating the same request could succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            SearchError::Timeout | SearchError::Transport(_) => true,
            SearchError::Status { status } => *status >= 500 || *status == 429,
            SearchError::Malformed(_) | SearchError::BudgetExceeded { .. } => false,
        }
    }
}

/// Counts search queries against an optional cap. Shared across threads.
#[derive(Debug, Default)]
pub struct SearchBudgetMeter {
    used: AtomicU64,
    cap: Option<u64>,
}

impl SearchBudgetMeter {
    pub fn new(cap: Option<u64>) -> Self {
        Self {
            used: AtomicU64::new(0),
            cap,
        }
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn cap(&self) -> Option<u64> {
        self.cap
    }

    /// Reserve one query. Fails without counting once the cap is reached.
    pub fn try_acquire(&self) -> Result<(), SearchError> {
        match self.cap {
            None => {
                self.used.fetch_add(1, Ordering::SeqCst);
                Ok(())
            }
            Some(cap) => self
                .used
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |u| (u < cap).then_some(u + 1))
                .map(|_| ())
                .map_err(|_| SearchError::BudgetExceeded { cap }),
        }
    }
}

/// A tag-queryable item database.
pub trait SearchSource: Send + Sync {
    /// At most `limit` items carrying `tag`. Unknown tags yield an empty list.
    fn search(&self, tag: &str, limit: usize, seed_token: u64) -> Result<Vec<Item>, SearchError>;

    fn vocabulary(&self) -> Result<Vec<String>, SearchError>;

    fn meter(&self) -> &SearchBudgetMeter;

    /// The backing corpus, when the whole pool is locally enumerable.
    fn as_corpus(&self) -> Option<&Corpus> {
        None
    }
}

/// Seeded sample without replacement from the posting list of `tag`.
pub fn corpus_search(corpus: &Corpus, tag: &str, limit: usize, seed_token: u64) -> Vec<Item> {
    let postings = corpus.postings(tag);
    let amount = limit.min(postings.len());
    if amount == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng::mix(seed_token, rng::fnv1a(tag)));
    rand::seq::index::sample(&mut rng, postings.len(), amount)
        .into_iter()
        .map(|i| corpus.item_at(postings[i]).clone())
        .collect()
}

/// In-memory search over a corpus.
#[derive(Debug)]
pub struct CorpusSearch {
    corpus: Arc<Corpus>,
    meter: SearchBudgetMeter,
}

impl CorpusSearch {
    pub fn new(corpus: Arc<Corpus>) -> Self {
        Self::with_cap(corpus, None)
    }

    pub fn with_cap(corpus: Arc<Corpus>, cap: Option<u64>) -> Self {
        Self {
            corpus,
            meter: SearchBudgetMeter::new(cap),
        }
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }
}

impl SearchSource for CorpusSearch {
    fn search(&self, tag: &str, limit: usize, seed_token: u64) -> Result<Vec<Item>, SearchError> {
        self.meter.try_acquire()?;
        Ok(corpus_search(&self.corpus, tag, limit, seed_token))
    }

    fn vocabulary(&self) -> Result<Vec<String>, SearchError> {
        Ok(self.corpus.tag_vocab())
    }

    fn meter(&self) -> &SearchBudgetMeter {
        &self.meter
    }

    fn as_corpus(&self) -> Option<&Corpus> {
        Some(&self.corpus)
    }
}

/// Body of `GET /api/search`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResponse {
    pub items: Vec<Item>,
}

/// Body of `GET /api/vocab`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabResponse {
    pub tags: Vec<String>,
}
