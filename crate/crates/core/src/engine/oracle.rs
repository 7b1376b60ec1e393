use std::collections::HashSet;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use serde::Serialize;

use crate::corpus::Item;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("the labeling session was closed")]
    Disconnected,
    #[error("item `{0}` was already labeled in this session")]
    AlreadyLabeled(String),
}

/// A label source.
pub trait Oracle: Send + Sync {
    fn label(&self, item: &Item) -> Result<bool, OracleError>;
}

/// Positive iff the item carries the target tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TagOracle {
    pub target_tag: String,
}

impl Oracle for TagOracle {
    fn label(&self, item: &Item) -> Result<bool, OracleError> {
        Ok(item.has_tag(&self.target_tag))
    }
}

/// Cosine similarity, 0 when either vector is zero. `cosine(x, x)` is exactly 1.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (ab / (aa * bb).sqrt()).clamp(-1.0, 1.0)
}

/// Positive iff the item's best cosine similarity to a hidden reference set
/// reaches the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityOracle {
    references: Vec<Vec<f64>>,
    threshold: f64,
}

impl SimilarityOracle {
    pub fn new(references: Vec<Vec<f64>>, threshold: f64) -> Self {
        Self {
            references,
            threshold,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn n_references(&self) -> usize {
        self.references.len()
    }

    pub fn max_similarity(&self, features: &[f64]) -> f64 {
        self.references
            .iter()
            .map(|r| cosine(features, r))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Oracle for SimilarityOracle {
    fn label(&self, item: &Item) -> Result<bool, OracleError> {
        Ok(self.max_similarity(&item.features) >= self.threshold)
    }
}

/// The item a human annotator is asked about.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PendingItem {
    pub item_id: String,
    pub url: Option<String>,
    pub iteration: usize,
}

/// Snapshot served by the status endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionStatus {
    pub iteration: usize,
    pub budget: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub auc_history: Vec<f64>,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SubmitError {
    #[error("item `{0}` is not awaiting a label")]
    NotPending(String),
}

#[derive(Debug, Default)]
struct SessionState {
    pending: Option<PendingItem>,
    answer: Option<(String, bool)>,
    consumed: HashSet<String>,
    iteration: usize,
    budget: usize,
    n_pos: usize,
    n_neg: usize,
    auc_history: Vec<f64>,
    finished: bool,
    closed: bool,
}

/// Hand-off point between the learning loop and the labeling service.
///
/// The loop blocks in [`Oracle::label`] until [`LabelingSession::submit`]
/// delivers a label for exactly the pending item. All transitions happen under
/// one lock, so every status read sees a consistent state.
#[derive(Debug, Default)]
pub struct LabelingSession {
    state: Mutex<SessionState>,
    wake: Condvar,
}

impl LabelingSession {
    pub fn new(budget: usize) -> Arc<Self> {
        let session = Self::default();
        session.lock().budget = budget;
        Arc::new(session)
    }

    fn lock(&self) -> MutexGuard<'_, SessionState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Reset counters, e.g. when starting or resuming a run.
    pub fn set_progress(&self, iteration: usize, n_pos: usize, n_neg: usize, auc_history: Vec<f64>) {
        let mut s = self.lock();
        s.iteration = iteration;
        s.n_pos = n_pos;
        s.n_neg = n_neg;
        s.auc_history = auc_history;
    }

    pub fn record_auc(&self, auc: f64) {
        self.lock().auc_history.push(auc);
    }

    pub fn mark_finished(&self) {
        let mut s = self.lock();
        s.finished = true;
        s.pending = None;
    }

    /// Wake a blocked loop with [`OracleError::Disconnected`].
    pub fn close(&self) {
        self.lock().closed = true;
        self.wake.notify_all();
    }

    pub fn next(&self) -> Option<PendingItem> {
        let s = self.lock();
        match (&s.pending, &s.answer) {
            (Some(p), None) => Some(p.clone()),
            _ => None,
        }
    }

    pub fn status(&self) -> SessionStatus {
        let s = self.lock();
        SessionStatus {
            iteration: s.iteration,
            budget: s.budget,
            n_pos: s.n_pos,
            n_neg: s.n_neg,
            auc_history: s.auc_history.clone(),
            finished: s.finished,
        }
    }

    /// Accept a label for the pending item. Anything else is rejected and
    /// leaves the state untouched.
    pub fn submit(&self, item_id: &str, label: bool) -> Result<(), SubmitError> {
        let mut s = self.lock();
        let matches = s.answer.is_none()
            && s.pending.as_ref().is_some_and(|p| p.item_id == item_id)
            && !s.consumed.contains(item_id);
        if !matches {
            return Err(SubmitError::NotPending(item_id.to_string()));
        }
        s.consumed.insert(item_id.to_string());
        s.answer = Some((item_id.to_string(), label));
        s.iteration += 1;
        if label {
            s.n_pos += 1;
        } else {
            s.n_neg += 1;
        }
        drop(s);
        self.wake.notify_all();
        Ok(())
    }
}

/// Oracle backed by a [`LabelingSession`].
#[derive(Debug, Clone)]
pub struct HumanOracle {
    session: Arc<LabelingSession>,
}

impl HumanOracle {
    pub fn new(session: Arc<LabelingSession>) -> Self {
        Self { session }
    }

    pub fn session(&self) -> &Arc<LabelingSession> {
        &self.session
    }
}

impl Oracle for HumanOracle {
    fn label(&self, item: &Item) -> Result<bool, OracleError> {
        let mut s = self.session.lock();
        if s.closed {
            return Err(OracleError::Disconnected);
        }
        if s.consumed.contains(&item.id) {
            return Err(OracleError::AlreadyLabeled(item.id.clone()));
        }
        let iteration = s.iteration + 1;
        s.pending = Some(PendingItem {
            item_id: item.id.clone(),
            url: item.url.clone(),
            iteration,
        });
        s.answer = None;
        loop {
            if let Some((id, label)) = s.answer.take() {
                debug_assert_eq!(id, item.id);
                s.pending = None;
                return Ok(label);
            }
            if s.closed {
                s.pending = None;
                return Err(OracleError::Disconnected);
            }
            s = self.session.wake.wait(s).unwrap_or_else(|e| e.into_inner());
        }
    }
}
