//! Pool-based active learning over tag-searchable item databases.
//!
//! The learner retrains a probabilistic classifier after every label and picks
//! the next item to label with one of three strategies: a LinUCB bandit over
//! search tags ([`retrieval::seafaring_select`]), an exhaustive scan of a small
//! fixed pool, or uniform random sampling.

pub mod acquisition;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod engine;
pub mod experiment;
pub mod http;
pub mod metrics;
pub mod retrieval;
pub mod rng;
pub mod search;
pub mod service;

pub use acquisition::{AcquisitionConfig, AcquisitionKind};
pub use classifier::{BinaryClassifier, TrainConfig};
pub use corpus::{Corpus, DefaultPolicy, Item, TagEmbeddings};
pub use engine::{LabeledSet, RunRecord, RunRow};
pub use retrieval::{RetrievalConfig, SelectionReport, Strategy};
pub use search::{CorpusSearch, RemoteSearch, SearchSource};
