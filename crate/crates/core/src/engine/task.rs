use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::oracle::{Oracle, OracleError, SimilarityOracle, TagOracle};
use super::{EngineError, LabeledSet};
use crate::corpus::{Corpus, Item};
use crate::rng::{self, Stream};

/// Size of the hidden reference set of a similarity task.
pub const N_REFERENCES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    Tag,
    Similarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Target tag. When absent, the first tag (in vocabulary order) whose
    /// frequency lies in `auto_frequency` is used.
    pub tag: Option<String>,
    pub threshold: f64,
    pub test_fraction: f64,
    pub auto_frequency: (f64, f64),
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            kind: TaskKind::Tag,
            tag: None,
            threshold: 0.8,
            test_fraction: 0.2,
            auto_frequency: (0.01, 0.02),
        }
    }
}

/// Ground-truth oracle of a simulated task.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskOracle {
    Tag(TagOracle),
    Similarity(SimilarityOracle),
}

impl Oracle for TaskOracle {
    fn label(&self, item: &Item) -> Result<bool, OracleError> {
        match self {
            TaskOracle::Tag(o) => o.label(item),
            TaskOracle::Similarity(o) => o.label(item),
        }
    }
}

/// What the learner starts from: two labeled items and the held-out ids it
/// must never select.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSplit {
    pub target_tag: String,
    pub initial: LabeledSet,
    pub test_ids: Vec<String>,
    /// Ground truth of `test_ids`, known only to the evaluator.
    pub test_labels: Vec<bool>,
}

/// First tag in vocabulary order with frequency in `[lo, hi]`.
pub fn pick_rare_tag(corpus: &Corpus, lo: f64, hi: f64) -> Option<String> {
    corpus.tag_vocab().into_iter().find(|t| {
        let f = corpus.tag_frequency(t);
        (lo..=hi).contains(&f)
    })
}

/// Build the oracle, a stratified held-out test set, and the initial labeled pair.
pub fn build_task(corpus: &Corpus, spec: &TaskSpec, seed: u64) -> Result<(TaskOracle, TaskSplit), EngineError> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(EngineError::InvalidTask("test_fraction must be in (0, 1)".into()));
    }
    let tag = match &spec.tag {
        Some(t) => t.clone(),
        None => pick_rare_tag(corpus, spec.auto_frequency.0, spec.auto_frequency.1).ok_or_else(|| {
            EngineError::InvalidTask(format!(
                "no tag with frequency in [{}, {}]",
                spec.auto_frequency.0, spec.auto_frequency.1
            ))
        })?,
    };
    let oracle = match spec.kind {
        TaskKind::Tag => TaskOracle::Tag(TagOracle { target_tag: tag.clone() }),
        TaskKind::Similarity => {
            if !(spec.threshold > 0.0 && spec.threshold <= 1.0) {
                return Err(EngineError::InvalidTask("threshold must be in (0, 1]".into()));
            }
            let postings = corpus.postings(&tag);
            if postings.is_empty() {
                return Err(EngineError::InvalidTask(format!("tag `{tag}` has no items")));
            }
            let mut rng = rng::rng_for(seed, Stream::References, 0);
            let take = N_REFERENCES.min(postings.len());
            let refs = rand::seq::index::sample(&mut rng, postings.len(), take)
                .into_iter()
                .map(|i| corpus.item_at(postings[i]).features.clone())
                .collect();
            TaskOracle::Similarity(SimilarityOracle::new(refs, spec.threshold))
        }
    };

    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for item in corpus.items() {
        if oracle.label(item)? {
            pos.push(item.id.as_str());
        } else {
            neg.push(item.id.as_str());
        }
    }
    if pos.len() < 2 || neg.len() < 2 {
        return Err(EngineError::InvalidTask(format!(
            "task `{tag}` has {} positives and {} negatives; need at least 2 of each",
            pos.len(),
            neg.len()
        )));
    }

    let n = corpus.len() as f64;
    let n_test = ((spec.test_fraction * n).round() as usize).clamp(2, corpus.len() - 2);
    let n_test_pos = ((spec.test_fraction * pos.len() as f64).round() as usize).clamp(1, pos.len() - 1);
    let n_test_neg = n_test.saturating_sub(n_test_pos).clamp(1, neg.len() - 1);

    let mut rng = rng::rng_for(seed, Stream::Split, 0);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut test: Vec<(String, bool)> = pos[..n_test_pos]
        .iter()
        .map(|s| (s.to_string(), true))
        .chain(neg[..n_test_neg].iter().map(|s| (s.to_string(), false)))
        .collect();
    test.sort();
    let (test_ids, test_labels) = test.into_iter().unzip();

    let mut rng = rng::rng_for(seed, Stream::InitialPair, 0);
    let first_pos = pos[n_test_pos..].choose(&mut rng).expect("a positive remains");
    let first_neg = neg[n_test_neg..].choose(&mut rng).expect("a negative remains");
    let mut initial = LabeledSet::default();
    initial.push(first_pos.to_string(), true)?;
    initial.push(first_neg.to_string(), false)?;
    Ok((
        oracle,
        TaskSplit {
            target_tag: tag,
            initial,
            test_ids,
            test_labels,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, HashSet};

    fn corpus_with(n: usize, tagged: usize) -> Corpus {
        let items = (0..n)
            .map(|i| Item {
                id: format!("i{i:04}"),
                features: vec![i as f64 + 1.0, 1.0 / (i as f64 + 1.0)],
                tags: if i < tagged {
                    BTreeSet::from(["a".to_string()])
                } else {
                    BTreeSet::from(["b".to_string()])
                },
                url: None,
            })
            .collect();
        Corpus::new(items, None).unwrap()
    }

    #[test]
    fn stratified_split() {
        let c = corpus_with(1000, 50);
        let spec = TaskSpec {
            tag: Some("a".into()),
            ..Default::default()
        };
        let (oracle, split) = build_task(&c, &spec, 3).unwrap();
        assert_eq!(split.test_ids.len(), 200);
        let n_pos = split
            .test_ids
            .iter()
            .filter(|id| oracle.label(c.get(id).unwrap()).unwrap())
            .count();
        assert!(n_pos >= 1);
        let test: HashSet<_> = split.test_ids.iter().collect();
        assert_eq!(split.initial.len(), 2);
        assert_eq!(split.initial.counts(), (1, 1));
        for (id, y) in split.initial.entries() {
            assert!(!test.contains(id));
            assert_eq!(oracle.label(c.get(id).unwrap()).unwrap(), *y);
        }
        assert_eq!(build_task(&c, &spec, 3).unwrap().1, split);
    }

    #[test]
    fn rare_tag_rejected() {
        let c = corpus_with(100, 1);
        let spec = TaskSpec {
            tag: Some("a".into()),
            ..Default::default()
        };
        assert!(matches!(build_task(&c, &spec, 0), Err(EngineError::InvalidTask(_))));
    }

    #[test]
    fn similarity_task_contains_references() {
        let c = corpus_with(300, 30);
        let spec = TaskSpec {
            kind: TaskKind::Similarity,
            tag: Some("a".into()),
            threshold: 1.0,
            ..Default::default()
        };
        let (oracle, _) = build_task(&c, &spec, 9).unwrap();
        let TaskOracle::Similarity(sim) = &oracle else { panic!() };
        assert_eq!(sim.n_references(), N_REFERENCES);
        // threshold 1 with pairwise non-parallel features: exactly the references are positive
        let positives = c.items().iter().filter(|it| oracle.label(it).unwrap()).count();
        assert_eq!(positives, N_REFERENCES);
    }

    #[test]
    fn auto_picks_rare_tag() {
        let c = corpus_with(1000, 15);
        let spec = TaskSpec::default();
        let (_, split) = build_task(&c, &spec, 0).unwrap();
        assert_eq!(split.target_tag, "a");
    }
}
