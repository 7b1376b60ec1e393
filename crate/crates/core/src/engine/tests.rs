use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use super::*;
use crate::corpus::{synth_corpus, Item, SynthParams};
use crate::search::CorpusSearch;

fn synth(n_items: usize, seed: u64) -> (Arc<Corpus>, TagEmbeddings) {
    let (c, e) = synth_corpus(&SynthParams {
        n_items,
        n_tags: 20,
        d: 6,
        k: 4,
        seed,
        cluster_spread: 0.4,
    })
    .unwrap();
    (Arc::new(c), e)
}

fn loop_cfg(strategy: Strategy, seed: u64, budget: usize) -> LoopConfig {
    LoopConfig {
        acquisition: AcquisitionConfig::default(),
        retrieval: RetrievalConfig {
            strategy,
            seed,
            linucb_iters: 30,
            small_pool_size: 200,
            ..Default::default()
        },
        train: TrainConfig {
            learning_rate: 1e-2,
            epochs: 30,
            seed,
            ..Default::default()
        },
        budget,
    }
}

fn task(corpus: &Corpus, seed: u64) -> (TaskOracle, TaskSplit) {
    let spec = TaskSpec {
        auto_frequency: (0.03, 0.2),
        ..Default::default()
    };
    build_task(corpus, &spec, seed).unwrap()
}

fn run_simulated(corpus: &Arc<Corpus>, emb: &TagEmbeddings, strategy: Strategy, seed: u64, budget: usize) -> RunRecord {
    let (oracle, split) = task(corpus, seed);
    let src = CorpusSearch::new(corpus.clone());
    let env = Environment {
        corpus,
        embeddings: emb,
        source: &src,
    };
    run(env, &oracle, &split, &loop_cfg(strategy, seed, budget), &mut ()).unwrap()
}

#[derive(Default)]
struct Recorder {
    states: Vec<Checkpoint>,
    aucs: Vec<(usize, f64)>,
    started: usize,
}

impl RunObserver for Recorder {
    fn on_start(&mut self, _state: &Checkpoint) {
        self.started += 1;
    }
    fn on_evaluated(&mut self, iter: usize, auc: f64) {
        self.aucs.push((iter, auc));
    }
    fn on_row(&mut self, state: &Checkpoint) -> Result<(), EngineError> {
        self.states.push(state.clone());
        Ok(())
    }
}

fn tiny_item(id: &str, f: [f64; 2], tag: &str) -> Item {
    Item {
        id: id.into(),
        features: f.to_vec(),
        tags: BTreeSet::from([tag.to_string()]),
        url: None,
    }
}

#[test]
fn single_iteration_on_three_selectable_items() {
    let corpus = Arc::new(
        Corpus::new(
            vec![
                tiny_item("p0", [2.0, 0.1], "a"),
                tiny_item("n0", [0.1, 2.0], "b"),
                tiny_item("tp", [1.5, 0.3], "a"),
                tiny_item("tn", [0.2, 1.7], "b"),
                tiny_item("s1", [1.0, 1.0], "a"),
                tiny_item("s2", [0.5, 1.2], "b"),
                tiny_item("s3", [1.2, 0.4], "b"),
            ],
            None,
        )
        .unwrap(),
    );
    let emb = TagEmbeddings::new(2, Default::default(), crate::corpus::DefaultPolicy::SeededHashGaussian).unwrap();
    let mut initial = LabeledSet::default();
    initial.push("p0".into(), true).unwrap();
    initial.push("n0".into(), false).unwrap();
    let split = TaskSplit {
        target_tag: "a".into(),
        initial,
        test_ids: vec!["tn".into(), "tp".into()],
        test_labels: vec![false, true],
    };
    let oracle = TaskOracle::Tag(TagOracle { target_tag: "a".into() });
    for strategy in Strategy::ALL {
        let src = CorpusSearch::new(corpus.clone());
        let env = Environment {
            corpus: &corpus,
            embeddings: &emb,
            source: &src,
        };
        let mut rec = Recorder::default();
        let record = run(env, &oracle, &split, &loop_cfg(strategy, 0, 1), &mut rec).unwrap();
        assert_eq!(record.rows.len(), 1, "{strategy}");
        assert_eq!(rec.states.last().unwrap().labeled.len(), 3);
        assert!(["s1", "s2", "s3"].contains(&record.rows[0].selected_id.as_str()));
    }
}

#[test]
fn identical_seeds_give_identical_records() {
    let (corpus, emb) = synth(600, 3);
    for strategy in Strategy::ALL {
        let a = run_simulated(&corpus, &emb, strategy, 5, 8);
        let b = run_simulated(&corpus, &emb, strategy, 5, 8);
        assert_eq!(a.to_csv_string(), b.to_csv_string(), "{strategy}");
        assert_eq!(a.config, b.config);
    }
}

#[test]
fn auc_improves_with_labels() {
    let (corpus, emb) = synth(1500, 8);
    let mut first = 0.0;
    let mut last = 0.0;
    for seed in 0..5 {
        let rec = run_simulated(&corpus, &emb, Strategy::Seafaring, seed, 50);
        first += rec.rows[0].auc;
        last += rec.rows.last().unwrap().auc;
    }
    assert!(last > first, "mean first {} vs mean final {}", first / 5.0, last / 5.0);
}

#[test]
fn run_invariants_hold() {
    let (corpus, emb) = synth(800, 11);
    for strategy in Strategy::ALL {
        let (oracle, split) = task(&corpus, 2);
        let src = CorpusSearch::new(corpus.clone());
        let env = Environment {
            corpus: &corpus,
            embeddings: &emb,
            source: &src,
        };
        let budget = 25;
        let mut rec = Recorder::default();
        let record = run(env, &oracle, &split, &loop_cfg(strategy, 2, budget), &mut rec).unwrap();
        let final_state = rec.states.last().unwrap();
        assert_eq!(record.rows.len(), budget);
        assert_eq!(final_state.labeled.len(), 2 + budget);
        let ids: HashSet<&str> = final_state.labeled.entries().iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids.len(), 2 + budget);

        let test: HashSet<&str> = split.test_ids.iter().map(String::as_str).collect();
        let (mut n_pos, mut n_neg) = split.initial.counts();
        for (i, row) in record.rows.iter().enumerate() {
            assert_eq!(row.iter, i + 1);
            assert!(!test.contains(row.selected_id.as_str()));
            let item = corpus.get(&row.selected_id).unwrap();
            assert_eq!(oracle.label(item).unwrap(), row.label);
            if row.label {
                n_pos += 1;
            } else {
                n_neg += 1;
            }
            assert_eq!((row.n_pos, row.n_neg), (n_pos, n_neg));
            assert_eq!(row.neg_pos_ratio, n_neg as f64 / n_pos.max(1) as f64);
            assert!((0.0..=1.0).contains(&row.auc));
            assert!(row.n_model_evals >= 1);
            assert_eq!(rec.aucs[i], (row.iter, row.auc));
        }
        if strategy != Strategy::Seafaring {
            assert!(record.rows.iter().all(|r| r.n_queries == 0));
        } else {
            assert!(record.rows.iter().all(|r| r.n_queries == 30));
        }
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let (corpus, emb) = synth(700, 4);
    let (oracle, split) = task(&corpus, 6);
    let cfg = loop_cfg(Strategy::Seafaring, 6, 12);
    let full = {
        let src = CorpusSearch::new(corpus.clone());
        let env = Environment {
            corpus: &corpus,
            embeddings: &emb,
            source: &src,
        };
        let mut rec = Recorder::default();
        let record = run(env, &oracle, &split, &cfg, &mut rec).unwrap();
        (record, rec.states)
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cp.json");
    full.1[4].save(&path).unwrap();
    let restored = Checkpoint::load(&path).unwrap();
    assert_eq!(restored, full.1[4]);

    let src = CorpusSearch::new(corpus.clone());
    let env = Environment {
        corpus: &corpus,
        embeddings: &emb,
        source: &src,
    };
    let mut rec = Recorder::default();
    let resumed = resume(env, &oracle, &split, restored, &mut rec).unwrap();
    assert_eq!(rec.started, 1);
    assert_eq!(rec.states.len(), 12 - 5);
    assert_eq!(resumed, full.0);

    let mut foreign = full.1[4].clone();
    foreign.rows.pop();
    assert!(matches!(
        resume(env, &oracle, &split, foreign, &mut ()),
        Err(EngineError::Checkpoint(_))
    ));
}

#[test]
fn human_oracle_reproduces_simulated_run() {
    let (corpus, emb) = synth(500, 21);
    let (oracle, split) = task(&corpus, 1);
    let cfg = loop_cfg(Strategy::Seafaring, 1, 6);
    let simulated = {
        let src = CorpusSearch::new(corpus.clone());
        let env = Environment {
            corpus: &corpus,
            embeddings: &emb,
            source: &src,
        };
        run(env, &oracle, &split, &cfg, &mut ()).unwrap()
    };

    let session = LabelingSession::new(cfg.budget);
    let human = HumanOracle::new(session.clone());
    let annotator = {
        let session = session.clone();
        let corpus = corpus.clone();
        let oracle = oracle.clone();
        std::thread::spawn(move || {
            let mut answered = 0;
            while answered < 6 {
                match session.next() {
                    Some(p) => {
                        let y = oracle.label(corpus.get(&p.item_id).unwrap()).unwrap();
                        session.submit(&p.item_id, y).unwrap();
                        assert!(session.submit(&p.item_id, y).is_err());
                        answered += 1;
                    }
                    None => std::thread::sleep(std::time::Duration::from_millis(1)),
                }
            }
        })
    };
    let src = CorpusSearch::new(corpus.clone());
    let env = Environment {
        corpus: &corpus,
        embeddings: &emb,
        source: &src,
    };
    let record = run(env, &human, &split, &cfg, &mut ()).unwrap();
    annotator.join().unwrap();
    assert_eq!(record, simulated);
    assert_eq!(session.status().iteration, 6);
}

#[test]
fn invalid_inputs_are_rejected() {
    let (corpus, emb) = synth(300, 2);
    let (oracle, split) = task(&corpus, 0);
    let src = CorpusSearch::new(corpus.clone());
    let env = Environment {
        corpus: &corpus,
        embeddings: &emb,
        source: &src,
    };
    let zero = loop_cfg(Strategy::Random, 0, 0);
    assert!(matches!(run(env, &oracle, &split, &zero, &mut ()), Err(EngineError::InvalidTask(_))));

    let mut lopsided = split.clone();
    let pos = lopsided.initial.entries()[0].0.clone();
    lopsided.initial = LabeledSet::default();
    lopsided.initial.push(pos, true).unwrap();
    let cfg = loop_cfg(Strategy::Random, 0, 3);
    assert!(matches!(run(env, &oracle, &lopsided, &cfg, &mut ()), Err(EngineError::InvalidTask(_))));

    let mut leaky = split.clone();
    leaky.test_ids[0] = split.initial.entries()[1].0.clone();
    assert!(matches!(run(env, &oracle, &leaky, &cfg, &mut ()), Err(EngineError::InvalidTask(_))));
}

#[test]
fn labeled_set_rejects_duplicates() {
    let mut set = LabeledSet::default();
    set.push("a".into(), true).unwrap();
    set.push("b".into(), false).unwrap();
    assert!(matches!(set.push("a".into(), false), Err(EngineError::AlreadyLabeled(_))));
    assert_eq!(set.counts(), (1, 1));
    let json = serde_json::to_string(&set).unwrap();
    assert_eq!(json, r#"[["a",true],["b",false]]"#);
    assert_eq!(serde_json::from_str::<LabeledSet>(&json).unwrap(), set);
    assert!(serde_json::from_str::<LabeledSet>(r#"[["a",true],["a",false]]"#).is_err());
}

#[test]
fn run_csv_round_trip() {
    let (corpus, emb) = synth(400, 1);
    let record = run_simulated(&corpus, &emb, Strategy::SmallExact, 3, 5);
    let text = record.to_csv_string();
    assert_eq!(text.lines().next().unwrap(), RUN_CSV_HEADER);
    assert_eq!(text.lines().count(), 6);
    let back = RunRecord::read_csv(text.as_bytes()).unwrap();
    assert_eq!(back.rows, record.rows);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    record.save(&path).unwrap();
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path.with_extension("json")).unwrap()).unwrap();
    assert_eq!(sidecar["seed"], 3);
    assert_eq!(sidecar["config"]["budget"], 5);
    assert_eq!(RunRecord::load(&path).unwrap().rows, record.rows);
    assert!(RunRecord::read_csv("a,b\n1,2\n".as_bytes()).is_err());
}
