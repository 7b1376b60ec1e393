use std::path::Path;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use seafarer::config::{ExperimentConfig, OracleMode};
use seafarer::engine::{build_task, LabelingSession, Oracle as _, TaskOracle};
use seafarer::experiment::{run_csv_path, run_one};
use seafarer::http::HttpRequest;
use seafarer::service::{route, LabelingService, ServiceError, CHECKPOINT_FILE};
use seafarer::{Corpus, RunRecord, Strategy};

const BUDGET: usize = 10;

fn config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json(
        &json!({
            "corpus": {"synth": {"n_items": 800, "n_tags": 15, "d": 5, "k": 4, "seed": 3, "cluster_spread": 0.4}},
            "task": {"auto_frequency": [0.03, 0.2]},
            "strategies": ["seafaring"],
            "retrieval": {"linucb_iters": 20, "small_pool_size": 100},
            "train": {"learning_rate": 0.01, "epochs": 20},
            "budget": BUDGET,
            "seeds": [4],
            "oracle": "human",
        })
        .to_string(),
    )
    .unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

struct Client {
    base: String,
}

impl Client {
    fn call(&self, req: ureq::Request, body: Option<Value>) -> (u16, String) {
        let resp = match body {
            Some(b) => req.set("Content-Type", "application/json").send_string(&b.to_string()),
            None => req.call(),
        };
        match resp {
            Ok(r) => (r.status(), r.into_string().unwrap()),
            Err(ureq::Error::Status(code, r)) => (code, r.into_string().unwrap()),
            Err(e) => panic!("{e}"),
        }
    }

    fn get(&self, path: &str) -> (u16, String) {
        self.call(ureq::get(&format!("{}{path}", self.base)), None)
    }

    fn post_label(&self, body: Value) -> (u16, String) {
        self.call(ureq::post(&format!("{}/api/label", self.base)), Some(body))
    }

    fn status(&self) -> Value {
        let (code, body) = self.get("/api/status");
        assert_eq!(code, 200);
        serde_json::from_str(&body).unwrap()
    }

    fn wait_pending(&self) -> Value {
        let deadline = Instant::now() + Duration::from_secs(60);
        loop {
            let (code, body) = self.get("/api/next");
            match code {
                200 => return serde_json::from_str(&body).unwrap(),
                204 => assert!(Instant::now() < deadline, "no pending item"),
                other => panic!("unexpected status {other}"),
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }

    /// Answer `n` requests with the simulated ground truth.
    fn label(&self, n: usize, corpus: &Corpus, truth: &TaskOracle) {
        for _ in 0..n {
            let pending = self.wait_pending();
            let id = pending["item_id"].as_str().unwrap().to_string();
            let before = self.status()["iteration"].as_u64().unwrap();
            assert_eq!(pending["iteration"].as_u64().unwrap(), before + 1);

            assert_eq!(self.post_label(json!({"item_id": id, "label": 2})).0, 400);
            assert_eq!(self.post_label(json!({"item_id": "not-pending", "label": 1})).0, 409);

            let y = truth.label(corpus.get(&id).unwrap()).unwrap();
            let (code, body) = self.post_label(json!({"item_id": id, "label": u8::from(y)}));
            assert_eq!(code, 200, "{body}");
            assert_eq!(self.status()["iteration"].as_u64().unwrap(), before + 1);
            assert_eq!(self.post_label(json!({"item_id": id, "label": u8::from(y)})).0, 409);
        }
    }
}

fn expected(cfg: &ExperimentConfig) -> (std::sync::Arc<Corpus>, TaskOracle, RunRecord) {
    let (corpus, emb) = cfg.materialize().unwrap();
    let (truth, _) = build_task(&corpus, &cfg.task, 4).unwrap();
    let mut simulated = cfg.clone();
    simulated.oracle = OracleMode::Simulated;
    let record = run_one(&simulated, &corpus, &emb, Strategy::Seafaring, 4).unwrap();
    (corpus, truth, record)
}

#[test]
fn next_is_empty_before_any_selection() {
    let session = LabelingSession::new(3);
    let req = |method: &str, path: &str, body: &str| HttpRequest {
        method: method.into(),
        path: path.into(),
        query: Default::default(),
        body: body.into(),
    };
    assert_eq!(route(&session, &req("GET", "/api/next", "")).status, 204);
    assert_eq!(route(&session, &req("POST", "/api/label", r#"{"item_id":"a","label":1}"#)).status, 409);
    assert_eq!(route(&session, &req("POST", "/api/label", "{")).status, 400);
    assert_eq!(route(&session, &req("DELETE", "/api/label", "")).status, 405);
    assert_eq!(route(&session, &req("GET", "/elsewhere", "")).status, 404);
    let status: Value = serde_json::from_str(route(&session, &req("GET", "/api/status", "")).body.as_deref().unwrap()).unwrap();
    assert_eq!(status["iteration"], 0);
    assert_eq!(status["budget"], 3);
    assert_eq!(status["finished"], false);
}

#[test]
fn scripted_annotator_completes_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let (corpus, truth, simulated) = expected(&cfg);

    let mut service = LabelingService::start(&cfg, "127.0.0.1:0").unwrap();
    let client = Client { base: service.url() };
    client.label(BUDGET, &corpus, &truth);
    let record = service.wait().unwrap();
    assert_eq!(record, simulated);

    let status = client.status();
    assert_eq!(status["finished"], true);
    assert_eq!(status["iteration"], BUDGET);
    assert_eq!(status["auc_history"].as_array().unwrap().len(), BUDGET);
    assert_eq!(client.get("/api/next").0, 204);

    let saved = RunRecord::load(&run_csv_path(dir.path(), Strategy::Seafaring, 4)).unwrap();
    assert_eq!(saved.rows.len(), BUDGET);
    assert_eq!(saved.rows, simulated.rows);
    assert!(dir.path().join(CHECKPOINT_FILE).exists());
}

#[test]
fn interrupted_session_resumes_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let (corpus, truth, simulated) = expected(&cfg);

    let service = LabelingService::start(&cfg, "127.0.0.1:0").unwrap();
    let client = Client { base: service.url() };
    client.label(4, &corpus, &truth);
    client.wait_pending();
    assert!(matches!(service.shutdown(), Some(Err(_))));

    let mut service = LabelingService::start(&cfg, "127.0.0.1:0").unwrap();
    let client = Client { base: service.url() };
    client.wait_pending();
    assert_eq!(client.status()["iteration"], 4);
    client.label(BUDGET - 4, &corpus, &truth);
    assert_eq!(service.wait().unwrap(), simulated);

    let mut other = cfg.clone();
    other.retrieval.alpha = 0.5;
    assert!(matches!(LabelingService::start(&other, "127.0.0.1:0"), Err(ServiceError::Engine(_))));
    let mut simulated_mode = cfg;
    simulated_mode.oracle = OracleMode::Simulated;
    assert!(matches!(LabelingService::start(&simulated_mode, "127.0.0.1:0"), Err(ServiceError::NotHuman)));
}
