//! HTTP labeling service for human-oracle runs.
//!
//! Endpoints:
//!
//! | method | path          | reply                                                  |
//! |--------|---------------|--------------------------------------------------------|
//! | GET    | `/api/next`   | 200 `{"item_id","url","iteration"}` or 204             |
//! | POST   | `/api/label`  | body `{"item_id","label":0\|1}`; 200, 400 or 409       |
//! | GET    | `/api/status` | `{"iteration","budget","n_pos","n_neg","auc_history","finished"}` |
//!
//! The loop checkpoints to `<output_dir>/checkpoint.json` after every label
//! and resumes from it on restart.

use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;

use log::{error, info};
use serde::Deserialize;

use crate::config::{ExperimentConfig, OracleMode};
use crate::engine::{
    self, Checkpoint, EngineError, Environment, HumanOracle, LabelingSession, RunObserver, RunRecord,
};
use crate::experiment::{loop_config, make_source, run_csv_path};
use crate::http::{HttpRequest, HttpServer, Reply};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("config does not select the human oracle")]
    NotHuman,
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("the labeling loop panicked")]
    Panicked,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelBody {
    item_id: String,
    label: u8,
}

/// Route one request against the session.
pub fn route(session: &LabelingSession, req: &HttpRequest) -> Reply {
    match (req.method.as_str(), req.path.as_str()) {
        ("GET", "/api/next") => match session.next() {
            Some(p) => Reply::json(200, serde_json::to_string(&p).expect("pending item serializes")),
            None => Reply::empty(204),
        },
        ("GET", "/api/status") => {
            Reply::json(200, serde_json::to_string(&session.status()).expect("status serializes"))
        }
        ("POST", "/api/label") => {
            let body: LabelBody = match serde_json::from_str(&req.body) {
                Ok(b) => b,
                Err(e) => return Reply::error(400, &format!("bad label body: {e}")),
            };
            let label = match body.label {
                0 => false,
                1 => true,
                _ => return Reply::error(400, "label must be 0 or 1"),
            };
            match session.submit(&body.item_id, label) {
                Ok(()) => Reply::json(200, serde_json::json!({ "accepted": body.item_id }).to_string()),
                Err(e) => Reply::error(409, &e.to_string()),
            }
        }
        (_, "/api/next" | "/api/status" | "/api/label") => Reply::error(405, "method not allowed"),
        _ => Reply::error(404, "not found"),
    }
}

struct SessionObserver {
    session: Arc<LabelingSession>,
    checkpoint: PathBuf,
}

impl RunObserver for SessionObserver {
    fn on_start(&mut self, state: &Checkpoint) {
        let (n_pos, n_neg) = state.labeled.counts();
        let aucs = state.rows.iter().map(|r| r.auc).collect();
        self.session.set_progress(state.rows.len(), n_pos, n_neg, aucs);
    }

    fn on_evaluated(&mut self, _iter: usize, auc: f64) {
        self.session.record_auc(auc);
    }

    fn on_row(&mut self, state: &Checkpoint) -> Result<(), EngineError> {
        state.save(&self.checkpoint)
    }
}

/// A running labeling service and its loop thread.
pub struct LabelingService {
    http: HttpServer,
    session: Arc<LabelingSession>,
    worker: Option<JoinHandle<Result<RunRecord, EngineError>>>,
}

impl LabelingService {
    /// Start the loop for the first configured strategy and seed, resuming
    /// from a checkpoint in the output directory when one exists.
    pub fn start(cfg: &ExperimentConfig, bind: &str) -> Result<Self, ServiceError> {
        if cfg.oracle != OracleMode::Human {
            return Err(ServiceError::NotHuman);
        }
        let (corpus, embeddings) = cfg.materialize()?;
        std::fs::create_dir_all(&cfg.output_dir)?;
        let strategy = cfg.strategies[0];
        let seed = cfg.seeds[0];
        let (_, split) = engine::build_task(&corpus, &cfg.task, seed)?;
        let loop_cfg = loop_config(cfg, strategy, seed);
        let checkpoint_path = cfg.output_dir.join(CHECKPOINT_FILE);
        let checkpoint = if checkpoint_path.exists() {
            let cp = Checkpoint::load(&checkpoint_path)?;
            if cp.config != loop_cfg {
                return Err(EngineError::Checkpoint("checkpoint was written with a different config".into()).into());
            }
            info!("resuming from {} labels", cp.rows.len());
            Some(cp)
        } else {
            None
        };

        let session = LabelingSession::new(cfg.budget);
        let http = {
            let session = session.clone();
            HttpServer::start(bind, 4, move |req| route(&session, req))?
        };
        info!("labeling service listening on {}", http.url());

        let source = make_source(cfg, &corpus);
        let csv_path = run_csv_path(&cfg.output_dir, strategy, seed);
        let oracle = HumanOracle::new(session.clone());
        let mut observer = SessionObserver {
            session: session.clone(),
            checkpoint: checkpoint_path,
        };
        let worker_session = session.clone();
        let worker = std::thread::spawn(move || {
            let env = Environment {
                corpus: &corpus,
                embeddings: &embeddings,
                source: source.as_ref(),
            };
            let result = match checkpoint {
                Some(cp) => engine::resume(env, &oracle, &split, cp, &mut observer),
                None => engine::run(env, &oracle, &split, &loop_cfg, &mut observer),
            };
            match &result {
                Ok(record) => {
                    record.save(&csv_path)?;
                    info!("run complete; wrote {}", csv_path.display());
                }
                Err(e) => error!("labeling loop stopped: {e}"),
            }
            worker_session.mark_finished();
            result
        });
        Ok(Self {
            http,
            session,
            worker: Some(worker),
        })
    }

    pub fn url(&self) -> String {
        self.http.url()
    }

    pub fn session(&self) -> &Arc<LabelingSession> {
        &self.session
    }

    /// Block until the loop ends; the HTTP server keeps serving meanwhile.
    pub fn wait(&mut self) -> Result<RunRecord, ServiceError> {
        let worker = self.worker.take().ok_or(ServiceError::Panicked)?;
        worker.join().map_err(|_| ServiceError::Panicked)?.map_err(Into::into)
    }

    /// Stop the loop (a pending label request fails) and the server.
    pub fn shutdown(mut self) -> Option<Result<RunRecord, ServiceError>> {
        self.session.close();
        let out = self.worker.is_some().then(|| self.wait());
        out
    }
}

impl Drop for LabelingService {
    fn drop(&mut self) {
        self.session.close();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
