use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use super::{corpus_search, SearchResponse, VocabResponse};
use crate::corpus::Corpus;
use crate::http::{HttpRequest, HttpServer, Reply};

#[derive(Debug, Clone, Copy, Default)]
pub struct MockOptions {
    /// Artificial delay before every response.
    pub latency: Option<Duration>,
    pub workers: usize,
}

/// Search-protocol server backed by [`corpus_search`].
pub struct MockServer {
    http: HttpServer,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.http.addr()
    }

    /// Base URL, e.g. `http://127.0.0.1:4321`.
    pub fn url(&self) -> String {
        self.http.url()
    }

    pub fn shutdown(self) {
        self.http.shutdown();
    }
}

pub fn serve_mock(
    corpus: Arc<Corpus>,
    bind: &str,
    opts: MockOptions,
) -> std::io::Result<MockServer> {
    let vocab = serde_json::to_string(&VocabResponse {
        tags: corpus.tag_vocab(),
    })
    .expect("vocab serializes");
    let workers = if opts.workers == 0 { 4 } else { opts.workers };
    let http = HttpServer::start(bind, workers, move |req| {
        if let Some(latency) = opts.latency {
            std::thread::sleep(latency);
        }
        route(&corpus, &vocab, req)
    })?;
    Ok(MockServer { http })
}

fn route(corpus: &Corpus, vocab: &str, req: &HttpRequest) -> Reply {
    if req.method != "GET" {
        return Reply::error(405, "method not allowed");
    }
    match req.path.as_str() {
        "/api/vocab" => Reply::json(200, vocab),
        "/api/search" => {
            let Some(tag) = req.query.get("tag") else {
                return Reply::error(400, "missing `tag`");
            };
            let limit = match req.query.get("limit").map(|s| s.parse::<usize>()) {
                Some(Ok(l)) if l >= 1 => l,
                _ => return Reply::error(400, "`limit` must be a positive integer"),
            };
            let token = match req.query.get("token").map(|s| s.parse::<u64>()) {
                None => 0,
                Some(Ok(t)) => t,
                Some(Err(_)) => return Reply::error(400, "`token` must be an unsigned integer"),
            };
            let body = SearchResponse {
                items: corpus_search(corpus, tag, limit, token),
            };
            Reply::json(200, serde_json::to_string(&body).expect("items serialize"))
        }
        _ => Reply::error(404, "not found"),
    }
}
