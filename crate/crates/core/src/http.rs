//! Minimal threaded HTTP server shared by the mock search server and the
//! labeling service.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use log::warn;
use tiny_http::{Header, Response, Server};

#[derive(Debug, Clone)]
pub struct HttpRequest {
    pub method: String,
    pub path: String,
    pub query: HashMap<String, String>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub body: Option<String>,
}

impl Reply {
    pub fn json(status: u16, body: impl Into<String>) -> Self {
        Self {
            status,
            body: Some(body.into()),
        }
    }

    pub fn empty(status: u16) -> Self {
        Self { status, body: None }
    }

    pub fn error(status: u16, msg: &str) -> Self {
        Self::json(status, serde_json::json!({ "error": msg }).to_string())
    }
}

pub struct HttpServer {
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
    addr: SocketAddr,
}

impl HttpServer {
    pub fn start<H>(bind: &str, n_workers: usize, handler: H) -> std::io::Result<Self>
    where
        H: Fn(&HttpRequest) -> Reply + Send + Sync + 'static,
    {
        // Accepted sockets inherit TCP_NODELAY from the listener. Without it a
        // body written after the headers waits out the peer's delayed ACK.
        let listener = std::net::TcpListener::bind(bind)?;
        socket2::SockRef::from(&listener).set_nodelay(true)?;
        let server = Server::from_listener(listener, None).map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("server is not bound to an IP socket"))?;
        let server = Arc::new(server);
        let handler = Arc::new(handler);
        let workers = (0..n_workers.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let handler = Arc::clone(&handler);
                std::thread::spawn(move || {
                    while let Ok(req) = server.recv() {
                        handle(req, handler.as_ref());
                    }
                })
            })
            .collect();
        Ok(Self {
            server,
            workers,
            addr,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("static header is valid")
}

fn handle<H: Fn(&HttpRequest) -> Reply>(mut req: tiny_http::Request, handler: &H) {
    let (path, query) = match req.url().split_once('?') {
        Some((p, q)) => (p.to_string(), q.to_string()),
        None => (req.url().to_string(), String::new()),
    };
    let query = url::form_urlencoded::parse(query.as_bytes())
        .into_owned()
        .collect();
    let mut body = String::new();
    let reply = if req.as_reader().read_to_string(&mut body).is_err() {
        Reply::error(400, "request body is not UTF-8")
    } else if req.method() == &tiny_http::Method::Options {
        Reply::empty(204)
    } else {
        handler(&HttpRequest {
            method: req.method().as_str().to_string(),
            path,
            query,
            body,
        })
    };
    let cors = [
        header("Access-Control-Allow-Origin", "*"),
        header("Access-Control-Allow-Methods", "GET, POST, OPTIONS"),
        header("Access-Control-Allow-Headers", "Content-Type"),
    ];
    let result = match reply.body {
        Some(body) => {
            let mut resp = Response::from_string(body)
                .with_status_code(reply.status)
                .with_header(header("Content-Type", "application/json; charset=utf-8"));
            for h in cors {
                resp.add_header(h);
            }
            req.respond(resp)
        }
        None => {
            let mut resp = Response::empty(reply.status);
            for h in cors {
                resp.add_header(h);
            }
            req.respond(resp)
        }
    };
    if let Err(e) = result {
        warn!("failed to send response: {e}");
    }
}
