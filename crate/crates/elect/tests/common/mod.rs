//! Loopback HTTP server for protocol tests.

#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use tiny_http::{Header, Response, Server};

pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn ok(body: impl Into<String>) -> Self {
        Self {
            status: 200,
            body: body.into(),
        }
    }

    pub fn status(status: u16, body: impl Into<String>) -> Self {
        Self {
            status,
            body: body.into(),
        }
    }
}

pub type Handler = dyn Fn(&str, &str, &str) -> Reply + Send + Sync;

/// Serves `handler(method, path, body)` on an ephemeral local port until
/// dropped.
pub struct Loopback {
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
    hits: Arc<AtomicUsize>,
    pub url: String,
}

impl Loopback {
    pub fn start(handler: impl Fn(&str, &str, &str) -> Reply + Send + Sync + 'static) -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind loopback"));
        let port = server.server_addr().to_ip().expect("ip listener").port();
        let handler: Arc<Handler> = Arc::new(handler);
        let hits = Arc::new(AtomicUsize::new(0));
        let workers = (0..4)
            .map(|_| {
                let (server, handler, hits) = (server.clone(), handler.clone(), hits.clone());
                std::thread::spawn(move || {
                    while let Ok(mut req) = server.recv() {
                        hits.fetch_add(1, Ordering::SeqCst);
                        let mut body = String::new();
                        let _ = req.as_reader().read_to_string(&mut body);
                        let reply = handler(req.method().as_str(), req.url(), &body);
                        let header = Header::from_bytes("content-type", "application/json").unwrap();
                        let resp = Response::from_string(reply.body)
                            .with_status_code(reply.status)
                            .with_header(header);
                        let _ = req.respond(resp);
                    }
                })
            })
            .collect();
        Self {
            server,
            workers,
            hits,
            url: format!("http://127.0.0.1:{port}"),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for Loopback {
    fn drop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

pub const HEALTH_OK: &str = r#"{"status":"ok","model_id":"loopback"}"#;

pub fn fixture(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
