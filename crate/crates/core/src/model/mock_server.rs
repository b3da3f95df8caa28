//! A local HTTP front for [`MockModel`], speaking both wire formats of
//! [`HttpProvider`](super::http::HttpProvider). Used to exercise the HTTP
//! client without a real inference server.
//!
//! `POST /logits` serves full access; `POST /v1/completions` serves
//! restricted access. Any other path answers 404.

use std::collections::HashMap;
use std::io;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Deserialize;
use serde_json::{json, Value};

use super::mock::MockModel;
use super::{LogitsProvider, LogitsView, TokenId};

pub struct MockServer {
    server: Arc<tiny_http::Server>,
    addr: String,
    failures: Arc<AtomicUsize>,
    requests: Arc<AtomicUsize>,
    worker: Option<JoinHandle<()>>,
}

#[derive(Deserialize)]
struct FullRequest {
    tokens: Vec<TokenId>,
    positions: Vec<usize>,
}

#[derive(Deserialize)]
struct CompletionRequest {
    prompt: Vec<TokenId>,
    logprobs: usize,
    #[serde(default)]
    logit_bias: HashMap<String, f64>,
}

impl MockServer {
    /// Binds an ephemeral localhost port. With `token` set, requests must
    /// carry `Authorization: Bearer <token>`.
    pub fn start(seed: u64, token: Option<String>) -> io::Result<Self> {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").map_err(io::Error::other)?);
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("server has no IP address"))?
            .to_string();
        let failures = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(AtomicUsize::new(0));
        let worker = {
            let server = server.clone();
            let failures = failures.clone();
            let requests = requests.clone();
            let model = MockModel::new(seed);
            std::thread::spawn(move || {
                for req in server.incoming_requests() {
                    requests.fetch_add(1, Ordering::SeqCst);
                    serve(req, &model, token.as_deref(), &failures);
                }
            })
        };
        Ok(Self {
            server,
            addr,
            failures,
            requests,
            worker: Some(worker),
        })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    /// Makes the next `n` requests answer 503.
    pub fn fail_next(&self, n: usize) {
        self.failures.store(n, Ordering::SeqCst);
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn respond(req: tiny_http::Request, status: u16, body: Value) {
    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
    let resp = tiny_http::Response::from_string(body.to_string())
        .with_status_code(status)
        .with_header(header);
    let _ = req.respond(resp);
}

fn serve(mut req: tiny_http::Request, model: &MockModel, token: Option<&str>, failures: &AtomicUsize) {
    if failures
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok()
    {
        return respond(req, 503, json!({"error": "injected failure"}));
    }
    if let Some(token) = token {
        let expected = format!("Bearer {token}");
        let ok = req
            .headers()
            .iter()
            .any(|h| h.field.equiv("Authorization") && h.value.as_str() == expected);
        if !ok {
            return respond(req, 401, json!({"error": "unauthorized"}));
        }
    }
    let mut body = String::new();
    if req.as_reader().read_to_string(&mut body).is_err() {
        return respond(req, 400, json!({"error": "unreadable body"}));
    }
    let url = req.url().to_string();
    let result = match url.as_str() {
        "/logits" => full(model, &body),
        "/v1/completions" => completion(model, &body),
        _ => return respond(req, 404, json!({"error": "not found"})),
    };
    match result {
        Ok(v) => respond(req, 200, v),
        Err(e) => respond(req, 400, json!({"error": e})),
    }
}

fn full(model: &MockModel, body: &str) -> Result<Value, String> {
    let r: FullRequest = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let views = model.full_logits(&r.tokens, &r.positions).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<f64>> = views
        .into_iter()
        .map(|v| match v {
            LogitsView::Full(s) => s,
            LogitsView::Partial(_) => unreachable!("mock full logits are full"),
        })
        .collect();
    Ok(json!({ "logits": rows }))
}

fn completion(model: &MockModel, body: &str) -> Result<Value, String> {
    let r: CompletionRequest = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let mut bias = Vec::with_capacity(r.logit_bias.len());
    for (k, v) in &r.logit_bias {
        bias.push((k.parse::<TokenId>().map_err(|e| format!("bad bias key {k:?}: {e}"))?, *v));
    }
    let view = model
        .top_logprobs(&r.prompt, &bias, r.logprobs)
        .map_err(|e| e.to_string())?;
    let LogitsView::Partial(top) = view else {
        unreachable!("mock top-k is partial")
    };
    let tok = model.tokenizer();
    let map: serde_json::Map<String, Value> = top
        .iter()
        .map(|&(t, lp)| (tok.token_text(t), json!(lp)))
        .collect();
    let first = top.first().map(|&(t, _)| tok.token_text(t)).unwrap_or_default();
    Ok(json!({
        "object": "text_completion",
        "choices": [{
            "index": 0,
            "text": first,
            "logprobs": { "tokens": [first], "top_logprobs": [map] },
        }],
    }))
}
