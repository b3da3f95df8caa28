//! HTTP logits providers.
//!
//! Full access posts `{"model", "tokens", "positions"}` and expects
//! `{"logits": [[f64; vocab]; positions]}` back, the shape served by local
//! inference wrappers. Restricted access speaks the legacy completions
//! dialect: token-id prompt, `max_tokens: 1`, `logprobs: k` and a
//! `logit_bias` map, reading `choices[0].logprobs.top_logprobs[0]`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AccessMode, LogitsProvider, LogitsView, ModelError, ModelHandle, TokenId, Tokenizer, VocabTokenizer};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    Full,
    Restricted,
}

/// Connection settings. Holds the name of the variable carrying the bearer
/// token, never the token itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpSettings {
    pub endpoint: String,
    pub model_id: String,
    /// `builtin:code-v1` or a path to a JSON token list.
    #[serde(default = "default_tokenizer")]
    pub tokenizer: String,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_access")]
    pub access_mode: AccessKind,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_true")]
    pub supports_bias: bool,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_tokenizer() -> String {
    super::BUILTIN_TOKENIZER_ID.to_string()
}
fn default_access() -> AccessKind {
    AccessKind::Full
}
fn default_top_k() -> usize {
    20
}
fn default_true() -> bool {
    true
}
fn default_in_flight() -> usize {
    4
}
fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    3
}

impl HttpSettings {
    pub fn new(endpoint: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            tokenizer: default_tokenizer(),
            auth_env: None,
            access_mode: default_access(),
            top_k: default_top_k(),
            supports_bias: true,
            max_in_flight: default_in_flight(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
        }
    }

    pub fn access(&self) -> AccessMode {
        match self.access_mode {
            AccessKind::Full => AccessMode::FullLogits,
            AccessKind::Restricted => AccessMode::RestrictedTopk {
                k: self.top_k,
                supports_bias: self.supports_bias,
            },
        }
    }
}

pub fn load_tokenizer(source: &str) -> Result<Arc<VocabTokenizer>, ModelError> {
    if source == super::BUILTIN_TOKENIZER_ID {
        Ok(VocabTokenizer::builtin())
    } else {
        Ok(Arc::new(VocabTokenizer::from_vocab_file(&PathBuf::from(source))?))
    }
}

/// Counting semaphore bounding concurrent requests.
struct Throttle {
    slots: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Throttle);

impl Throttle {
    fn new(n: usize) -> Self {
        Self {
            slots: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.freed.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.slots.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpProvider {
    settings: HttpSettings,
    secret: Option<String>,
    tokenizer: Arc<VocabTokenizer>,
    handle: ModelHandle,
    client: reqwest::blocking::Client,
    throttle: Throttle,
    backoff: Duration,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("endpoint", &self.settings.endpoint)
            .field("model_id", &self.settings.model_id)
            .field("auth", &self.secret.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpProvider {
    /// Reads the bearer token from the variable named by `auth_env`, if any.
    pub fn new(settings: HttpSettings) -> Result<Self, ModelError> {
        let secret = match &settings.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ModelError::Config(format!("auth variable {var} is not set"))
            })?),
            None => None,
        };
        let tokenizer = load_tokenizer(&settings.tokenizer)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs.max(1)))
            .build()
            .map_err(|e| ModelError::Config(format!("cannot build HTTP client: {e}")))?;
        let handle = ModelHandle {
            model_id: settings.model_id.clone(),
            tokenizer_id: tokenizer.id().to_string(),
            access_mode: settings.access(),
        };
        Ok(Self {
            throttle: Throttle::new(settings.max_in_flight),
            settings,
            secret,
            tokenizer,
            handle,
            client,
            backoff: Duration::from_millis(200),
        })
    }

    /// Shortens the retry backoff, for tests against local servers.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn post(&self, body: &Value) -> Result<Value, ModelError> {
        let _permit = self.throttle.acquire();
        let mut last = String::new();
        for attempt in 0..=self.settings.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            let mut req = self.client.post(&self.settings.endpoint).json(body);
            if let Some(secret) = &self.secret {
                req = req.bearer_auth(secret);
            }
            match req.send() {
                Err(e) => last = format!("request failed: {}", e.without_url()),
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp
                            .json::<Value>()
                            .map_err(|e| ModelError::Response(format!("body is not JSON: {}", e.without_url())));
                    }
                    if status.as_u16() == 401 || status.as_u16() == 403 {
                        return Err(ModelError::Config(format!("endpoint rejected credentials ({status})")));
                    }
                    if status.as_u16() == 429 || status.is_server_error() {
                        last = format!("endpoint answered {status}");
                        continue;
                    }
                    return Err(ModelError::Response(format!("endpoint answered {status}")));
                }
            }
            log::debug!("attempt {} failed: {last}", attempt + 1);
        }
        Err(ModelError::Transport(format!(
            "{last} (after {} attempts)",
            self.settings.retries + 1
        )))
    }
}

impl LogitsProvider for HttpProvider {
    fn handle(&self) -> &ModelHandle {
        &self.handle
    }

    fn tokenizer(&self) -> Arc<dyn Tokenizer> {
        self.tokenizer.clone()
    }

    fn full_logits(&self, tokens: &[TokenId], positions: &[usize]) -> Result<Vec<LogitsView>, ModelError> {
        let body = json!({
            "model": self.settings.model_id,
            "tokens": tokens,
            "positions": positions,
        });
        let resp = self.post(&body)?;
        let rows: Vec<Vec<f64>> = serde_json::from_value(resp.get("logits").cloned().unwrap_or(Value::Null))
            .map_err(|e| ModelError::Response(format!("missing or malformed \"logits\": {e}")))?;
        if rows.len() != positions.len() {
            return Err(ModelError::Response(format!(
                "asked for {} positions, got {}",
                positions.len(),
                rows.len()
            )));
        }
        let vocab = self.tokenizer.vocab_size();
        if let Some(bad) = rows.iter().find(|r| r.len() != vocab) {
            return Err(ModelError::Response(format!(
                "logit row has {} entries, vocabulary has {vocab}",
                bad.len()
            )));
        }
        Ok(rows.into_iter().map(LogitsView::Full).collect())
    }

    fn top_logprobs(
        &self,
        prefix: &[TokenId],
        bias: &[(TokenId, f64)],
        k: usize,
    ) -> Result<LogitsView, ModelError> {
        let bias_map: BTreeMap<String, f64> = bias.iter().map(|&(t, b)| (t.to_string(), b)).collect();
        let body = json!({
            "model": self.settings.model_id,
            "prompt": prefix,
            "max_tokens": 1,
            "temperature": 0,
            "logprobs": k,
            "logit_bias": bias_map,
        });
        let resp = self.post(&body)?;
        let top = resp
            .pointer("/choices/0/logprobs/top_logprobs/0")
            .and_then(Value::as_object)
            .ok_or_else(|| ModelError::Response("missing choices[0].logprobs.top_logprobs[0]".into()))?;
        let mut out = Vec::with_capacity(top.len());
        for (text, lp) in top {
            // Strings outside the vocabulary cannot be candidates; a missing
            // candidate is reported as truncation by the caller.
            let Some(id) = self.tokenizer.lookup(text.as_bytes()) else {
                log::debug!("ignoring unknown token string {text:?}");
                continue;
            };
            let lp = lp
                .as_f64()
                .ok_or_else(|| ModelError::Response(format!("non-numeric logprob for {text:?}")))?;
            out.push((id, lp));
        }
        Ok(LogitsView::Partial(out))
    }
}
