//! HTTP client for the model server, plus gateway selection.
//!
//! Endpoints (JSON bodies, UTF-8):
//!
//! | method | path             | request                  | response                      |
//! |--------|------------------|--------------------------|-------------------------------|
//! | POST   | `/v1/qg`         | `{context, answer}`      | `{question}`                  |
//! | POST   | `/v1/qg_boolean` | `{context}`              | `{question}`                  |
//! | POST   | `/v1/qa`         | `{context, question}`    | `{answerable, answer}`        |
//! | POST   | `/v1/paraphrase` | `{question, k}`          | `{questions: [..]}`           |
//! | GET    | `/v1/health`     |                          | `{status: "ok"}`              |
//!
//! 4xx answers are terminal for the record. Other non-200 answers, bodies that
//! do not parse and transport errors are retried with exponential backoff.
//! Successful response bodies are cached by a hash of the task and request.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use aquallm_core::gateway::{clean_paraphrases, require_non_empty, validate_question};
use aquallm_core::{GatewayError, MockGateway, ModelGateway, QaOutcome};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Base URL of the model server, or `mock` for the built-in mock.
    pub endpoint: String,
    /// Per-request timeout in seconds.
    pub timeout: f64,
    pub max_retries: u32,
    /// Delay before the first retry in seconds; doubles on each further retry.
    pub backoff_base: f64,
    pub cache_dir: Option<PathBuf>,
    pub max_in_flight: usize,
    /// Sent as `Authorization: Bearer <token>` when set.
    pub bearer_token: Option<String>,
    /// The server's QA endpoint answers yes/no questions with "yes".
    pub boolean_qa: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            endpoint: "mock".to_string(),
            timeout: 30.0,
            max_retries: 3,
            backoff_base: 0.5,
            cache_dir: None,
            max_in_flight: 4,
            bearer_token: None,
            boolean_qa: false,
        }
    }
}

impl GatewayConfig {
    pub fn is_mock(&self) -> bool {
        self.endpoint == "mock"
    }

    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        Duration::from_secs_f64(self.backoff_base * 2f64.powi(retry as i32))
    }
}

/// The configured gateway: the mock, or an HTTP client.
pub fn build_gateway(cfg: &GatewayConfig) -> Box<dyn ModelGateway + Send + Sync> {
    if cfg.is_mock() {
        Box::new(MockGateway)
    } else {
        Box::new(HttpGateway::new(cfg.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Qg,
    QgBoolean,
    Qa,
    Paraphrase,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Qg => "qg",
            Task::QgBoolean => "qg_boolean",
            Task::Qa => "qa",
            Task::Paraphrase => "paraphrase",
        }
    }
}

/// Hex SHA-256 of the task name and the request body.
pub fn cache_key(task: Task, body: &Value) -> String {
    let mut h = Sha256::new();
    h.update(task.name().as_bytes());
    h.update(b"\n");
    // Value objects are key-sorted, so this is canonical.
    h.update(body.to_string().as_bytes());
    hex::encode(h.finalize())
}

#[derive(Deserialize)]
struct QuestionResponse {
    question: String,
}

#[derive(Deserialize)]
struct QaResponse {
    answerable: bool,
    #[serde(default)]
    answer: String,
}

#[derive(Deserialize)]
struct ParaphraseResponse {
    questions: Vec<String>,
}

#[derive(Deserialize)]
struct HealthResponse {
    status: String,
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

pub struct HttpGateway {
    cfg: GatewayConfig,
    base: String,
    agent: ureq::Agent,
    memo: Mutex<HashMap<String, String>>,
    slots: Semaphore,
    sleep: Sleeper,
    requests: AtomicU64,
    tmp_counter: AtomicU64,
}

enum Attempt {
    Status(u16, String),
    Transport(String),
}

impl HttpGateway {
    pub fn new(cfg: GatewayConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpGateway {
            base: cfg.endpoint.trim_end_matches('/').to_string(),
            slots: Semaphore::new(cfg.max_in_flight.max(1)),
            cfg,
            agent,
            memo: Mutex::new(HashMap::new()),
            sleep: Box::new(std::thread::sleep),
            requests: AtomicU64::new(0),
            tmp_counter: AtomicU64::new(0),
        }
    }

    /// Replaces the backoff sleep, e.g. to record delays in tests.
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    /// HTTP requests sent so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn health(&self) -> Result<(), GatewayError> {
        let _permit = self.slots.acquire();
        self.requests.fetch_add(1, Ordering::Relaxed);
        match self.get("/v1/health") {
            Attempt::Status(200, body) => match serde_json::from_str::<HealthResponse>(&body) {
                Ok(h) if h.status == "ok" => Ok(()),
                Ok(h) => Err(GatewayError::Malformed(format!(
                    "health status {:?}",
                    h.status
                ))),
                Err(e) => Err(GatewayError::Malformed(e.to_string())),
            },
            Attempt::Status(status, body) => Err(GatewayError::Rejected {
                status,
                message: body,
            }),
            Attempt::Transport(message) => Err(GatewayError::Transport {
                attempts: 1,
                message,
            }),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn get(&self, path: &str) -> Attempt {
        let mut req = self.agent.get(self.url(path));
        if let Some(token) = &self.cfg.bearer_token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        finish(req.call())
    }

    fn post(&self, path: &str, payload: &str) -> Attempt {
        let mut req = self
            .agent
            .post(self.url(path))
            .header("Content-Type", "application/json");
        if let Some(token) = &self.cfg.bearer_token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        finish(req.send(payload))
    }

    fn cache_path(&self, key: &str) -> Option<PathBuf> {
        self.cfg
            .cache_dir
            .as_ref()
            .map(|d| d.join(format!("{key}.json")))
    }

    fn lookup<R: DeserializeOwned>(&self, key: &str) -> Option<R> {
        if let Some(raw) = self.memo.lock().unwrap().get(key) {
            return serde_json::from_str(raw).ok();
        }
        let raw = fs::read_to_string(self.cache_path(key)?).ok()?;
        let parsed = serde_json::from_str(&raw).ok()?;
        self.memo.lock().unwrap().insert(key.to_string(), raw);
        Some(parsed)
    }

    fn store(&self, key: &str, raw: String) {
        if let Some(path) = self.cache_path(key) {
            if let Err(e) = self.write_atomic(&path, &raw) {
                log::warn!("could not write cache entry {}: {e}", path.display());
            }
        }
        self.memo.lock().unwrap().insert(key.to_string(), raw);
    }

    fn write_atomic(&self, path: &Path, raw: &str) -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = path.with_extension(format!("tmp.{}.{n}", std::process::id()));
        fs::write(&tmp, raw)?;
        fs::rename(&tmp, path)
    }

    /// Cached request with retries. `check` validates the parsed response;
    /// responses that fail it are reported as malformed and not cached.
    fn call<R, T>(
        &self,
        task: Task,
        path: &str,
        body: Value,
        check: impl Fn(R) -> Result<T, String>,
    ) -> Result<T, GatewayError>
    where
        R: DeserializeOwned,
    {
        let key = cache_key(task, &body);
        if let Some(r) = self.lookup::<R>(&key) {
            return check(r).map_err(GatewayError::Malformed);
        }
        let payload = body.to_string();
        let attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                (self.sleep)(self.cfg.backoff(attempt - 1));
            }
            let outcome = {
                let _permit = self.slots.acquire();
                self.requests.fetch_add(1, Ordering::Relaxed);
                self.post(path, &payload)
            };
            match outcome {
                Attempt::Status(200, raw) => match serde_json::from_str::<R>(&raw) {
                    Ok(r) => {
                        let value = check(r).map_err(GatewayError::Malformed)?;
                        self.store(&key, raw);
                        return Ok(value);
                    }
                    Err(e) => last = format!("unparseable response: {e}"),
                },
                Attempt::Status(status, raw) if (400..500).contains(&status) => {
                    return Err(GatewayError::Rejected {
                        status,
                        message: truncate(&raw),
                    });
                }
                Attempt::Status(status, raw) => {
                    last = format!("status {status}: {}", truncate(&raw))
                }
                Attempt::Transport(message) => last = message,
            }
            log::debug!(
                "{} attempt {} of {attempts} failed: {last}",
                task.name(),
                attempt + 1
            );
        }
        Err(GatewayError::Transport {
            attempts,
            message: last,
        })
    }
}

fn finish(result: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Attempt {
    match result {
        Ok(mut resp) => {
            let status = resp.status().as_u16();
            match resp.body_mut().read_to_string() {
                Ok(body) => Attempt::Status(status, body),
                Err(e) => Attempt::Transport(e.to_string()),
            }
        }
        Err(e) => Attempt::Transport(e.to_string()),
    }
}

fn truncate(s: &str) -> String {
    const MAX: usize = 200;
    match s.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

fn checked_question(r: QuestionResponse) -> Result<String, String> {
    validate_question(&r.question).map_err(|e| e.to_string())
}

impl ModelGateway for HttpGateway {
    fn generate_question(&self, context: &str, answer: &str) -> Result<String, GatewayError> {
        require_non_empty("context", context)?;
        require_non_empty("answer", answer)?;
        let body = json!({ "context": context, "answer": answer });
        self.call(Task::Qg, "/v1/qg", body, checked_question)
    }

    fn generate_boolean_question(&self, context: &str) -> Result<String, GatewayError> {
        require_non_empty("context", context)?;
        let body = json!({ "context": context });
        self.call(Task::QgBoolean, "/v1/qg_boolean", body, checked_question)
    }

    fn answer_question(&self, context: &str, question: &str) -> Result<QaOutcome, GatewayError> {
        require_non_empty("context", context)?;
        require_non_empty("question", question)?;
        let body = json!({ "context": context, "question": question });
        self.call(Task::Qa, "/v1/qa", body, |r: QaResponse| {
            let answer = r.answer.trim();
            Ok(if r.answerable && !answer.is_empty() {
                QaOutcome::answered(answer)
            } else {
                QaOutcome::unanswerable()
            })
        })
    }

    fn paraphrase_question(&self, question: &str, k: usize) -> Result<Vec<String>, GatewayError> {
        require_non_empty("question", question)?;
        if k == 0 {
            return Err(GatewayError::InvalidInput("k must be at least 1".into()));
        }
        let body = json!({ "question": question, "k": k });
        self.call(
            Task::Paraphrase,
            "/v1/paraphrase",
            body,
            |r: ParaphraseResponse| Ok(clean_paraphrases(question, r.questions, k)),
        )
    }

    fn supports_boolean_qa(&self) -> bool {
        self.cfg.boolean_qa
    }
}
