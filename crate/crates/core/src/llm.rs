//! Text-generation backends: the backend contract, the deterministic mock
//! used for offline runs and tests, and the remote HTTP client with
//! exponential-backoff retry.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records::sha256_hex;

/// Generation parameters passed to a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: f64,
    pub num_generations: usize,
    pub max_tokens: usize,
    pub stop_sequences: Vec<String>,
    /// Consumed by the mock backend only; remote services ignore it.
    pub seed: u64,
}

impl GenParams {
    pub fn greedy(max_tokens: usize, seed: u64) -> Self {
        Self {
            temperature: 0.0,
            num_generations: 1,
            max_tokens,
            stop_sequences: default_stop_sequences(),
            seed,
        }
    }

    pub fn sampled(temperature: f64, num_generations: usize, max_tokens: usize, seed: u64) -> Self {
        Self {
            temperature,
            num_generations,
            max_tokens,
            stop_sequences: default_stop_sequences(),
            seed,
        }
    }

    /// Validates the fields and applies the greedy rule: temperature 0 forces
    /// a single generation.
    pub fn normalized(&self) -> Result<Self, BackendError> {
        if self.temperature < 0.0 || !self.temperature.is_finite() {
            return Err(BackendError::InvalidParams(format!(
                "temperature must be a non-negative number, got {}",
                self.temperature
            )));
        }
        if self.num_generations == 0 {
            return Err(BackendError::InvalidParams("num_generations must be positive".into()));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidParams("max_tokens must be positive".into()));
        }
        let mut params = self.clone();
        if params.temperature == 0.0 {
            params.num_generations = 1;
        }
        Ok(params)
    }
}

/// Default stop set: newline plus the `--` boundary marker.
pub fn default_stop_sequences() -> Vec<String> {
    vec!["\n".to_string(), "--".to_string()]
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempts: {reason}")]
    BackendUnavailable { attempts: u32, reason: String },
    #[error("quota exceeded: {0}")]
    QuotaExceeded(String),
    #[error("got {got} usable generations, wanted {wanted}")]
    ShortfallAfterRetries { got: usize, wanted: usize },
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
}

/// A text-generation service: takes a prompt and parameters, returns exactly
/// `num_generations` raw strings (oversampling or retrying internally when
/// the service under-delivers).
pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, BackendError>;

    /// Short tag recorded in description provenance.
    fn tag(&self) -> String;
}

/// Extra request rounds `generate` may spend replacing generations that came
/// back empty after truncation.
const EMPTY_RETRY_ROUNDS: usize = 3;

/// Drives a backend and post-processes its output: truncation at the first
/// stop-sequence occurrence (newline always counts) and at the character
/// budget, whitespace trimming, and re-requesting for generations that end up
/// empty. Returns exactly the requested number of descriptions.
pub fn generate(
    backend: &dyn LlmBackend,
    prompt: &str,
    params: &GenParams,
) -> Result<Vec<String>, BackendError> {
    let params = params.normalized()?;
    let wanted = params.num_generations;
    let mut out: Vec<String> = Vec::with_capacity(wanted);
    for round in 0..=EMPTY_RETRY_ROUNDS {
        let need = wanted - out.len();
        if need == 0 {
            break;
        }
        if round > 0 {
            log::debug!("re-requesting {need} generations dropped as empty (round {round})");
        }
        let mut batch_params = params.clone();
        batch_params.num_generations = need;
        // Shift the seed so mock retries do not reproduce the same empties.
        batch_params.seed = params.seed.wrapping_add(round as u64);
        let raw = backend.complete(prompt, &batch_params)?;
        for text in raw {
            if out.len() == wanted {
                break;
            }
            if let Some(clean) = postprocess(&text, &params) {
                out.push(clean);
            }
        }
    }
    if out.len() < wanted {
        return Err(BackendError::ShortfallAfterRetries { got: out.len(), wanted });
    }
    Ok(out)
}

/// Character budget standing in for the token budget when no tokenizer is
/// available: four characters per token.
fn char_budget(max_tokens: usize) -> usize {
    max_tokens.saturating_mul(4)
}

fn postprocess(raw: &str, params: &GenParams) -> Option<String> {
    let mut cut = raw.len();
    if let Some(i) = raw.find('\n') {
        cut = cut.min(i);
    }
    for stop in &params.stop_sequences {
        if stop.is_empty() {
            continue;
        }
        if let Some(i) = raw.find(stop.as_str()) {
            cut = cut.min(i);
        }
    }
    let mut text = &raw[..cut];
    let budget = char_budget(params.max_tokens);
    if text.chars().count() > budget {
        let (end, _) = text.char_indices().nth(budget).expect("index within bounds");
        text = &text[..end];
    }
    let text = text.trim();
    if text.is_empty() {
        None
    } else {
        Some(text.to_string())
    }
}

/// Deterministic offline backend. Output is a short template over the
/// prompt's target lemma plus a stable hash of `(prompt, seed, index)`, so
/// repeated runs are byte-identical and distinct classes get distinct text.
#[derive(Debug, Default, Clone)]
pub struct MockBackend;

impl MockBackend {
    pub fn new() -> Self {
        Self
    }

    /// The target block is the last `Class:` line of the prompt.
    fn target_lemma(prompt: &str) -> &str {
        prompt
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("Class: "))
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .unwrap_or("thing")
    }
}

impl LlmBackend for MockBackend {
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, BackendError> {
        let lemma = Self::target_lemma(prompt);
        let out = (0..params.num_generations)
            .map(|i| {
                let mut key = Vec::with_capacity(prompt.len() + 16);
                key.extend_from_slice(prompt.as_bytes());
                key.extend_from_slice(&params.seed.to_le_bytes());
                key.extend_from_slice(&(i as u64).to_le_bytes());
                let h = &sha256_hex(&key)[..8];
                format!("a {lemma} with feature-{h}")
            })
            .collect();
        Ok(out)
    }

    fn tag(&self) -> String {
        "mock".to_string()
    }
}

/// Backoff schedule for the remote backend.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    /// Exponential delay with ±25% jitter.
    fn delay(&self, attempt: u32) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << attempt.min(16));
        let capped = exp.min(self.max_delay);
        let jitter = rand::thread_rng().gen_range(0.75..=1.25);
        capped.mul_f64(jitter)
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    temperature: f64,
    max_tokens: usize,
    num_generations: usize,
    stop: &'a [String],
}

#[derive(Deserialize)]
struct CompletionResponse {
    generations: Vec<String>,
}

/// Minimal HTTP completion client: POST one JSON body, read back a
/// `generations` list. Any completion service can be adapted behind this
/// contract.
pub struct RemoteBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    auth_token: Option<String>,
    retry: RetryPolicy,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, auth_token: Option<String>) -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
            endpoint: endpoint.into(),
            auth_token,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// One service call with the retry schedule applied.
    fn request(&self, req: &CompletionRequest<'_>) -> Result<Vec<String>, BackendError> {
        let mut rate_limited = false;
        let mut last_reason = String::new();
        for attempt in 1..=self.retry.max_attempts {
            let mut builder = self.client.post(&self.endpoint).json(req);
            if let Some(token) = &self.auth_token {
                builder = builder.bearer_auth(token);
            }
            match builder.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: CompletionResponse = resp.json().map_err(|e| {
                            BackendError::BackendUnavailable {
                                attempts: attempt,
                                reason: format!("bad response body: {e}"),
                            }
                        })?;
                        if attempt > 1 {
                            log::info!("backend succeeded on attempt {attempt}");
                        }
                        return Ok(parsed.generations);
                    }
                    if status.as_u16() == 429 {
                        rate_limited = true;
                        last_reason = "rate limited (429)".to_string();
                    } else if status.is_server_error() {
                        rate_limited = false;
                        last_reason = format!("server error ({status})");
                    } else {
                        // Client errors other than 429 will not heal on retry.
                        return Err(BackendError::BackendUnavailable {
                            attempts: attempt,
                            reason: format!("request rejected ({status})"),
                        });
                    }
                }
                Err(e) => {
                    rate_limited = false;
                    last_reason = format!("transport error: {e}");
                }
            }
            if attempt < self.retry.max_attempts {
                let delay = self.retry.delay(attempt - 1);
                log::warn!(
                    "backend attempt {attempt}/{} failed ({last_reason}); retrying in {delay:?}",
                    self.retry.max_attempts
                );
                std::thread::sleep(delay);
            }
        }
        if rate_limited {
            Err(BackendError::QuotaExceeded(format!(
                "{last_reason} after {} attempts",
                self.retry.max_attempts
            )))
        } else {
            Err(BackendError::BackendUnavailable {
                attempts: self.retry.max_attempts,
                reason: last_reason,
            })
        }
    }
}

impl LlmBackend for RemoteBackend {
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, BackendError> {
        let wanted = params.num_generations;
        let mut out = Vec::with_capacity(wanted);
        // The service may under-deliver; top up until the contract holds.
        for _ in 0..=EMPTY_RETRY_ROUNDS {
            let need = wanted - out.len();
            if need == 0 {
                break;
            }
            let req = CompletionRequest {
                prompt,
                temperature: params.temperature,
                max_tokens: params.max_tokens,
                num_generations: need,
                stop: &params.stop_sequences,
            };
            let mut batch = self.request(&req)?;
            batch.truncate(need);
            if batch.is_empty() {
                break;
            }
            out.extend(batch);
        }
        if out.len() < wanted {
            return Err(BackendError::ShortfallAfterRetries { got: out.len(), wanted });
        }
        Ok(out)
    }

    fn tag(&self) -> String {
        format!("remote:{}", self.endpoint)
    }
}
