//! Blocking HTTP client for embedding services: wraps each question in the
//! configured system prompt, caches vectors on disk keyed by (model,
//! prompt, question), bounds request concurrency, and retries transient
//! failures with exponential backoff. Vectors come back raw; normalization
//! happens downstream.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use dsxray_core::{EmbeddingRecord, Sample};

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid embed config: {reason}")]
    Config { reason: String },
    #[error("sample '{id}': empty question")]
    EmptyQuestion { id: String },
    #[error("request for sample(s) {ids} failed after {attempts} attempt(s): {message}")]
    Transport { ids: String, attempts: u32, message: String },
    #[error("sample '{id}': response dimension {found} conflicts with established dimension {expected}")]
    DimensionDrift { id: String, expected: usize, found: usize },
    #[error("sample(s) {ids}: malformed response: {message}")]
    ResponseShape { ids: String, message: String },
    #[error("cache file {path} is unreadable as a vector: {message}")]
    CacheCorrupt { path: String, message: String },
    #[error("cache I/O at {path}: {source}")]
    CacheIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ClientError {
    pub fn is_validation(&self) -> bool {
        matches!(self, ClientError::Config { .. } | ClientError::EmptyQuestion { .. })
    }
}

/// Request/response JSON shape spoken by the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireShape {
    /// One question per request: {model, messages} -> {embedding: [...]}.
    Messages,
    /// Batched: {model, input: [...]} -> {data: [{embedding: [...]}]}.
    OpenAi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub endpoint_url: String,
    pub model_id: String,
    /// Prepended as the system message of every prompt.
    pub system_prompt: String,
    /// Questions per request; only the `OpenAi` wire shape batches.
    pub batch_size: usize,
    /// Concurrent outstanding requests, at most.
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    /// Extra attempts after the first failure; at most 10.
    pub retry_limit: u32,
    pub cache_dir: PathBuf,
    pub wire: WireShape,
    /// Name of the environment variable holding the bearer token; no
    /// Authorization header when absent.
    pub auth_env: Option<String>,
    /// First backoff delay; doubles per retry, capped at 32x. Lowered in
    /// tests; leave at 1000 in production.
    pub backoff_base_ms: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            endpoint_url: String::new(),
            model_id: String::new(),
            system_prompt: String::new(),
            batch_size: 16,
            max_in_flight: 4,
            timeout_secs: 60,
            retry_limit: 3,
            cache_dir: PathBuf::from(".embed-cache"),
            wire: WireShape::Messages,
            auth_env: None,
            backoff_base_ms: 1000,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| Err(ClientError::Config { reason: reason.into() });
        if self.endpoint_url.is_empty() {
            return fail("endpoint_url is empty");
        }
        if self.model_id.is_empty() {
            return fail("model_id is empty");
        }
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1");
        }
        if self.max_in_flight < 1 {
            return fail("max_in_flight must be at least 1");
        }
        if self.retry_limit > 10 {
            return fail("retry_limit must be at most 10");
        }
        if self.timeout_secs == 0 {
            return fail("timeout_secs must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Message {
    pub role: &'static str,
    pub content: String,
}

/// The two-message prompt wrapped around every question: the configured
/// system prompt, then the raw question, untouched.
pub fn build_prompt(config: &EmbedConfig, sample: &Sample) -> Vec<Message> {
    vec![
        Message { role: "system", content: config.system_prompt.clone() },
        Message { role: "user", content: sample.question.clone() },
    ]
}

/// Stable hex digest identifying one (model, system prompt, question)
/// triple in the cache.
pub fn cache_key(config: &EmbedConfig, question: &str) -> String {
    let triple =
        serde_json::to_string(&[&config.model_id, &config.system_prompt, question]).unwrap();
    let digest = Sha256::digest(triple.as_bytes());
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn cache_path(config: &EmbedConfig, digest: &str) -> PathBuf {
    config.cache_dir.join(&digest[..2]).join(format!("{digest}.json"))
}

fn read_cache(path: &Path) -> Result<Option<Vec<f64>>> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(ClientError::CacheIo { path: path.display().to_string(), source: e }),
    };
    serde_json::from_slice::<Vec<f64>>(&bytes)
        .map(Some)
        .map_err(|e| ClientError::CacheCorrupt {
            path: path.display().to_string(),
            message: e.to_string(),
        })
}

/// Atomic: the vector lands under its final name completely or not at all.
fn write_cache(path: &Path, vector: &[f64]) -> Result<()> {
    let dir = path.parent().expect("cache paths have parents");
    let as_io = |e: std::io::Error| ClientError::CacheIo { path: path.display().to_string(), source: e };
    std::fs::create_dir_all(dir).map_err(as_io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(as_io)?;
    serde_json::to_writer(&mut tmp, vector)
        .map_err(|e| as_io(std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    tmp.persist(path).map_err(|e| as_io(e.error))?;
    Ok(())
}

/// One network request: either a single prompt or an OpenAi-shape batch.
struct Job {
    /// Positions into the input sample slice.
    indices: Vec<usize>,
}

/// Embeds `samples` in input order. Cached questions are served from disk
/// without touching the network; the rest are fetched with at most
/// `max_in_flight` concurrent requests and written back to the cache. All
/// vectors (cached and fresh) must agree on one dimension.
pub fn embed_batch(config: &EmbedConfig, samples: &[Sample]) -> Result<Vec<EmbeddingRecord>> {
    config.validate()?;
    for s in samples {
        if s.question.is_empty() {
            return Err(ClientError::EmptyQuestion { id: s.id.clone() });
        }
    }

    let digests: Vec<String> = samples.iter().map(|s| cache_key(config, &s.question)).collect();
    let mut vectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(samples.len());
    let mut misses: Vec<usize> = Vec::new();
    for (i, digest) in digests.iter().enumerate() {
        let cached = read_cache(&cache_path(config, digest))?;
        if cached.is_none() {
            misses.push(i);
        }
        vectors.push(cached);
    }

    if !misses.is_empty() {
        let auth = bearer_token(config)?;
        let jobs = plan_jobs(config, &misses);
        let fetched = run_jobs(config, samples, &jobs, auth.as_deref())?;
        for (i, vector) in fetched {
            write_cache(&cache_path(config, &digests[i]), &vector)?;
            vectors[i] = Some(vector);
        }
    }

    let mut records = Vec::with_capacity(samples.len());
    let mut expected: Option<(usize, usize)> = None; // (dims, row)
    for (i, (sample, vector)) in samples.iter().zip(vectors).enumerate() {
        let vector = vector.expect("every sample resolved from cache or network");
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(ClientError::ResponseShape {
                ids: sample.id.clone(),
                message: "vector contains a non-finite component".into(),
            });
        }
        match expected {
            None => expected = Some((vector.len(), i)),
            Some((dims, _)) if dims != vector.len() => {
                return Err(ClientError::DimensionDrift {
                    id: sample.id.clone(),
                    expected: dims,
                    found: vector.len(),
                });
            }
            Some(_) => {}
        }
        records.push(EmbeddingRecord { id: sample.id.clone(), embedding: vector });
    }
    Ok(records)
}

fn bearer_token(config: &EmbedConfig) -> Result<Option<String>> {
    match &config.auth_env {
        None => Ok(None),
        Some(name) => match std::env::var(name) {
            Ok(token) if !token.is_empty() => Ok(Some(token)),
            _ => Err(ClientError::Config {
                reason: format!("auth environment variable '{name}' is not set"),
            }),
        },
    }
}

fn plan_jobs(config: &EmbedConfig, misses: &[usize]) -> Vec<Job> {
    let per_job = match config.wire {
        WireShape::Messages => 1, // this shape carries one prompt per request
        WireShape::OpenAi => config.batch_size,
    };
    misses.chunks(per_job).map(|c| Job { indices: c.to_vec() }).collect()
}

fn run_jobs(
    config: &EmbedConfig,
    samples: &[Sample],
    jobs: &[Job],
    auth: Option<&str>,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(config.timeout_secs))
        .build()
        .map_err(|e| ClientError::Config { reason: format!("http client: {e}") })?;

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let outcomes: Mutex<Vec<Option<Result<Vec<(usize, Vec<f64>)>>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let workers = config.max_in_flight.min(jobs.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::SeqCst);
                if j >= jobs.len() || abort.load(Ordering::SeqCst) {
                    break;
                }
                let outcome = run_one_job(config, &client, samples, &jobs[j], auth);
                if outcome.is_err() {
                    abort.store(true, Ordering::SeqCst);
                }
                outcomes.lock().unwrap()[j] = Some(outcome);
            });
        }
    });

    let mut fetched = Vec::new();
    for outcome in outcomes.into_inner().unwrap() {
        match outcome {
            // Jobs skipped after an abort never ran; the error below explains why.
            None => continue,
            Some(Ok(batch)) => fetched.extend(batch),
            Some(Err(e)) => return Err(e),
        }
    }
    Ok(fetched)
}

fn job_ids(samples: &[Sample], job: &Job) -> String {
    job.indices.iter().map(|&i| samples[i].id.as_str()).collect::<Vec<_>>().join(", ")
}

fn run_one_job(
    config: &EmbedConfig,
    client: &reqwest::blocking::Client,
    samples: &[Sample],
    job: &Job,
    auth: Option<&str>,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let body = match config.wire {
        WireShape::Messages => serde_json::json!({
            "model": config.model_id,
            "messages": build_prompt(config, &samples[job.indices[0]]),
        }),
        WireShape::OpenAi => serde_json::json!({
            "model": config.model_id,
            "input": job.indices.iter().map(|&i| samples[i].question.as_str()).collect::<Vec<_>>(),
        }),
    };

    let mut attempts = 0u32;
    let mut last_error = String::new();
    while attempts <= config.retry_limit {
        attempts += 1;
        if attempts > 1 {
            let exp = (attempts - 2).min(5); // 1x, 2x, 4x, ... capped at 32x
            std::thread::sleep(Duration::from_millis(config.backoff_base_ms << exp));
        }

        let mut request = client.post(&config.endpoint_url).json(&body);
        if let Some(token) = auth {
            request = request.bearer_auth(token);
        }
        match request.send() {
            Err(e) => last_error = format!("transport: {e}"),
            Ok(resp) => {
                let status = resp.status();
                if status.is_success() {
                    let value: serde_json::Value = resp.json().map_err(|e| {
                        ClientError::ResponseShape {
                            ids: job_ids(samples, job),
                            message: format!("invalid JSON: {e}"),
                        }
                    })?;
                    return parse_response(config, samples, job, &value);
                }
                let retryable = status.is_server_error() || status.as_u16() == 429;
                last_error = format!("http status {}", status.as_u16());
                if !retryable {
                    break;
                }
            }
        }
    }
    Err(ClientError::Transport { ids: job_ids(samples, job), attempts, message: last_error })
}

fn parse_response(
    config: &EmbedConfig,
    samples: &[Sample],
    job: &Job,
    value: &serde_json::Value,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let shape_err = |message: String| ClientError::ResponseShape { ids: job_ids(samples, job), message };
    let as_vector = |v: &serde_json::Value| -> Option<Vec<f64>> {
        v.as_array()?.iter().map(|x| x.as_f64()).collect()
    };

    match config.wire {
        WireShape::Messages => {
            let vector = value
                .get("embedding")
                .and_then(as_vector)
                .ok_or_else(|| shape_err("missing or non-numeric 'embedding' array".into()))?;
            Ok(vec![(job.indices[0], vector)])
        }
        WireShape::OpenAi => {
            let data = value
                .get("data")
                .and_then(|d| d.as_array())
                .ok_or_else(|| shape_err("missing 'data' array".into()))?;
            if data.len() != job.indices.len() {
                return Err(shape_err(format!(
                    "requested {} embeddings, got {}",
                    job.indices.len(),
                    data.len()
                )));
            }
            let mut out = Vec::with_capacity(data.len());
            for (slot, item) in job.indices.iter().zip(data) {
                let vector = item
                    .get("embedding")
                    .and_then(as_vector)
                    .ok_or_else(|| shape_err("entry missing 'embedding' array".into()))?;
                out.push((*slot, vector));
            }
            Ok(out)
        }
    }
}

/// Summary of where a batch's vectors came from; computed by re-checking
/// the cache, useful for operator logging.
pub fn cache_stats(config: &EmbedConfig, samples: &[Sample]) -> Result<CacheStats> {
    let mut hits = 0;
    for s in samples {
        if read_cache(&cache_path(config, &cache_key(config, &s.question)))?.is_some() {
            hits += 1;
        }
    }
    Ok(CacheStats { hits, misses: samples.len() - hits })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}
