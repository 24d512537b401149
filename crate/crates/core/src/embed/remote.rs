//! HTTP embedding client: batched requests, bounded retries with
//! exponential backoff, write-through cache, and a configurable JSON shape
//! so any OpenAI-style endpoint works.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::ParallelCorpus;
use crate::error::{Error, Result};

use super::cache::{cache_key, EmbeddingCache};
use super::{EmbeddingSet, EmbeddingVector};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Scheme + host, e.g. `https://api.openai.com`.
    pub base_url: String,
    pub path: String,
    /// Request JSON field carrying the model id.
    pub model_field: String,
    /// Request JSON field carrying the text batch.
    pub input_field: String,
    /// Top-level response field holding the per-text array.
    pub data_field: String,
    /// Field inside each array element holding the float vector.
    pub embedding_field: String,
    pub auth_header: String,
    pub auth_prefix: String,
    /// Name of the environment variable holding the credential. The value
    /// never appears in flags or config files.
    pub credential_env: String,
    pub batch_size: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    /// Maximum concurrent in-flight requests.
    pub concurrency: usize,
    pub timeout_ms: u64,
    /// Required vector dimension; a mismatching response is a contract
    /// error.
    pub expected_dim: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: String::new(),
            path: "/v1/embeddings".into(),
            model_field: "model".into(),
            input_field: "input".into(),
            data_field: "data".into(),
            embedding_field: "embedding".into(),
            auth_header: "Authorization".into(),
            auth_prefix: "Bearer ".into(),
            credential_env: "STYLEVEC_API_KEY".into(),
            batch_size: 64,
            max_retries: 5,
            backoff_ms: 250,
            concurrency: 4,
            timeout_ms: 60_000,
            expected_dim: 1536,
        }
    }
}

struct Batch {
    /// Positions in the caller's text list.
    positions: Vec<usize>,
    texts: Vec<String>,
}

/// Embed `texts` in order. Cache hits are served locally; misses are
/// batched, fetched with retries, and written through the cache.
pub fn embed_remote(
    texts: &[String],
    model_id: &str,
    cfg: &RemoteConfig,
    cache: &EmbeddingCache,
) -> Result<Vec<EmbeddingVector>> {
    if texts.is_empty() {
        return Err(Error::Contract("embed_remote: empty text list".into()));
    }
    if cfg.base_url.is_empty() {
        return Err(Error::Config("remote embedding: base_url is empty".into()));
    }
    // Credential check happens before any network traffic.
    let credential = std::env::var(&cfg.credential_env).map_err(|_| {
        Error::Config(format!(
            "credential environment variable `{}` is not set",
            cfg.credential_env
        ))
    })?;

    let mut results: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
    let mut misses: Vec<usize> = Vec::new();
    for (i, text) in texts.iter().enumerate() {
        let key = cache_key(model_id, text);
        match cache.get(&key)? {
            Some(values) => {
                if values.len() != cfg.expected_dim {
                    return Err(Error::Contract(format!(
                        "cached vector has dim {}, expected {}",
                        values.len(),
                        cfg.expected_dim
                    )));
                }
                results[i] = Some(EmbeddingVector::from_f32(&values)?);
            }
            None => misses.push(i),
        }
    }

    if misses.is_empty() {
        return Ok(results.into_iter().map(|v| v.expect("cache hit")).collect());
    }

    let batch_size = cfg.batch_size.max(1);
    let batches: Vec<Batch> = misses
        .chunks(batch_size)
        .map(|chunk| Batch {
            positions: chunk.to_vec(),
            texts: chunk.iter().map(|&i| texts[i].clone()).collect(),
        })
        .collect();

    let next_batch = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let collected: Mutex<Vec<Option<Vec<EmbeddingVector>>>> =
        Mutex::new((0..batches.len()).map(|_| None).collect());
    let first_error: Mutex<Option<Error>> = Mutex::new(None);

    let workers = cfg.concurrency.max(1).min(batches.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let agent = ureq::AgentBuilder::new()
                    .timeout(Duration::from_millis(cfg.timeout_ms))
                    .build();
                loop {
                    if failed.load(Ordering::SeqCst) {
                        return;
                    }
                    let idx = next_batch.fetch_add(1, Ordering::SeqCst);
                    if idx >= batches.len() {
                        return;
                    }
                    match fetch_batch(&agent, &batches[idx], model_id, cfg, &credential, cache) {
                        Ok(vectors) => {
                            collected.lock().expect("collect lock")[idx] = Some(vectors);
                        }
                        Err(e) => {
                            failed.store(true, Ordering::SeqCst);
                            let mut slot = first_error.lock().expect("error lock");
                            if slot.is_none() {
                                *slot = Some(e);
                            }
                            return;
                        }
                    }
                }
            });
        }
    });

    if let Some(e) = first_error.into_inner().expect("error lock").take() {
        return Err(e);
    }
    let collected = collected.into_inner().expect("collect lock");
    for (batch, vectors) in batches.iter().zip(collected) {
        let vectors = vectors.ok_or_else(|| Error::Contract("batch left unfilled".into()))?;
        for (&pos, v) in batch.positions.iter().zip(vectors) {
            results[pos] = Some(v);
        }
    }
    Ok(results
        .into_iter()
        .map(|v| v.expect("all positions filled"))
        .collect())
}

fn fetch_batch(
    agent: &ureq::Agent,
    batch: &Batch,
    model_id: &str,
    cfg: &RemoteConfig,
    credential: &str,
    cache: &EmbeddingCache,
) -> Result<Vec<EmbeddingVector>> {
    let url = format!("{}{}", cfg.base_url.trim_end_matches('/'), cfg.path);
    let body = serde_json::json!({
        &cfg.model_field: model_id,
        &cfg.input_field: batch.texts,
    });

    let mut attempt_log = Vec::new();
    let attempts = cfg.max_retries.max(1);
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(cfg.backoff_ms << (attempt - 1).min(8)));
        }
        let response = agent
            .post(&url)
            .set(&cfg.auth_header, &format!("{}{credential}", cfg.auth_prefix))
            .send_json(body.clone());
        match response {
            Ok(resp) => {
                let json: serde_json::Value = resp
                    .into_json()
                    .map_err(|e| Error::Remote {
                        attempts: attempt + 1,
                        message: format!("invalid JSON response: {e}"),
                        log: attempt_log.join("\n"),
                    })?;
                return parse_batch_response(&json, batch, model_id, cfg, cache);
            }
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                attempt_log.push(format!("attempt {}: HTTP {code}", attempt + 1));
            }
            Err(ureq::Error::Status(code, resp)) => {
                let detail = resp.into_string().unwrap_or_default();
                return Err(Error::Remote {
                    attempts: attempt + 1,
                    message: format!("HTTP {code}: {}", detail.chars().take(200).collect::<String>()),
                    log: attempt_log.join("\n"),
                });
            }
            Err(ureq::Error::Transport(t)) => {
                attempt_log.push(format!("attempt {}: {t}", attempt + 1));
            }
        }
    }
    Err(Error::Remote {
        attempts,
        message: "retries exhausted".into(),
        log: attempt_log.join("\n"),
    })
}

fn parse_batch_response(
    json: &serde_json::Value,
    batch: &Batch,
    model_id: &str,
    cfg: &RemoteConfig,
    cache: &EmbeddingCache,
) -> Result<Vec<EmbeddingVector>> {
    let data = json
        .get(&cfg.data_field)
        .and_then(|d| d.as_array())
        .ok_or_else(|| Error::Remote {
            attempts: 1,
            message: format!("response has no `{}` array", cfg.data_field),
            log: String::new(),
        })?;
    if data.len() != batch.texts.len() {
        return Err(Error::Remote {
            attempts: 1,
            message: format!(
                "response carries {} vectors for {} inputs",
                data.len(),
                batch.texts.len()
            ),
            log: String::new(),
        });
    }
    let mut vectors = Vec::with_capacity(data.len());
    for (item, text) in data.iter().zip(&batch.texts) {
        let raw = item
            .get(&cfg.embedding_field)
            .and_then(|e| e.as_array())
            .ok_or_else(|| Error::Remote {
                attempts: 1,
                message: format!("response element has no `{}` array", cfg.embedding_field),
                log: String::new(),
            })?;
        if raw.len() != cfg.expected_dim {
            return Err(Error::Contract(format!(
                "service returned {}-dim vector, configured dimension is {}",
                raw.len(),
                cfg.expected_dim
            )));
        }
        let values: Vec<f32> = raw
            .iter()
            .map(|v| v.as_f64().unwrap_or(f64::NAN) as f32)
            .collect();
        cache.put(&cache_key(model_id, text), &values)?;
        vectors.push(EmbeddingVector::from_f32(&values)?);
    }
    Ok(vectors)
}

/// Embed every (version, verse) text of a corpus and assemble the set.
pub fn embed_corpus_remote(
    corpus: &ParallelCorpus,
    model_id: &str,
    cfg: &RemoteConfig,
    cache: &EmbeddingCache,
) -> Result<EmbeddingSet> {
    let mut set = EmbeddingSet::new(corpus, cfg.expected_dim, model_id);
    for (vi, version) in corpus.versions.iter().enumerate() {
        let texts: Vec<String> = corpus.verses.iter().map(|v| v.texts[vi].clone()).collect();
        let vectors = embed_remote(&texts, model_id, cfg, cache)?;
        set.insert_version(version, vectors)?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::AtomicU32;
    use std::sync::Arc;

    /// Minimal HTTP/1.1 stub. Each connection gets one request; the handler
    /// maps (request ordinal, request JSON) to (status, response JSON).
    fn stub_server(
        handler: impl Fn(u32, &serde_json::Value) -> (u16, serde_json::Value) + Send + Sync + 'static,
    ) -> (String, Arc<AtomicU32>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let counter = Arc::new(AtomicU32::new(0));
        let counter_clone = counter.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut buf = Vec::new();
                let mut tmp = [0u8; 1024];
                let body_start;
                loop {
                    let n = stream.read(&mut tmp).unwrap_or(0);
                    if n == 0 {
                        return;
                    }
                    buf.extend_from_slice(&tmp[..n]);
                    if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                        body_start = pos + 4;
                        break;
                    }
                }
                let header = String::from_utf8_lossy(&buf[..body_start]).to_string();
                let content_length: usize = header
                    .lines()
                    .find_map(|l| {
                        let (k, v) = l.split_once(':')?;
                        k.trim()
                            .eq_ignore_ascii_case("content-length")
                            .then(|| v.trim().parse().ok())?
                    })
                    .unwrap_or(0);
                while buf.len() < body_start + content_length {
                    let n = stream.read(&mut tmp).unwrap_or(0);
                    if n == 0 {
                        break;
                    }
                    buf.extend_from_slice(&tmp[..n]);
                }
                let body: serde_json::Value =
                    serde_json::from_slice(&buf[body_start..]).unwrap_or(serde_json::Value::Null);
                let ordinal = counter_clone.fetch_add(1, Ordering::SeqCst);
                let (status, reply) = handler(ordinal, &body);
                let reply = reply.to_string();
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        (format!("http://{addr}"), counter)
    }

    fn ok_embeddings(body: &serde_json::Value, dim: usize) -> serde_json::Value {
        let inputs = body["input"].as_array().cloned().unwrap_or_default();
        let data: Vec<serde_json::Value> = inputs
            .iter()
            .enumerate()
            .map(|(i, text)| {
                let len = text.as_str().map_or(0, |t| t.len()) as f64;
                let vec: Vec<f64> = (0..dim).map(|j| (i as f64 + 1.0) * 0.01 + j as f64 * 1e-4 + len * 1e-6).collect();
                serde_json::json!({ "embedding": vec })
            })
            .collect();
        serde_json::json!({ "data": data })
    }

    fn test_config(base_url: &str, env_name: &str, dim: usize) -> RemoteConfig {
        std::env::set_var(env_name, "test-key");
        RemoteConfig {
            base_url: base_url.to_string(),
            path: "/v1/embeddings".into(),
            credential_env: env_name.into(),
            batch_size: 2,
            max_retries: 3,
            backoff_ms: 1,
            concurrency: 1,
            timeout_ms: 5000,
            expected_dim: dim,
            ..RemoteConfig::default()
        }
    }

    #[test]
    fn batching_splits_requests_and_preserves_order() {
        let (url, counter) = stub_server(|_, body| (200, ok_embeddings(body, 4)));
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        let cfg = test_config(&url, "STYLEVEC_TEST_KEY_BATCH", 4);
        let texts = vec!["one".to_string(), "two".to_string(), "three".to_string()];
        let out = embed_remote(&texts, "m", &cfg, &cache).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(counter.load(Ordering::SeqCst), 2, "3 texts at batch size 2");
        // Vectors reflect input order: first of batch 1 vs first of batch 2
        // differ through the text-length term.
        assert_ne!(out[0], out[2]);
    }

    #[test]
    fn cache_hit_makes_no_network_calls() {
        let (url, counter) = stub_server(|_, body| (200, ok_embeddings(body, 4)));
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        let cfg = test_config(&url, "STYLEVEC_TEST_KEY_CACHE", 4);
        let texts = vec!["alpha".to_string(), "beta".to_string()];
        let first = embed_remote(&texts, "m", &cfg, &cache).unwrap();
        let calls_after_first = counter.load(Ordering::SeqCst);
        let second = embed_remote(&texts, "m", &cfg, &cache).unwrap();
        assert_eq!(counter.load(Ordering::SeqCst), calls_after_first);
        assert_eq!(first, second);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let (url, _) = stub_server(|_, body| (200, ok_embeddings(body, 8)));
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        let cfg = test_config(&url, "STYLEVEC_TEST_KEY_DIM", 16);
        let err = embed_remote(&["x".to_string()], "m", &cfg, &cache).unwrap_err();
        assert!(matches!(err, Error::Contract(_)), "{err}");
    }

    #[test]
    fn missing_credential_fails_before_network() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        let mut cfg = RemoteConfig {
            base_url: "http://127.0.0.1:9".into(),
            ..RemoteConfig::default()
        };
        cfg.credential_env = "STYLEVEC_TEST_KEY_UNSET_XYZ".into();
        std::env::remove_var(&cfg.credential_env);
        let err = embed_remote(&["x".to_string()], "m", &cfg, &cache).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn transient_failures_are_retried() {
        let (url, counter) = stub_server(|ordinal, body| {
            if ordinal == 0 {
                (500, serde_json::json!({"error": "transient"}))
            } else {
                (200, ok_embeddings(body, 4))
            }
        });
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        let cfg = test_config(&url, "STYLEVEC_TEST_KEY_RETRY", 4);
        let out = embed_remote(&["a".to_string()], "m", &cfg, &cache).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(counter.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn exhausted_retries_carry_attempt_log() {
        let (url, _) = stub_server(|_, _| (503, serde_json::json!({"error": "down"})));
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        let cfg = test_config(&url, "STYLEVEC_TEST_KEY_DOWN", 4);
        let err = embed_remote(&["a".to_string()], "m", &cfg, &cache).unwrap_err();
        match err {
            Error::Remote { attempts, log, .. } => {
                assert_eq!(attempts, 3);
                assert!(log.contains("HTTP 503"), "{log}");
            }
            other => panic!("expected remote error, got {other}"),
        }
    }
}
