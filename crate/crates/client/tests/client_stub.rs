//! Client behavior against an instrumented local endpoint: caching,
//! concurrency bounds, retry policy, batching, auth, and dimension checks.

use std::time::{Duration, Instant};

use dsxray_client::{
    cache_key, cache_stats, embed_batch, ClientError, EmbedConfig, WireShape,
};
use dsxray_core::Sample;
use dsxray_testutil::stub::{vector_for, StubOptions, StubServer};

fn samples(n: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| Sample {
            id: format!("q{i:03}"),
            question: format!("topic{}: question number {i}?", i % 3),
            answer: None,
            meta: Default::default(),
        })
        .collect()
}

fn config_for(server: &StubServer, cache: &std::path::Path) -> EmbedConfig {
    EmbedConfig {
        endpoint_url: server.url(),
        model_id: "stub-embedder".into(),
        system_prompt: "You are a 5G communication expert.".into(),
        cache_dir: cache.to_path_buf(),
        backoff_base_ms: 1,
        ..EmbedConfig::default()
    }
}

#[test]
fn records_come_back_in_input_order_with_expected_vectors() {
    let server = StubServer::start(StubOptions::default());
    let dir = tempfile::tempdir().unwrap();
    let config = config_for(&server, dir.path());
    let input = samples(6);

    let records = embed_batch(&config, &input).unwrap();
    assert_eq!(records.len(), 6);
    for (sample, record) in input.iter().zip(&records) {
        assert_eq!(record.id, sample.id);
        assert_eq!(record.embedding, vector_for(&sample.question, 8));
    }
    // The single-prompt wire shape sends one request per miss.
    assert_eq!(server.request_count(), 6);
}

#[test]
fn warm_cache_serves_without_network() {
    let dir = tempfile::tempdir().unwrap();
    let input = samples(5);

    let server = StubServer::start(StubOptions::default());
    let config = config_for(&server, dir.path());
    let first = embed_batch(&config, &input).unwrap();
    assert_eq!(server.request_count(), 5);

    let stats = cache_stats(&config, &input).unwrap();
    assert_eq!((stats.hits, stats.misses), (5, 0));

    // Same cache, dead endpoint: the server is gone, so any network touch
    // would fail loudly.
    let url = server.url();
    drop(server);
    let dead = EmbedConfig { endpoint_url: url, ..config };
    let second = embed_batch(&dead, &input).unwrap();
    assert_eq!(first, second);
}

#[test]
fn cache_is_keyed_by_model_and_prompt() {
    let dir = tempfile::tempdir().unwrap();
    let input = samples(3);

    let server = StubServer::start(StubOptions::default());
    let config = config_for(&server, dir.path());
    embed_batch(&config, &input).unwrap();
    assert_eq!(server.request_count(), 3);

    // A different model id misses the cache even for identical questions.
    let other_model = EmbedConfig { model_id: "other".into(), ..config.clone() };
    embed_batch(&other_model, &input).unwrap();
    assert_eq!(server.request_count(), 6);

    // A different system prompt misses as well.
    let other_prompt = EmbedConfig { system_prompt: "terse".into(), ..config };
    embed_batch(&other_prompt, &input).unwrap();
    assert_eq!(server.request_count(), 9);
}

#[test]
fn concurrency_never_exceeds_max_in_flight() {
    let server = StubServer::start(StubOptions {
        delay: Duration::from_millis(120),
        ..StubOptions::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let config = EmbedConfig { max_in_flight: 3, ..config_for(&server, dir.path()) };
    let input = samples(9);

    let start = Instant::now();
    embed_batch(&config, &input).unwrap();
    let elapsed = start.elapsed();

    assert_eq!(server.request_count(), 9);
    assert!(server.max_in_flight() <= 3, "observed {} in flight", server.max_in_flight());
    assert!(server.max_in_flight() >= 2, "requests never overlapped");
    // 9 requests at 120ms on 3 workers: about 3 rounds, far less than serial.
    assert!(elapsed < Duration::from_millis(9 * 120), "no parallelism: {elapsed:?}");
}

#[test]
fn single_worker_serializes_requests() {
    let server = StubServer::start(StubOptions {
        delay: Duration::from_millis(30),
        ..StubOptions::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let config = EmbedConfig { max_in_flight: 1, ..config_for(&server, dir.path()) };
    embed_batch(&config, &samples(5)).unwrap();
    assert_eq!(server.max_in_flight(), 1);
}

#[test]
fn transient_failures_are_retried_to_success() {
    let server = StubServer::start(StubOptions { fail_first: 2, ..StubOptions::default() });
    let dir = tempfile::tempdir().unwrap();
    let config = EmbedConfig { max_in_flight: 1, ..config_for(&server, dir.path()) };
    let input = samples(4);

    let records = embed_batch(&config, &input).unwrap();
    assert_eq!(records.len(), 4);
    // 4 successes plus the 2 injected failures.
    assert_eq!(server.request_count(), 6);
}

#[test]
fn retry_budget_exhaustion_reports_attempts() {
    let server = StubServer::start(StubOptions { fail_first: 100, ..StubOptions::default() });
    let dir = tempfile::tempdir().unwrap();
    let config = EmbedConfig { retry_limit: 2, ..config_for(&server, dir.path()) };

    match embed_batch(&config, &samples(1)) {
        Err(ClientError::Transport { ids, attempts, message }) => {
            assert_eq!(ids, "q000");
            assert_eq!(attempts, 3); // first try + 2 retries
            assert!(message.contains("500"), "message: {message}");
        }
        other => panic!("expected Transport error, got {other:?}"),
    }
    assert_eq!(server.request_count(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    // Token required but not sent: a 401 must fail fast, not burn retries.
    let server = StubServer::start(StubOptions {
        require_token: Some("sekrit".into()),
        ..StubOptions::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let config = EmbedConfig { retry_limit: 5, ..config_for(&server, dir.path()) };

    match embed_batch(&config, &samples(1)) {
        Err(ClientError::Transport { attempts, message, .. }) => {
            assert_eq!(attempts, 1);
            assert!(message.contains("401"), "message: {message}");
        }
        other => panic!("expected Transport error, got {other:?}"),
    }
    assert_eq!(server.request_count(), 1);
}

#[test]
fn bearer_token_flows_from_named_env_var() {
    let server = StubServer::start(StubOptions {
        require_token: Some("sekrit".into()),
        ..StubOptions::default()
    });
    let dir = tempfile::tempdir().unwrap();

    // Unset variable: rejected before any request goes out.
    let missing = EmbedConfig {
        auth_env: Some("DSXRAY_TEST_TOKEN_UNSET".into()),
        ..config_for(&server, dir.path())
    };
    match embed_batch(&missing, &samples(1)) {
        Err(e @ ClientError::Config { .. }) => assert!(e.is_validation()),
        other => panic!("expected Config error, got {other:?}"),
    }
    assert_eq!(server.request_count(), 0);

    std::env::set_var("DSXRAY_TEST_TOKEN_SET", "sekrit");
    let present = EmbedConfig {
        auth_env: Some("DSXRAY_TEST_TOKEN_SET".into()),
        ..config_for(&server, dir.path())
    };
    let records = embed_batch(&present, &samples(2)).unwrap();
    assert_eq!(records.len(), 2);
}

#[test]
fn dimension_drift_is_rejected() {
    let server = StubServer::start(StubOptions {
        drift_after: Some(4),
        ..StubOptions::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let config = EmbedConfig { max_in_flight: 1, ..config_for(&server, dir.path()) };

    match embed_batch(&config, &samples(8)) {
        Err(ClientError::DimensionDrift { expected, found, .. }) => {
            assert_eq!((expected, found), (8, 24));
        }
        other => panic!("expected DimensionDrift, got {other:?}"),
    }
}

#[test]
fn cached_and_fresh_vectors_must_agree_on_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let input = samples(8);

    // Warm the cache at 8 dimensions for the first half.
    let server8 = StubServer::start(StubOptions::default());
    let config8 = config_for(&server8, dir.path());
    embed_batch(&config8, &input[..4]).unwrap();
    drop(server8);

    // A replacement endpoint now answers with 24 dimensions.
    let server24 = StubServer::start(StubOptions { dims: 24, ..StubOptions::default() });
    let config24 = EmbedConfig { endpoint_url: server24.url(), ..config8 };
    match embed_batch(&config24, &input) {
        Err(ClientError::DimensionDrift { expected, found, .. }) => {
            assert_eq!((expected, found), (8, 24));
        }
        other => panic!("expected DimensionDrift, got {other:?}"),
    }
}

#[test]
fn openai_shape_batches_requests() {
    let server = StubServer::start(StubOptions::default());
    let dir = tempfile::tempdir().unwrap();
    let config = EmbedConfig {
        wire: WireShape::OpenAi,
        batch_size: 4,
        ..config_for(&server, dir.path())
    };
    let input = samples(10);

    let records = embed_batch(&config, &input).unwrap();
    assert_eq!(records.len(), 10);
    assert_eq!(server.request_count(), 3); // ceil(10 / 4)
    for (sample, record) in input.iter().zip(&records) {
        assert_eq!(record.id, sample.id);
        assert_eq!(record.embedding, vector_for(&sample.question, 8));
    }

    // Warm cache: no further requests even through the batched shape.
    embed_batch(&config, &input).unwrap();
    assert_eq!(server.request_count(), 3);
}

#[test]
fn corrupt_cache_entries_are_reported_not_used() {
    let server = StubServer::start(StubOptions::default());
    let dir = tempfile::tempdir().unwrap();
    let config = config_for(&server, dir.path());
    let input = samples(1);
    embed_batch(&config, &input).unwrap();

    let digest = cache_key(&config, &input[0].question);
    let path = dir.path().join(&digest[..2]).join(format!("{digest}.json"));
    assert!(path.exists(), "cache file should exist at the documented layout");
    std::fs::write(&path, b"not json").unwrap();

    match embed_batch(&config, &input) {
        Err(ClientError::CacheCorrupt { path: reported, .. }) => {
            assert!(reported.ends_with(&format!("{digest}.json")));
        }
        other => panic!("expected CacheCorrupt, got {other:?}"),
    }
}

#[test]
fn empty_questions_are_rejected_before_any_request() {
    let server = StubServer::start(StubOptions::default());
    let dir = tempfile::tempdir().unwrap();
    let config = config_for(&server, dir.path());
    let mut input = samples(2);
    input[1].question.clear();

    match embed_batch(&config, &input) {
        Err(e @ ClientError::EmptyQuestion { .. }) => assert!(e.is_validation()),
        other => panic!("expected EmptyQuestion, got {other:?}"),
    }
    assert_eq!(server.request_count(), 0);
}
