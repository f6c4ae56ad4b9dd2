use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use proptest::prelude::*;

use rps_core::textsim::*;
use rps_core::Error;

fn cfg() -> EmbeddingProviderConfig {
    EmbeddingProviderConfig::default()
}

#[test]
fn fnv_reference_values() {
    assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
    assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
}

#[test]
fn empty_text_is_zero_vector() {
    let v = embed_builtin("", &cfg());
    assert_eq!(v.dim(), 256);
    assert!(v.is_zero());
    assert!(embed_builtin("   \t ", &cfg()).is_zero());
}

#[test]
fn embedding_is_deterministic_and_normalized() {
    let a = embed_builtin("The defendant fled", &cfg());
    let b = embed_builtin("the   defendant fled", &cfg());
    assert_eq!(a, b);
    let norm: f64 = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-12);
    assert!((cosine(&a, &b).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn short_text_uses_whole_string() {
    assert_eq!(char_ngrams("ab", [3, 5]), vec!["ab".to_string()]);
    assert_eq!(char_ngrams("abcd", [3, 5]), vec!["abc", "bcd", "abcd"]);
}

#[test]
fn cosine_basics() {
    let one_hot = |i: usize| {
        let mut v = vec![0.0; 4];
        v[i] = 1.0;
        v
    };
    assert_eq!(cosine_slices(&one_hot(0), &one_hot(1)).unwrap(), 0.0);
    assert!((cosine_slices(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(cosine_slices(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
    assert!(matches!(cosine_slices(&[1.0], &[1.0, 2.0]), Err(Error::Config(_))));
}

fn gram_counts(text: &str) -> HashMap<String, f64> {
    let mut counts = HashMap::new();
    for g in char_ngrams(text, [3, 5]) {
        *counts.entry(g).or_insert(0.0) += 1.0;
    }
    counts
}

#[test]
fn cosine_matches_ngram_overlap() {
    let a_text = "night market theft";
    let b_text = "market theft at night";
    // exact overlap cosine over n-gram count vectors
    let a = gram_counts(a_text);
    let b = gram_counts(b_text);
    let dot: f64 = a.iter().map(|(g, c)| c * b.get(g).copied().unwrap_or(0.0)).sum();
    let na = a.values().map(|c| c * c).sum::<f64>().sqrt();
    let nb = b.values().map(|c| c * c).sum::<f64>().sqrt();
    let expected = dot / (na * nb);
    assert!(expected > 0.5 && expected < 0.9, "{expected}");

    let wide = EmbeddingProviderConfig {
        dimension: 1 << 22,
        ..cfg()
    };
    let grams: HashSet<String> = a.keys().chain(b.keys()).cloned().collect();
    let buckets: HashSet<u64> = grams.iter().map(|g| fnv1a64(g.as_bytes()) % (1 << 22)).collect();
    assert_eq!(buckets.len(), grams.len(), "no bucket collisions at this width");
    let got = cosine(&embed_builtin(a_text, &wide), &embed_builtin(b_text, &wide)).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");

    let narrow = cosine(&embed_builtin(a_text, &cfg()), &embed_builtin(b_text, &cfg())).unwrap();
    assert!((narrow - expected).abs() < 0.15);
}

#[test]
fn config_validation() {
    assert!(cfg().validate().is_ok());
    assert!(EmbeddingProviderConfig { dimension: 8, ..cfg() }.validate().is_err());
    assert!(EmbeddingProviderConfig {
        ngram_range: [4, 3],
        ..cfg()
    }
    .validate()
    .is_err());
    assert!(EmbeddingProviderConfig { timeout_ms: 0, ..cfg() }.validate().is_err());
    assert!(EmbeddingProviderConfig {
        mode: EmbeddingSource::Remote,
        ..cfg()
    }
    .validate()
    .is_err());
}

#[test]
fn cache_reuses_vectors() {
    let e = Embedder::builtin();
    let texts = vec!["alpha".to_string(), "beta".to_string(), "alpha".to_string()];
    let v = e.embed_all(&texts).unwrap();
    assert_eq!(e.cache_len(), 2);
    assert_eq!(v[0], v[2]);
    let again = e.embed("alpha").unwrap();
    assert!(Arc::ptr_eq(&again, &e.embed("alpha").unwrap()));
    assert_eq!(*again, embed_builtin("alpha", &cfg()));
}

/// Minimal HTTP server: answers each request with `respond(texts)` and counts requests.
fn mock_server(
    respond: impl Fn(usize, &[String]) -> (u16, String) + Send + Sync + 'static,
) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let l = line.to_ascii_lowercase();
                if let Some(v) = l.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let texts: Vec<String> = serde_json::from_value(req["texts"].clone()).unwrap();
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, payload) = respond(n, &texts);
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    (format!("http://{addr}/embed"), hits)
}

fn remote_cfg(url: &str, dimension: usize, max_batch: usize) -> EmbeddingProviderConfig {
    EmbeddingProviderConfig {
        mode: EmbeddingSource::Remote,
        dimension,
        endpoint_url: Some(url.to_string()),
        max_batch,
        timeout_ms: 2_000,
        ..cfg()
    }
}

/// Encodes the text length into a 16-dimensional vector so order is checkable.
fn echo_lengths(_: usize, texts: &[String]) -> (u16, String) {
    let rows: Vec<Vec<f64>> = texts
        .iter()
        .map(|t| {
            let mut v = vec![0.0; 16];
            v[0] = t.len() as f64;
            v
        })
        .collect();
    (200, serde_json::json!({ "embeddings": rows }).to_string())
}

#[test]
fn remote_preserves_order() {
    let (url, hits) = mock_server(echo_lengths);
    let client = RemoteClient::new(&remote_cfg(&url, 16, 128)).unwrap();
    let texts: Vec<String> = (1..=5).map(|n| "x".repeat(n)).collect();
    let out = client.embed_batch(&texts).unwrap();
    let lens: Vec<f64> = out.iter().map(|v| v.values[0]).collect();
    assert_eq!(lens, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    assert!(out.iter().all(|v| v.source == EmbeddingSource::Remote));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn remote_batches_by_max_batch() {
    let (url, hits) = mock_server(echo_lengths);
    let client = RemoteClient::new(&remote_cfg(&url, 16, 128)).unwrap();
    let texts: Vec<String> = (0..300).map(|n| "y".repeat(n % 40 + 1)).collect();
    let out = client.embed_batch(&texts).unwrap();
    assert_eq!(out.len(), 300);
    assert_eq!(out[299].values[0], (299 % 40 + 1) as f64);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn remote_wrong_dimension_is_contract_error() {
    let (url, _) = mock_server(echo_lengths);
    let client = RemoteClient::new(&remote_cfg(&url, 32, 128)).unwrap();
    let err = client.embed_batch(&["a".to_string()]).unwrap_err();
    assert!(matches!(err, Error::ProviderContract(_)), "{err}");
}

#[test]
fn remote_retries_transient_failures() {
    let (url, hits) = mock_server(|n, texts| {
        if n < 2 {
            (503, "{}".into())
        } else {
            echo_lengths(n, texts)
        }
    });
    let client = RemoteClient::new(&remote_cfg(&url, 16, 128))
        .unwrap()
        .with_backoff(Duration::from_millis(1));
    assert_eq!(client.embed_batch(&["abc".to_string()]).unwrap()[0].values[0], 3.0);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn remote_gives_up_after_two_retries() {
    let (url, hits) = mock_server(|_, _| (500, "{}".into()));
    let client = RemoteClient::new(&remote_cfg(&url, 16, 128))
        .unwrap()
        .with_backoff(Duration::from_millis(1));
    let err = client.embed_batch(&["abc".to_string()]).unwrap_err();
    assert!(matches!(err, Error::ProviderUnavailable(_)), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn unreachable_service_falls_back_when_allowed() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/embed", listener.local_addr().unwrap());
    drop(listener);
    let mut c = remote_cfg(&url, 256, 8);
    c.timeout_ms = 200;
    let strict = Embedder::new(c.clone()).unwrap();
    assert!(matches!(strict.embed("abc"), Err(Error::ProviderUnavailable(_))));
    c.fallback_to_builtin = true;
    let lenient = Embedder::new(c).unwrap();
    let v = lenient.embed("abc").unwrap();
    assert_eq!(v.source, EmbeddingSource::Builtin);
    assert_eq!(*v, embed_builtin("abc", &cfg()));
}

fn vec_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..20).prop_flat_map(|n| {
        (
            proptest::collection::vec(-10.0f64..10.0, n),
            proptest::collection::vec(-10.0f64..10.0, n),
        )
    })
}

proptest! {
    #[test]
    fn cosine_is_symmetric((a, b) in vec_strategy()) {
        let ab = cosine_slices(&a, &b).unwrap();
        let ba = cosine_slices(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn cosine_is_scale_invariant((a, b) in vec_strategy(), lambda in 1e-3f64..1e3) {
        let scaled: Vec<f64> = a.iter().map(|x| x * lambda).collect();
        let d = cosine_slices(&scaled, &b).unwrap() - cosine_slices(&a, &b).unwrap();
        prop_assert!(d.abs() < 1e-9);
    }

    #[test]
    fn builtin_embedding_is_unit_or_zero(text in "[a-z ]{0,40}") {
        let v = embed_builtin(&text, &cfg());
        let norm = v.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(v.is_zero() || (norm - 1.0).abs() < 1e-12);
        prop_assert_eq!(v.is_zero(), text.trim().is_empty());
    }
}
