//! The HTTP client and cached provider against an in-process fake service.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use semproj_core::embedding::{EmbeddingService, HttpService, ProviderConfig};
use semproj_core::{CachedProvider, EmbeddingCache, EmbeddingProvider, Error};

const MODEL: &str = "fake-model";
const DIM: usize = 4;

#[derive(Default)]
struct State {
    embedded: Vec<String>,
    embed_calls: usize,
    failures_left: usize,
}

fn vector_for(text: &str) -> Vec<f32> {
    let sum: u32 = text.bytes().map(u32::from).sum();
    (0..DIM)
        .map(|i| (sum as f32 + i as f32) / 100.0 + text.len() as f32)
        .collect()
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) {
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    );
}

fn serve(stream: TcpStream, model: &'static str, state: Arc<Mutex<State>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut stream = stream;
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
            return;
        }
        let mut length = 0;
        loop {
            let mut header = String::new();
            reader.read_line(&mut header).unwrap();
            let header = header.trim_end();
            if header.is_empty() {
                break;
            }
            if let Some((name, value)) = header.split_once(':') {
                if name.eq_ignore_ascii_case("content-length") {
                    length = value.trim().parse().unwrap();
                }
            }
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body).unwrap();
        if request_line.starts_with("GET /health") {
            let health = serde_json::json!({"status": "ok", "model": model, "dim": DIM, "version": "test"});
            respond(&mut stream, "200 OK", &health.to_string());
            continue;
        }
        let request: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let mut s = state.lock().unwrap();
        s.embed_calls += 1;
        if s.failures_left > 0 {
            s.failures_left -= 1;
            respond(&mut stream, "503 Service Unavailable", "{\"error\":\"warming up\"}");
            continue;
        }
        let texts: Vec<String> = request["texts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t.as_str().unwrap().to_string())
            .collect();
        let vectors: Vec<Vec<f32>> = texts.iter().map(|t| vector_for(t)).collect();
        s.embedded.extend(texts);
        drop(s);
        let reply = serde_json::json!({"model": model, "dim": DIM, "vectors": vectors});
        respond(&mut stream, "200 OK", &reply.to_string());
    }
}

fn start(model: &'static str, failures: usize) -> (String, Arc<Mutex<State>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let state = Arc::new(Mutex::new(State {
        failures_left: failures,
        ..State::default()
    }));
    let shared = state.clone();
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let s = shared.clone();
            thread::spawn(move || serve(stream, model, s));
        }
    });
    (url, state)
}

fn config() -> ProviderConfig {
    ProviderConfig {
        batch_size: 16,
        max_in_flight: 2,
        max_attempts: 3,
        backoff_ms: 1,
    }
}

fn service(url: &str) -> Box<dyn EmbeddingService> {
    Box::new(HttpService::new(url, Duration::from_secs(10)))
}

#[test]
fn only_cache_misses_reach_the_service() {
    let (url, state) = start(MODEL, 0);
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(EmbeddingCache::open(dir.path()).unwrap());
    let texts: Vec<String> = (0..100).map(|i| format!("text number {i}")).collect();
    for t in &texts[..40] {
        cache.put(t, MODEL, &vector_for(t)).unwrap();
    }
    let provider = CachedProvider::with_service(MODEL, cache.clone(), service(&url), config()).unwrap();
    assert_eq!(provider.handshake().unwrap().dim, DIM);

    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let vectors = provider.embed_texts(&refs).unwrap();
    for (t, v) in texts.iter().zip(&vectors) {
        assert_eq!(v, &vector_for(t));
    }
    {
        let s = state.lock().unwrap();
        let mut sent = s.embedded.clone();
        sent.sort();
        let mut want: Vec<String> = texts[40..].to_vec();
        want.sort();
        assert_eq!(sent, want);
        assert_eq!(s.embed_calls, 4);
    }
    assert_eq!(cache.len(), 100);

    // a second pass is served from the cache, which also survives a reopen
    provider.embed_texts(&refs).unwrap();
    assert_eq!(state.lock().unwrap().embedded.len(), 60);
    let reopened = EmbeddingCache::open(dir.path()).unwrap();
    assert_eq!(reopened.get(&texts[99], MODEL), Some(vector_for(&texts[99])));
}

#[test]
fn transient_failures_are_retried() {
    let (url, state) = start(MODEL, 2);
    let cache = Arc::new(EmbeddingCache::in_memory());
    let provider = CachedProvider::with_service(MODEL, cache, service(&url), config()).unwrap();
    let v = provider.embed_texts(&["retry me"]).unwrap();
    assert_eq!(v[0], vector_for("retry me"));
    assert_eq!(state.lock().unwrap().embed_calls, 3);
}

#[test]
fn persistent_failures_surface_after_the_retry_budget() {
    let (url, state) = start(MODEL, 10);
    let cache = Arc::new(EmbeddingCache::in_memory());
    let provider = CachedProvider::with_service(MODEL, cache.clone(), service(&url), config()).unwrap();
    let err = provider.embed_texts(&["never"]).unwrap_err();
    assert!(matches!(err, Error::Service { status: 503, .. }), "{err}");
    assert_eq!(state.lock().unwrap().embed_calls, 3);
    assert!(cache.is_empty());
}

#[test]
fn model_mismatch_is_rejected_at_connect() {
    let (url, _) = start("other-model", 0);
    let cache = Arc::new(EmbeddingCache::in_memory());
    let err = CachedProvider::with_service(MODEL, cache, service(&url), config())
        .err()
        .expect("mismatch");
    assert!(matches!(err, Error::ModelMismatch { .. }), "{err}");
}

#[test]
fn unreachable_service_is_reported() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let err = service(&url).health().unwrap_err();
    assert!(matches!(err, Error::ServiceUnreachable(_)), "{err}");
}
