//! Loopback comparison between a local model and the same model served over HTTP.

#![allow(dead_code)]

use std::sync::Arc;

use mixdiff_core::backend::{RemoteBackend, RemoteOptions};
use mixdiff_core::benchmark::{Benchmark, BenchmarkSizes};
use mixdiff_core::engine::{run_detection, Engine, RunOptions};
use mixdiff_core::server::{spawn, ServerConfig};
use mixdiff_core::{AccessLevel, Backend, Error, FeatureVector, LabeledDataset, ScoreKind};

pub struct WireReport {
    pub targets: usize,
    pub max_gap: f64,
    /// Status of a logits request sent to a probs-only server.
    pub mismatch_status: u16,
    /// The client maps the refusal to an access error.
    pub client_denied: bool,
    /// Every probs-server response was a probability vector distinct from the logits.
    pub probs_only: bool,
}

fn first_n(data: &LabeledDataset, n: usize) -> LabeledDataset {
    let mut seen = 0;
    data.filter(|_| {
        seen += 1;
        seen <= n
    })
    .unwrap()
}

pub fn run(targets: usize) -> WireReport {
    let sizes = BenchmarkSizes {
        test_per_component: targets.div_ceil(6),
        ..Default::default()
    };
    let bench = Benchmark::build(4, &sizes).unwrap();
    let data = first_n(&bench.test, targets);
    let cfg = Benchmark::config(AccessLevel::Logits, ScoreKind::Entropy);
    let opts = RunOptions {
        seed: 11,
        aux_pool: Some(bench.aux_pool.clone()),
        ..Default::default()
    };
    let local_engine = Engine::new(&bench.model, None, cfg.clone()).unwrap();
    let local = run_detection(&local_engine, &data, &bench.oracles, &opts).unwrap();

    let server = spawn(
        Arc::new(bench.model.clone()),
        ServerConfig::new("127.0.0.1:0".parse().unwrap(), AccessLevel::Logits),
    )
    .unwrap();
    let remote = RemoteBackend::connect(&server.url(), RemoteOptions::default()).unwrap();
    let remote_engine = Engine::new(&remote, None, cfg).unwrap();
    let over_wire = run_detection(&remote_engine, &data, &bench.oracles, &opts).unwrap();
    let max_gap = local
        .iter()
        .zip(&over_wire)
        .map(|(a, b)| {
            assert_eq!(a.id, b.id);
            (a.final_score - b.final_score).abs()
        })
        .fold(0.0, f64::max);

    let probs_server = spawn(
        Arc::new(bench.model.clone()),
        ServerConfig::new("127.0.0.1:0".parse().unwrap(), AccessLevel::Probs),
    )
    .unwrap();
    let http = reqwest::blocking::Client::new();
    let inputs: Vec<Vec<f64>> = data.records().iter().take(50).map(|r| r.features.as_slice().to_vec()).collect();
    let send = |level: &str| {
        http.post(format!("{}/v1/predict", probs_server.url()))
            .json(&serde_json::json!({"inputs": inputs, "level": level}))
            .send()
            .unwrap()
    };
    let mismatch_status = send("logits").status().as_u16();
    let ok = send("probs");
    let mut probs_only = ok.status().as_u16() == 200;
    let body: serde_json::Value = ok.json().unwrap();
    for (x, row) in inputs.iter().zip(body["outputs"].as_array().unwrap()) {
        let v: Vec<f64> = row.as_array().unwrap().iter().map(|a| a.as_f64().unwrap()).collect();
        let sum: f64 = v.iter().sum();
        probs_only &= v.iter().all(|p| (0.0..=1.0).contains(p)) && (sum - 1.0).abs() < 1e-9;
        probs_only &= v != bench.model.logits(x);
    }
    let client = RemoteBackend::connect(&probs_server.url(), RemoteOptions::default()).unwrap();
    let x = FeatureVector::new(inputs[0].clone()).unwrap();
    let client_denied = matches!(client.predict(&[x], AccessLevel::Logits), Err(Error::AccessDenied));

    WireReport {
        targets: local.len(),
        max_gap,
        mismatch_status,
        client_denied,
        probs_only,
    }
}
