//! A direct, loop-by-loop transcription of the detection algorithm that
//! shares no code with the library beyond the model weights. Used as the
//! reference the batched engine is compared against.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mixdiff_core::engine::{run_detection, Engine, RunOptions};
use mixdiff_core::{
    AccessLevel, AuxStrategy, LabeledDataset, LinearSoftmaxModel, MixDiffConfig, OracleSelection,
    OracleSet, Record, Sample, ScoreKind,
};
use rand::{Rng, RngCore};

#[derive(Clone, Copy, Debug, PartialEq)]
enum View {
    Logits,
    Probs,
    OneHot,
}

fn logits(w: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    w.iter()
        .zip(b)
        .map(|(row, bias)| row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + bias)
        .collect()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..v.len() {
        if v[j] > v[best] {
            best = j;
        }
    }
    best
}

fn output(w: &[Vec<f64>], b: &[f64], x: &[f64], view: View) -> Vec<f64> {
    let z = logits(w, b, x);
    match view {
        View::Logits => z,
        View::Probs => softmax(&z),
        View::OneHot => {
            let mut v = vec![0.0; z.len()];
            v[first_max(&z)] = 1.0;
            v
        }
    }
}

fn score(kind: ScoreKind, view: View, v: &[f64], temperature: f64) -> f64 {
    let max = |u: &[f64]| u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let entropy = |p: &[f64]| -p.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>();
    match (kind, view) {
        (ScoreKind::Msp, View::Logits) => -max(&softmax(v)),
        (ScoreKind::Msp, View::Probs) => -max(v),
        (ScoreKind::Mls, View::Logits) => -max(v),
        (ScoreKind::Energy, View::Logits) => {
            let m = max(v);
            -(m + v.iter().map(|z| (z - m).exp()).sum::<f64>().ln())
        }
        (ScoreKind::Entropy, View::Logits) => entropy(&softmax(v)),
        (ScoreKind::Entropy, View::Probs) => entropy(v),
        (ScoreKind::Mcm, View::Logits) => {
            let scaled: Vec<f64> = v.iter().map(|z| z / temperature).collect();
            -max(&softmax(&scaled))
        }
        (ScoreKind::Mcm, View::Probs) => -max(v),
        other => panic!("no reference score for {other:?}"),
    }
}

/// Everything the reference needs for one configuration.
#[derive(Clone, Debug)]
pub struct Case {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub level: AccessLevel,
    pub kind: ScoreKind,
    pub temperature: f64,
    pub gamma: f64,
    pub mixdiff_only: bool,
    pub num_ratios: usize,
    /// `oracles[k]` holds the exemplars of class `k`.
    pub oracles: Vec<Vec<Vec<f64>>>,
    pub aux: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

/// Final score of one target, computed straight from the definitions.
pub fn reference_score(case: &Case, target: &[f64]) -> f64 {
    let (w, b) = (&case.weights, &case.bias);
    let view = match case.level {
        AccessLevel::Logits | AccessLevel::Embeddings => View::Logits,
        AccessLevel::Probs => View::Probs,
        AccessLevel::Labels => View::OneHot,
    };
    let label_mode = view == View::OneHot;
    let predicted = first_max(&output(w, b, target, view));
    let oracles = &case.oracles[predicted];
    let r_total = case.num_ratios;
    let mut total = 0.0;
    let mut count = 0.0;
    for a in &case.aux {
        for r in 1..=r_total {
            let lam = r as f64 / (r_total + 1) as f64;
            let mix = |x: &[f64]| -> Vec<f64> {
                x.iter().zip(a).map(|(p, q)| lam * p + (1.0 - lam) * q).collect()
            };
            let k = w.len();
            let mut avg = vec![0.0; k];
            for o in oracles {
                let out = output(w, b, &mix(o), view);
                for j in 0..k {
                    avg[j] += out[j];
                }
            }
            for v in &mut avg {
                *v /= oracles.len() as f64;
            }
            let target_out = output(w, b, &mix(target), view);
            let term = if label_mode {
                1.0 - avg[first_max(&target_out)]
            } else {
                score(case.kind, view, &target_out, case.temperature)
                    - score(case.kind, view, &avg, case.temperature)
            };
            total += term;
            count += 1.0;
        }
    }
    let mixdiff = total / count;
    if label_mode || case.mixdiff_only {
        mixdiff
    } else {
        score(case.kind, view, &output(w, b, target, view), case.temperature) + case.gamma * mixdiff
    }
}

fn point(rng: &mut dyn RngCore, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-scale..scale)).collect()
}

/// A random configuration with `K <= 5`, `d <= 8` and `M, N, R <= 4`.
pub fn random_case(rng: &mut dyn RngCore) -> Case {
    let k = rng.random_range(2..=5);
    let d = rng.random_range(1..=8);
    let m = rng.random_range(1..=4);
    let n = rng.random_range(1..=4);
    let r = rng.random_range(1..=4);
    let level = AccessLevel::ALL[rng.random_range(0..AccessLevel::ALL.len())];
    let kinds: Vec<ScoreKind> = ScoreKind::ALL
        .into_iter()
        .filter(|s| level != AccessLevel::Probs || s.accepts_probs())
        .collect();
    let kind = kinds[rng.random_range(0..kinds.len())];
    Case {
        weights: (0..k).map(|_| point(rng, d, 1.5)).collect(),
        bias: point(rng, k, 0.5),
        level,
        kind,
        temperature: rng.random_range(0.2..3.0),
        gamma: rng.random_range(-2.0..4.0),
        mixdiff_only: rng.random_bool(0.25),
        num_ratios: r,
        oracles: (0..k).map(|_| (0..m).map(|_| point(rng, d, 3.0)).collect()).collect(),
        aux: (0..n).map(|_| point(rng, d, 3.0)).collect(),
        targets: (0..rng.random_range(1..=6)).map(|_| point(rng, d, 3.0)).collect(),
    }
}

fn sample(id: String, v: &[f64]) -> Sample {
    Sample::new(id, mixdiff_core::FeatureVector::new(v.to_vec()).unwrap())
}

/// Runs the batched engine on `case` and returns final scores in target order.
pub fn engine_scores(case: &Case, jobs: Option<usize>) -> Vec<f64> {
    let model = LinearSoftmaxModel::new(case.weights.clone(), case.bias.clone()).unwrap();
    let cfg = MixDiffConfig {
        num_aux: case.aux.len(),
        num_ratios: case.num_ratios,
        oracle_size: case.oracles[0].len(),
        gamma: case.gamma,
        access_level: case.level,
        base_score: case.kind,
        aux_strategy: AuxStrategy::RandomId,
        oracle_selection: OracleSelection::ByPredictedLabel,
        compare_enabled: true,
        mcm_temperature: case.temperature,
        mixdiff_only: case.mixdiff_only,
    };
    let engine = Engine::new(&model, Some(&model), cfg).unwrap();
    let per_class: BTreeMap<usize, Vec<Sample>> = case
        .oracles
        .iter()
        .enumerate()
        .map(|(k, list)| {
            let s = list
                .iter()
                .enumerate()
                .map(|(j, v)| sample(format!("o{k}-{j}"), v))
                .collect();
            (k, s)
        })
        .collect();
    let oracles = OracleSet::labeled(case.weights.len(), per_class).unwrap();
    let records = case
        .targets
        .iter()
        .enumerate()
        .map(|(j, v)| Record {
            id: format!("t{j}"),
            features: mixdiff_core::FeatureVector::new(v.clone()).unwrap(),
            label: None,
            ood: true,
        })
        .collect();
    let targets = LabeledDataset::with_numeric_labels(records).unwrap();
    let opts = RunOptions {
        seed: 0,
        jobs,
        aux_pool: Some(case.aux.iter().enumerate().map(|(j, v)| sample(format!("a{j}"), v)).collect()),
        keep_terms: false,
    };
    run_detection(&engine, &targets, &oracles, &opts)
        .unwrap()
        .into_iter()
        .map(|r| r.final_score)
        .collect()
}

/// Largest absolute gap between engine and reference over the case's targets.
pub fn max_gap(case: &Case) -> f64 {
    engine_scores(case, Some(1))
        .iter()
        .zip(&case.targets)
        .map(|(e, t)| (e - reference_score(case, t)).abs())
        .fold(0.0, f64::max)
}
