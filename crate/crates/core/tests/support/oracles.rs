//! Brute-force references for detection metrics and input gradients.

#![allow(dead_code)]

use mixdiff_core::{Backend, FeatureVector, GradLoss, LinearSoftmaxModel};
use rand::{Rng, RngCore};

fn split(scores: &[f64], ood: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let pick = |want: bool| {
        scores
            .iter()
            .zip(ood)
            .filter(|(_, &o)| o == want)
            .map(|(s, _)| *s)
            .collect()
    };
    (pick(false), pick(true))
}

/// Probability that a random OOD score beats a random ID score, ties half.
pub fn auroc(scores: &[f64], ood: &[bool]) -> f64 {
    let (id, out) = split(scores, ood);
    let mut wins = 0.0;
    for o in &out {
        for i in &id {
            wins += if o > i {
                1.0
            } else if o == i {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (id.len() * out.len()) as f64
}

/// Largest threshold, among every observed score, flagging at least `tpr` of OOD.
pub fn threshold(scores: &[f64], ood: &[bool], tpr: f64) -> f64 {
    let (_, out) = split(scores, ood);
    let mut best = f64::NEG_INFINITY;
    for &t in scores {
        let hit = out.iter().filter(|&&s| s >= t).count() as f64 / out.len() as f64;
        if hit >= tpr && t > best {
            best = t;
        }
    }
    best
}

pub fn fpr_at(scores: &[f64], ood: &[bool], tpr: f64) -> f64 {
    let t = threshold(scores, ood, tpr);
    let (id, _) = split(scores, ood);
    id.iter().filter(|&&s| s >= t).count() as f64 / id.len() as f64
}

/// Mean over OOD samples of the precision when thresholding at their score.
pub fn average_precision(scores: &[f64], ood: &[bool]) -> f64 {
    let (_, out) = split(scores, ood);
    let mut total = 0.0;
    for &s in &out {
        let flagged = scores.iter().filter(|&&v| v >= s).count() as f64;
        let hits = out.iter().filter(|&&v| v >= s).count() as f64;
        total += hits / flagged;
    }
    total / out.len() as f64
}

/// `(id_over, id_under, ood_over, ood_under)` at the 95% threshold.
pub fn mass(scores: &[f64], ood: &[bool], tpr: f64) -> (f64, f64, f64, f64) {
    let t = threshold(scores, ood, tpr);
    let (id, out) = split(scores, ood);
    let frac = |v: &[f64]| v.iter().filter(|&&s| s >= t).count() as f64 / v.len() as f64;
    (frac(&id), 1.0 - frac(&id), frac(&out), 1.0 - frac(&out))
}

/// Random labelled scores with both classes present and frequent ties.
pub fn random_scored(rng: &mut dyn RngCore, n: usize) -> (Vec<f64>, Vec<bool>) {
    loop {
        let coarse = rng.random_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = rng.random_range(-2.0..2.0);
                if coarse {
                    (v * 2.0).round() / 2.0
                } else {
                    v
                }
            })
            .collect();
        let ood: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if ood.iter().any(|&o| o) && ood.iter().any(|&o| !o) {
            return (scores, ood);
        }
    }
}

/// The loss whose input gradient the model reports, evaluated directly.
pub fn loss(model: &LinearSoftmaxModel, x: &[f64], kind: GradLoss) -> f64 {
    let z = model.logits(x);
    let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + z.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
    let k = z.len() as f64;
    match kind {
        // Cross-entropy against the uniform distribution.
        GradLoss::CeUniform => z.iter().map(|v| lse - v).sum::<f64>() / k,
        GradLoss::Entropy => -z.iter().map(|v| (v - lse).exp() * (v - lse)).sum::<f64>(),
    }
}

/// Five-point central differences with step `h` per coordinate.
pub fn numeric_gradient(model: &LinearSoftmaxModel, x: &[f64], kind: GradLoss, h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let at = |t: f64| {
                let mut y = x.to_vec();
                y[j] += t;
                loss(model, &y, kind)
            };
            (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
        })
        .collect()
}

/// Relative error of `grad` against the central-difference estimate, using
/// the norm of the larger vector as the scale.
pub fn gradient_error(model: &LinearSoftmaxModel, x: &[f64], kind: GradLoss) -> f64 {
    let analytic = model
        .grad_input(&FeatureVector::new(x.to_vec()).unwrap(), kind)
        .unwrap()
        .into_inner();
    let numeric = numeric_gradient(model, x, kind, 1e-3);
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / norm(&analytic).max(norm(&numeric)).max(1e-8)
}

pub fn random_model(rng: &mut dyn RngCore) -> (LinearSoftmaxModel, Vec<f64>) {
    let k = rng.random_range(2..=6);
    let d = rng.random_range(1..=8);
    let w = (0..k).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let b = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    (LinearSoftmaxModel::new(w, b).unwrap(), x)
}
