//! One check per acceptance criterion. Each writes a `PASS` or `FAIL` line
//! with the measured values to stderr; the test fails if any criterion does.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mixdiff_core::benchmark::{Benchmark, BenchmarkSizes, GAMMA_GRID};
use mixdiff_core::engine::{attack_dataset, tune_gamma, with_gamma, AttackMode, Engine, MixDiffResult};
use mixdiff_core::metrics::{aucpr, auroc, fpr_at_tpr, threshold_mass, ScoredSet};
use mixdiff_core::theory::{run_suite, SuiteOptions, SyntheticSpec};
use mixdiff_core::{
    AccessLevel, AuxStrategy, FeatureVector, GradLoss, LinearSoftmaxModel, MixDiffConfig,
    OracleSelection, Sample, ScoreKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{naive, oracles, wire};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn auc_of(results: &[MixDiffResult], pick: impl Fn(&MixDiffResult) -> f64) -> f64 {
    let set = ScoredSet::new(
        results.iter().map(&pick).collect(),
        results.iter().map(|r| r.ood.expect("benchmark rows are labeled")).collect(),
    )
    .unwrap();
    auroc(&set).unwrap()
}

fn engine_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut levels = BTreeMap::new();
    for _ in 0..200 {
        let case = naive::random_case(&mut rng);
        *levels.entry(case.level.to_string()).or_insert(0) += 1;
        worst = worst.max(naive::max_gap(&case));
    }
    let t = start.elapsed();
    verdict(
        worst <= 1e-12 && levels.len() == 4 && within(t, 10.0),
        format!("200 configurations, max gap {worst:e}, levels {levels:?}, {:.2}s", t.as_secs_f64()),
    )
}

fn trivial_symmetry() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let sample = |id: &str, v: Vec<f64>| Sample::new(id, FeatureVector::new(v).unwrap());
    for _ in 0..20 {
        let (model, x) = oracles::random_model(&mut rng);
        let d = x.len();
        let aux: Vec<Sample> = (0..3)
            .map(|j| sample(&format!("a{j}"), (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()))
            .collect();
        for level in [AccessLevel::Logits, AccessLevel::Probs, AccessLevel::Labels, AccessLevel::Embeddings] {
            for kind in ScoreKind::ALL {
                let cfg = MixDiffConfig {
                    num_aux: aux.len(),
                    num_ratios: 4,
                    oracle_size: 1,
                    gamma: 1.0,
                    access_level: level,
                    base_score: kind,
                    aux_strategy: AuxStrategy::RandomId,
                    oracle_selection: OracleSelection::ByPredictedLabel,
                    ..Default::default()
                };
                if cfg.validate().is_err() {
                    continue;
                }
                let engine = Engine::new(&model, Some(&model), cfg).unwrap();
                let cache = engine.build_oracle_cache(&[sample("o", x.clone())], &aux).unwrap();
                let r = engine.mixdiff_score(&sample("t", x.clone()), Some(&cache), &aux).unwrap();
                worst = worst.max(r.mixdiff_score.abs());
                checked += 1;
            }
        }
    }
    verdict(
        worst == 0.0,
        format!("{checked} level/score/model combinations, largest |mixdiff| {worst:e}"),
    )
}

fn theory() -> (Verdict, Verdict) {
    let start = Instant::now();
    let report = run_suite(&SyntheticSpec::theory_default(), &SuiteOptions::default()).unwrap();
    let t = start.elapsed().as_secs_f64();
    let line = |names: &[&str]| {
        let checks: Vec<_> = names.iter().map(|n| report.check(n).expect("check exists")).collect();
        let passed = checks.iter().all(|c| c.passed);
        let detail = checks
            .iter()
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect::<Vec<_>>()
            .join("; ");
        (passed, detail)
    };
    let (p3, d3) = line(&["taylor_msp_near_one", "taylor_msp_monotone", "taylor_mls_exact", "omega2_zero"]);
    let (p4, d4) = line(&["existence_msp", "existence_mls"]);
    (
        verdict(p3 && t < 5.0, format!("{d3}; suite {t:.2}s")),
        verdict(p4 && t < 30.0, format!("{d4}; suite {t:.2}s")),
    )
}

fn benchmark_directions() -> (Verdict, Verdict) {
    let start = Instant::now();
    let sizes = BenchmarkSizes::default();
    let mut gains = Vec::new();
    let mut label = Vec::new();
    let mut random = Vec::new();
    for seed in 0..10 {
        let b = Benchmark::build(seed, &sizes).unwrap();
        let cfg = Benchmark::config(AccessLevel::Logits, ScoreKind::Entropy);
        let val = b.detect(&b.validation, cfg.clone(), seed).unwrap();
        let gamma = tune_gamma(&val, &GAMMA_GRID).unwrap().gamma;
        let test = with_gamma(&b.detect(&b.test, cfg, seed).unwrap(), gamma);
        gains.push(auc_of(&test, |r| r.final_score) - auc_of(&test, |r| r.base_score.unwrap()));

        let labels = b
            .detect(&b.test, Benchmark::config(AccessLevel::Labels, ScoreKind::Entropy), seed)
            .unwrap();
        label.push(auc_of(&labels, |r| r.mixdiff_score));

        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let noise: Vec<f64> = (0..b.test.len()).map(|_| rng.random::<f64>()).collect();
        let flags = b.test.records().iter().map(|r| r.ood).collect();
        random.push(auroc(&ScoredSet::new(noise, flags).unwrap()).unwrap());
    }
    let t = start.elapsed().as_secs_f64();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let sd = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let gain = mean(&gains);
    let (lab, rnd, rnd_sd) = (mean(&label), mean(&random), sd(&random));
    (
        verdict(
            gain >= 0.02 && t < 60.0,
            format!("mean AUROC gain {gain:.4} over 10 seeds (min {:.4}), {t:.2}s", gains.iter().cloned().fold(f64::INFINITY, f64::min)),
        ),
        verdict(
            lab >= 0.55 && (rnd - 0.5).abs() <= 0.03 && rnd_sd <= 0.03,
            format!("label-mode mixdiff-only AUROC {lab:.4}; uniform random score {rnd:.4} ± {rnd_sd:.4}"),
        ),
    )
}

fn metric_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (scores, ood) = oracles::random_scored(&mut rng, 30);
        let set = ScoredSet::new(scores.clone(), ood.clone()).unwrap();
        let m = threshold_mass(&set, 0.95).unwrap();
        let (a, b, c, d) = oracles::mass(&scores, &ood, 0.95);
        for (x, y) in [
            (auroc(&set).unwrap(), oracles::auroc(&scores, &ood)),
            (aucpr(&set).unwrap(), oracles::average_precision(&scores, &ood)),
            (fpr_at_tpr(&set, 0.95).unwrap(), oracles::fpr_at(&scores, &ood, 0.95)),
            (m.threshold, oracles::threshold(&scores, &ood, 0.95)),
            (m.id_over, a),
            (m.id_under, b),
            (m.ood_over, c),
            (m.ood_under, d),
        ] {
            worst = worst.max((x - y).abs());
        }
    }
    let perfect = auroc(&ScoredSet::new(vec![0.1, 0.2, 0.9, 1.5], vec![false, false, true, true]).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scores: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
    let flags: Vec<bool> = (0..2000).map(|_| rng.random_bool(0.5)).collect();
    let chance = auroc(&ScoredSet::new(scores, flags).unwrap()).unwrap();
    verdict(
        worst <= 1e-12 && perfect == 1.0 && (0.45..=0.55).contains(&chance),
        format!("max deviation {worst:e} over 100 sets; perfect {perfect}; random n=2000 {chance:.4}"),
    )
}

fn wire_fidelity() -> Verdict {
    let r = wire::run(500);
    verdict(
        r.targets == 500 && r.max_gap <= 1e-8 && r.mismatch_status == 403 && r.client_denied && r.probs_only,
        format!(
            "{} targets, max gap {:e}; mismatch status {}; probs server emits probabilities only: {}",
            r.targets, r.max_gap, r.mismatch_status, r.probs_only
        ),
    )
}

fn adversarial_direction() -> Verdict {
    let b = Benchmark::build(0, &BenchmarkSizes::default()).unwrap();
    let mut cfg = Benchmark::config(AccessLevel::Logits, ScoreKind::Entropy);
    cfg.mixdiff_only = true;
    let mut base = Vec::new();
    let mut only = Vec::new();
    for steps in [0, 1, 5, 10] {
        let adv = attack_dataset(&b.model, &b.test, AttackMode::Both, 0.5, steps, 0.05).unwrap();
        let res = b.detect(&adv, cfg.clone(), 0).unwrap();
        base.push(auc_of(&res, |r| r.base_score.unwrap()));
        only.push(auc_of(&res, |r| r.mixdiff_score));
    }
    let monotone = base.windows(2).all(|w| w[1] <= w[0]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
    verdict(
        monotone && only[3] > base[3],
        format!("steps 0/1/5/10: base [{}], mixdiff-only [{}]", fmt(&base), fmt(&only)),
    )
}

fn gradient_check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (model, x): (LinearSoftmaxModel, Vec<f64>) = oracles::random_model(&mut rng);
        for loss in [GradLoss::CeUniform, GradLoss::Entropy] {
            worst = worst.max(oracles::gradient_error(&model, &x, loss));
        }
    }
    verdict(worst < 1e-5, format!("largest relative error {worst:e} over 100 instances, 2 losses"))
}

fn mixdiff(cwd: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_mixdiff"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "mixdiff {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Every file under `dir`, with wall-clock timings dropped from manifests.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let mut bytes = fs::read(&p).unwrap();
            if p.file_name().is_some_and(|n| n == "manifest.json") {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                v.as_object_mut().unwrap().remove("timings_ms");
                bytes = serde_json::to_vec(&v).unwrap();
            }
            files.insert(p.strip_prefix(dir).unwrap().display().to_string(), bytes);
        }
    }
    files
}

/// Runs every subcommand inside `root` with relative paths, so manifests
/// from different roots are comparable.
fn run_all_commands(root: &Path) {
    mixdiff(root, &["synth", "--preset", "benchmark", "--seed", "3", "--out", "bench"]);
    mixdiff(root, &["synth", "--preset", "theory", "--seed", "3", "--out", "mixture"]);
    mixdiff(root, &["fit", "--data", "bench/train.csv", "--out", "fit/model.json", "--epochs", "50"]);
    let backend = "local:bench/model.json";
    for (name, extra) in [
        ("detect_logits", vec!["--base-score", "entropy", "--gamma", "8"]),
        ("detect_labels", vec!["--access-level", "labels"]),
        ("detect_in_batch", vec!["--aux-strategy", "in_batch", "--oracle-selection", "unlabeled_top_m"]),
    ] {
        let mut args = vec![
            "detect", "--data", "bench/test.csv", "--oracles", "bench/train.csv",
            "--backend", backend, "--out", name, "--seed", "5", "--keep-terms",
        ];
        args.extend(extra);
        mixdiff(root, &args);
    }
    mixdiff(root, &["verify-theory", "--out", "theory", "--seed", "7", "--pairs", "50", "--hard-pairs", "20"]);
    mixdiff(root, &[
        "attack", "--data", "bench/validation.csv", "--oracles", "bench/train.csv",
        "--model", backend, "--out", "attack", "--steps", "0,2", "--mode", "in,out",
    ]);
}

fn determinism() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all_commands(a.path());
    run_all_commands(b.path());
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    let differing: Vec<&String> = sa
        .iter()
        .filter(|(k, v)| sb.get(*k) != Some(v))
        .map(|(k, _)| k)
        .collect();
    verdict(
        sa.len() == sb.len() && sa.len() > 20 && differing.is_empty(),
        format!("{} output files across 9 commands, differing: {differing:?}", sa.len()),
    )
}

#[test]
fn acceptance() {
    let (c3, c4) = theory();
    let (c5, c6) = benchmark_directions();
    let verdicts = [
        ("engine equals reference transcription", engine_equivalence()),
        ("target equal to oracle scores zero", trivial_symmetry()),
        ("second-order residual behaviour", c3),
        ("calibrating auxiliaries exist", c4),
        ("detection improves on the benchmark", c5),
        ("label mode beats chance", c6),
        ("metrics match brute force", metric_oracles()),
        ("remote runs match local runs", wire_fidelity()),
        ("perturbation score is more robust to PGD", adversarial_direction()),
        ("input gradients match finite differences", gradient_check()),
        ("commands are deterministic", determinism()),
    ];
    // Written to the stream directly so the lines survive output capture.
    let mut err = std::io::stderr().lock();
    let mut failed = Vec::new();
    for (i, (name, v)) in verdicts.iter().enumerate() {
        let status = if v.passed { "PASS" } else { "FAIL" };
        writeln!(err, "{status} {:>2} {name}: {}", i + 1, v.detail).unwrap();
        if !v.passed {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
