use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    find_calibrating_aux, lattice, omega_terms, sample_synthetic, verify_taylor_decay, DecayReport,
    LatticePoint, Margin, SyntheticSpec,
};
use crate::backend::{fit_logistic, LinearSoftmaxModel};
use crate::dataset::LabeledDataset;
use crate::engine::select_rng as rng_for;
use crate::error::{Error, Result};
use crate::scoring::ScoreKind;

const PAIR_STREAM: u64 = 1;
const HARD_STREAM: u64 = 2;
const MLS_STREAM: u64 = 3;

/// Knobs for the full verification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Random (target, auxiliary) pairs for the decay check.
    pub pairs: usize,
    pub lambdas: Vec<f64>,
    /// Absolute residual bound at the ratio closest to 1.
    pub near_one_tolerance: f64,
    /// Required share of pairs meeting the per-pair checks.
    pub required_fraction: f64,
    /// Hard-OOD (target, oracle) pairs for the existence check.
    pub hard_pairs: usize,
    pub calibration_lambda: f64,
    pub lattice_half_width: f64,
    pub lattice_points: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 0.01,
            pairs: 200,
            lambdas: vec![0.5, 0.7, 0.9, 0.99],
            near_one_tolerance: 1e-3,
            required_fraction: 0.95,
            hard_pairs: 100,
            calibration_lambda: 0.5,
            lattice_half_width: 27.0,
            lattice_points: 109,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub checks: Vec<Check>,
    pub decay: Vec<DecayReport>,
    /// Lattice verdicts for the first sampled hard-OOD pair under MSP.
    #[serde(skip)]
    pub lattice: Vec<LatticePoint>,
    pub model: LinearSoftmaxModel,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

/// Median ratio of MSP residuals at `1 - 2δ` and `1 - δ`; close to 8 when the
/// residual is third order in `1 - λ`.
fn doubling_ratio(model: &LinearSoftmaxModel, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let delta = 0.01;
    let mut ratios = Vec::new();
    for (t, i) in pairs {
        let near = omega_terms(model, ScoreKind::Msp, t, i, 1.0 - delta)?.residual.abs();
        let far = omega_terms(model, ScoreKind::Msp, t, i, 1.0 - 2.0 * delta)?.residual.abs();
        if near > 1e-14 {
            ratios.push(far / near);
        }
    }
    if ratios.is_empty() {
        return Ok(f64::NAN);
    }
    ratios.sort_by(f64::total_cmp);
    Ok(ratios[ratios.len() / 2])
}

/// Points whose margins run from `bound` outward, obtained by moving `x` along
/// the margin normal.
fn probes_beyond(margin: &Margin, x: &[f64], f_x: f64, bound: f64) -> Vec<Vec<f64>> {
    let norm2: f64 = margin.w.iter().map(|w| w * w).sum();
    let dir = if bound >= f_x { 1.0 } else { -1.0 };
    let span = bound.abs().max(1.0);
    (0..=40)
        .map(|k| {
            let target = bound + dir * span * k as f64 / 4.0;
            let shift = (target - f_x) / norm2;
            x.iter().zip(&margin.w).map(|(xi, w)| xi + shift * w).collect()
        })
        .collect()
}

/// Samples the spec, fits a logistic model on the ID rows, and runs the decay,
/// existence and closed-form checks.
pub fn run_suite(spec: &SyntheticSpec, opts: &SuiteOptions) -> Result<SuiteReport> {
    let data = sample_synthetic(spec)?;
    if data.num_classes() != 2 || data.dim() != 2 {
        return Err(Error::Theory(format!(
            "the verification suite needs two ID classes in two dimensions, got {} classes in {} dimensions",
            data.num_classes(),
            data.dim()
        )));
    }
    let model = fit_logistic(&data, opts.epochs, opts.learning_rate)?.model;
    run_suite_with_model(spec.seed, &data, model, opts)
}

pub fn run_suite_with_model(
    seed: u64,
    data: &LabeledDataset,
    model: LinearSoftmaxModel,
    opts: &SuiteOptions,
) -> Result<SuiteReport> {
    let margin = Margin::of(&model)?;
    let rows: Vec<&[f64]> = data.records().iter().map(|r| r.features.as_slice()).collect();
    let mut checks = Vec::new();

    let mut rng = rng_for(seed, PAIR_STREAM);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..opts.pairs)
        .map(|_| {
            let t = rng.random_range(0..rows.len());
            let i = rng.random_range(0..rows.len());
            (rows[t].to_vec(), rows[i].to_vec())
        })
        .collect();

    let decay: Vec<DecayReport> = [ScoreKind::Msp, ScoreKind::Entropy, ScoreKind::Mls]
        .into_iter()
        .map(|k| verify_taylor_decay(&model, k, &pairs, &opts.lambdas))
        .collect::<Result<_>>()?;
    let msp = &decay[0];
    let near = msp.lambdas.len() - 1;
    let frac = msp.fraction_within(near, opts.near_one_tolerance);
    checks.push(check(
        "taylor_msp_near_one",
        frac >= opts.required_fraction,
        format!(
            "{:.1}% of pairs have |residual| <= {} at λ = {}",
            100.0 * frac,
            opts.near_one_tolerance,
            msp.lambdas[near]
        ),
    ));
    let aggregate = msp.max_residual.windows(2).all(|w| w[1] <= w[0]);
    checks.push(check(
        "taylor_msp_monotone",
        aggregate && msp.monotone_fraction >= opts.required_fraction,
        format!(
            "max residual shrinks toward 1: {aggregate}; {:.1}% of pairs shrink monotonically",
            100.0 * msp.monotone_fraction
        ),
    ));
    for r in &decay[..2] {
        checks.push(check(
            &format!("taylor_{}_decay", r.score.as_str()),
            r.passed,
            format!(
                "fitted C = {:.3e} with slack {} over {} of {} pairs",
                r.constant,
                r.slack,
                r.smooth_pairs,
                r.residuals.len()
            ),
        ));
    }
    let mls_max = decay[2].max_residual.iter().fold(0.0, |a: f64, &b| a.max(b));
    checks.push(check(
        "taylor_mls_exact",
        mls_max == 0.0,
        format!("largest MLS residual {mls_max:e}"),
    ));
    let mut omega2_max: f64 = 0.0;
    for (t, i) in &pairs {
        for &l in &opts.lambdas {
            for k in [ScoreKind::Msp, ScoreKind::Entropy, ScoreKind::Mls] {
                omega2_max = omega2_max.max(omega_terms(&model, k, t, i, l)?.omega2.abs());
            }
        }
    }
    checks.push(check("omega2_zero", omega2_max == 0.0, format!("largest |ω2| {omega2_max:e}")));
    let ratio = doubling_ratio(&model, &pairs)?;
    checks.push(check(
        "taylor_msp_doubling",
        (7.0..=9.0).contains(&ratio),
        format!("median residual ratio when doubling 1 - λ near 1: {ratio:.3}"),
    ));

    // Existence of calibrating auxiliaries.
    let grid = lattice(opts.lattice_half_width, opts.lattice_points)?;
    let f: Vec<f64> = rows.iter().map(|x| margin.eval(x)).collect();
    let ood: Vec<usize> = (0..rows.len()).filter(|&j| data.records()[j].ood).collect();
    let id: Vec<usize> = (0..rows.len()).filter(|&j| !data.records()[j].ood).collect();
    let hard: Vec<(usize, usize)> = ood
        .iter()
        .flat_map(|&t| id.iter().map(move |&m| (t, m)))
        .filter(|&(t, m)| super::is_hard_ood(f[t], f[m]))
        .collect();
    let mut rng = rng_for(seed, HARD_STREAM);
    let chosen: Vec<(usize, usize)> = sample(&mut rng, hard.len(), opts.hard_pairs.min(hard.len()))
        .iter()
        .map(|j| hard[j])
        .collect();
    let mut found = 0;
    let mut bound_hits = 0;
    let mut bound_misses = 0;
    let mut lattice_dump = Vec::new();
    for (n, &(t, m)) in chosen.iter().enumerate() {
        let r = find_calibrating_aux(&model, ScoreKind::Msp, rows[t], rows[m], opts.calibration_lambda, &grid)?;
        found += usize::from(r.any_qualifies());
        // The bound usually lies far outside the lattice, so probe beyond it
        // along the margin direction.
        if let Some(b) = r.bound {
            let probes = probes_beyond(&margin, rows[t], r.f_target, b);
            let pr = find_calibrating_aux(&model, ScoreKind::Msp, rows[t], rows[m], opts.calibration_lambda, &probes)?;
            for p in r.points.iter().chain(&pr.points) {
                if p.bound_ok == Some(true) && p.quadratic_ok == Some(true) {
                    bound_hits += 1;
                    bound_misses += usize::from(!p.qualifies);
                }
            }
        }
        if n == 0 {
            lattice_dump = r.points;
        }
    }
    let exist = if chosen.is_empty() { 0.0 } else { found as f64 / chosen.len() as f64 };
    checks.push(check(
        "existence_msp",
        !chosen.is_empty() && exist >= opts.required_fraction,
        format!(
            "{found} of {} hard OOD pairs have a qualifying auxiliary ({} candidates in total)",
            chosen.len(),
            hard.len()
        ),
    ));
    checks.push(check(
        "bound_implies_positive",
        bound_hits > 0 && bound_misses == 0,
        format!("{bound_hits} candidates clear both sufficient conditions, {bound_misses} of them fail"),
    ));

    let less_confident: Vec<(usize, usize)> = (0..rows.len())
        .flat_map(|t| id.iter().map(move |&m| (t, m)))
        .filter(|&(t, m)| 0.0 < f[t] && f[t] < f[m])
        .collect();
    let mut rng = rng_for(seed, MLS_STREAM);
    let mls_pairs: Vec<(usize, usize)> =
        sample(&mut rng, less_confident.len(), opts.hard_pairs.min(less_confident.len()))
            .iter()
            .map(|j| less_confident[j])
            .collect();
    let mut all_points = !mls_pairs.is_empty();
    for &(t, m) in &mls_pairs {
        let r = find_calibrating_aux(&model, ScoreKind::Mls, rows[t], rows[m], opts.calibration_lambda, &grid)?;
        all_points &= r.points.iter().all(|p| p.qualifies);
    }
    checks.push(check(
        "existence_mls",
        all_points,
        format!(
            "every lattice point qualifies for {} pairs with a less confident target",
            mls_pairs.len()
        ),
    ));

    Ok(SuiteReport {
        checks,
        decay,
        lattice: lattice_dump,
        model,
    })
}
