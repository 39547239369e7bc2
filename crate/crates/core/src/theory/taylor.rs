use rayon::prelude::*;
use serde::Serialize;

use super::{check_lambda, omega_from_margins, Margin, MarginScore};
use crate::backend::LinearSoftmaxModel;
use crate::error::{Error, Result};
use crate::scoring::ScoreKind;

/// Residual sizes across a ratio grid and the quadratic-decay verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub score: ScoreKind,
    /// Ascending, so the last entry is closest to 1.
    pub lambdas: Vec<f64>,
    /// Largest absolute residual over all pairs, per ratio.
    pub max_residual: Vec<f64>,
    /// Pairs whose mixing path stays on one side of the decision boundary.
    /// Only these enter the decay criterion when the score has a kink there.
    pub smooth_pairs: usize,
    /// Fitted `C` in `|residual| <= slack * C * (1 - λ)^2`.
    pub constant: f64,
    pub slack: f64,
    pub passed: bool,
    /// Share of pairs whose residual never grows as λ approaches 1.
    pub monotone_fraction: f64,
    /// Absolute residual for every pair (rows) and ratio (columns).
    #[serde(skip)]
    pub residuals: Vec<Vec<f64>>,
}

impl DecayReport {
    /// Share of pairs whose absolute residual at `lambdas[index]` is at most `tol`.
    pub fn fraction_within(&self, index: usize, tol: f64) -> f64 {
        if self.residuals.is_empty() {
            return 0.0;
        }
        let hits = self.residuals.iter().filter(|r| r[index] <= tol).count();
        hits as f64 / self.residuals.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,max_residual\n");
        for (l, r) in self.lambdas.iter().zip(&self.max_residual) {
            out.push_str(&format!("{l},{r}\n"));
        }
        out
    }
}

pub const DECAY_SLACK: f64 = 10.0;

/// Evaluates the decomposition residual for every pair and ratio. `C` is the
/// largest `max_residual / (1 - λ)^2` among the two ratios closest to 1.
///
/// MSP is not differentiable at a zero margin, so for MSP the criterion only
/// uses pairs whose mixing path does not cross the decision boundary.
pub fn verify_taylor_decay(
    model: &LinearSoftmaxModel,
    kind: ScoreKind,
    pairs: &[(Vec<f64>, Vec<f64>)],
    lambdas: &[f64],
) -> Result<DecayReport> {
    let h = MarginScore::new(kind)?;
    let margin = Margin::of(model)?;
    if lambdas.len() < 2 {
        return Err(Error::Theory("decay check needs at least two ratios".into()));
    }
    if pairs.is_empty() {
        return Err(Error::Theory("decay check needs at least one pair".into()));
    }
    lambdas.iter().try_for_each(|&l| check_lambda(l))?;
    let mut grid = lambdas.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let dim = margin.w.len();
    if let Some((t, i)) = pairs.iter().find(|(t, i)| t.len() != dim || i.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: if t.len() != dim { t.len() } else { i.len() },
        });
    }

    let kinked = kind == ScoreKind::Msp;
    let evaluated: Vec<(Vec<f64>, bool)> = pairs
        .par_iter()
        .map(|(t, i)| {
            let f_t = margin.eval(t);
            let f_i = f_t - margin.diff(t, i);
            // The path from f_t toward f_i is linear, so it crosses zero
            // exactly when the two margins differ in sign.
            let smooth = !kinked || (f_t > 0.0) == (f_i > 0.0);
            let r = grid
                .iter()
                .map(|&l| omega_from_margins(h, f_t, f_i, l).residual.abs())
                .collect();
            (r, smooth)
        })
        .collect();
    let column_max = |j: usize, smooth_only: bool| {
        evaluated
            .iter()
            .filter(|(_, s)| *s || !smooth_only)
            .map(|(r, _)| r[j])
            .fold(0.0, f64::max)
    };
    let max_residual: Vec<f64> = (0..grid.len()).map(|j| column_max(j, false)).collect();
    let smooth_max: Vec<f64> = (0..grid.len()).map(|j| column_max(j, true)).collect();
    let smooth_pairs = evaluated.iter().filter(|(_, s)| *s).count();
    let residuals: Vec<Vec<f64>> = evaluated.into_iter().map(|(r, _)| r).collect();

    let gap2 = |l: f64| (1.0 - l) * (1.0 - l);
    let n = grid.len();
    let constant = (n - 2..n)
        .map(|j| smooth_max[j] / gap2(grid[j]))
        .fold(0.0, f64::max);
    let passed = grid
        .iter()
        .zip(&smooth_max)
        .all(|(&l, &r)| r <= DECAY_SLACK * constant * gap2(l));
    let monotone = residuals
        .iter()
        .filter(|r| r.windows(2).all(|w| w[1] <= w[0] + 1e-15))
        .count();

    Ok(DecayReport {
        score: kind,
        monotone_fraction: monotone as f64 / residuals.len() as f64,
        lambdas: grid,
        max_residual,
        smooth_pairs,
        constant,
        slack: DECAY_SLACK,
        passed,
        residuals,
    })
}
