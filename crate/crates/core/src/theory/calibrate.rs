use rayon::prelude::*;
use serde::Serialize;

use super::{check_lambda, omega_from_margins, sigmoid_d1, Margin, MarginScore};
use crate::backend::LinearSoftmaxModel;
use crate::error::{Error, Result};
use crate::scoring::ScoreKind;

/// The target is more confident than the oracle exemplar about the same class.
pub fn is_hard_ood(f_t: f64, f_m: f64) -> bool {
    (0.0 < f_m && f_m < f_t) || (f_t < f_m && f_m < 0.0)
}

/// Verdict for one candidate auxiliary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticePoint {
    pub x: Vec<f64>,
    /// Second-order estimate of the calibrated score difference.
    pub value: f64,
    pub qualifies: bool,
    /// Whether the auxiliary margin clears the sufficient first-order bound
    /// (MSP only).
    pub bound_ok: Option<bool>,
    /// Whether the second-order quadratic in the auxiliary margin is
    /// non-negative (when the oracle curvature is non-zero).
    pub quadratic_ok: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub score: ScoreKind,
    pub lambda: f64,
    pub f_target: f64,
    pub f_oracle: f64,
    /// For MLS the difference does not depend on the auxiliary and equals
    /// `λ (f(x_m) - f(x_t))`.
    pub closed_form: Option<f64>,
    /// Auxiliary-margin threshold of the first-order bound (MSP only).
    pub bound: Option<f64>,
    pub points: Vec<LatticePoint>,
}

impl CalibrationReport {
    pub fn qualifying(&self) -> Vec<&[f64]> {
        self.points.iter().filter(|p| p.qualifies).map(|p| p.x.as_slice()).collect()
    }

    pub fn any_qualifies(&self) -> bool {
        self.points.iter().any(|p| p.qualifies)
    }
}

/// `n` evenly spaced points per axis over `[-half_width, half_width]^2`,
/// first coordinate outermost.
pub fn lattice(half_width: f64, n: usize) -> Result<Vec<Vec<f64>>> {
    if !(half_width.is_finite() && half_width > 0.0) || n < 2 {
        return Err(Error::Theory(format!(
            "lattice needs a positive half-width and at least 2 points per axis, got {half_width} and {n}"
        )));
    }
    let step = 2.0 * half_width / (n - 1) as f64;
    let axis: Vec<f64> = (0..n).map(|k| -half_width + step * k as f64).collect();
    Ok(axis
        .iter()
        .flat_map(|&a| axis.iter().map(move |&b| vec![a, b]))
        .collect())
}

/// `x,y,qualifies` rows for two-dimensional lattices.
pub fn lattice_to_csv(points: &[LatticePoint]) -> String {
    let mut out = String::from("x,y,qualifies\n");
    for p in points {
        let y = p.x.get(1).copied().unwrap_or(0.0);
        out.push_str(&format!("{},{},{}\n", p.x[0], y, u8::from(p.qualifies)));
    }
    out
}

/// Sufficient first-order threshold on the auxiliary margin for MSP, stated
/// for positive margins and mirrored for negative ones.
fn msp_bound(f_t: f64, f_m: f64, lambda: f64) -> (f64, bool) {
    let sign = if f_t > 0.0 { 1.0 } else { -1.0 };
    let (t, m) = (sign * f_t, sign * f_m);
    let c = t - m;
    let lower = t + (1.0 / (2.0 * (lambda - 1.0)) + c * sigmoid_d1(m)) / (sigmoid_d1(t) - sigmoid_d1(m));
    (sign * lower, sign > 0.0)
}

/// Auxiliaries from `grid` for which the second-order estimate of
/// `h(f(x_t)) - h(f(x_m))` after mixing both toward `x_i` is positive.
///
/// MSP and Entropy need a hard OOD target (`0 < f(x_m) < f(x_t)` or the
/// mirrored case); MLS only needs both margins on the same side.
pub fn find_calibrating_aux(
    model: &LinearSoftmaxModel,
    kind: ScoreKind,
    x_t: &[f64],
    x_m: &[f64],
    lambda: f64,
    grid: &[Vec<f64>],
) -> Result<CalibrationReport> {
    let h = MarginScore::new(kind)?;
    let margin = Margin::of(model)?;
    check_lambda(lambda)?;
    let dim = margin.w.len();
    for v in std::iter::once(x_t).chain(std::iter::once(x_m)).chain(grid.iter().map(Vec::as_slice)) {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
    }
    let f_t = margin.eval(x_t);
    let f_m = margin.eval(x_m);
    let precondition = match kind {
        ScoreKind::Mls => f_t * f_m > 0.0,
        _ => is_hard_ood(f_t, f_m),
    };
    if !precondition {
        return Err(Error::Theory(format!(
            "target is not hard OOD for this oracle (f(x_t) = {f_t}, f(x_m) = {f_m})"
        )));
    }

    let (closed_form, bound) = match kind {
        ScoreKind::Mls => (Some(lambda * (f_m - f_t)), None),
        ScoreKind::Msp => (None, Some(msp_bound(f_t, f_m, lambda))),
        _ => (None, None),
    };
    let curv_m = h.d2(f_m);
    let tau = h.d2(f_t) / curv_m;
    let c = f_t - f_m;
    let quadratic = |f_i: f64| {
        (tau - 1.0) * f_i * f_i - 2.0 * ((tau - 1.0) * f_t + c) * f_i + (tau - 1.0) * f_t * f_t
            + 2.0 * c * f_t
            - c * c
    };

    let points = grid
        .par_iter()
        .map(|x| {
            let f_i = margin.eval(x);
            let at_t = omega_from_margins(h, f_t, f_i, lambda);
            let at_m = omega_from_margins(h, f_m, f_i, lambda);
            let value = at_t.base_score - at_m.base_score + (at_t.omega1 + at_t.omega2 + at_t.omega3)
                - (at_m.omega1 + at_m.omega2 + at_m.omega3);
            let qualifies = match closed_form {
                Some(v) => v > 0.0,
                None => value > 0.0,
            };
            LatticePoint {
                x: x.clone(),
                value,
                qualifies,
                bound_ok: bound.map(|(b, above)| if above { f_i >= b } else { f_i <= b }),
                quadratic_ok: (curv_m != 0.0).then(|| quadratic(f_i) >= 0.0),
            }
        })
        .collect();

    Ok(CalibrationReport {
        score: kind,
        lambda,
        f_target: f_t,
        f_oracle: f_m,
        closed_form,
        bound: bound.map(|(b, _)| b),
        points,
    })
}
