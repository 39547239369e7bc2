//! Numerical checks of the second-order Mixup decomposition for binary
//! linear models, where the two logits collapse to a scalar margin
//! `f(x) = w·x + b`.
//!
//! Scores are written as functions of the margin:
//!
//! - MSP: `h(f) = -max(σ(f), 1 - σ(f))`
//! - Entropy: binary entropy of `σ(f)`
//! - MLS: `h(f) = -f`
//!
//! Energy and MCM have no closed-form derivatives here and are rejected.

mod calibrate;
mod suite;
mod synthetic;
mod taylor;

pub use calibrate::{
    find_calibrating_aux, is_hard_ood, lattice, lattice_to_csv, CalibrationReport, LatticePoint,
};
pub use suite::{run_suite, run_suite_with_model, Check, SuiteOptions, SuiteReport};
pub use synthetic::{sample_synthetic, Component, Role, SyntheticSpec};
pub use taylor::{verify_taylor_decay, DecayReport};

use serde::Serialize;

use crate::backend::LinearSoftmaxModel;
use crate::error::{Error, Result};
use crate::scoring::ScoreKind;

/// Scalar margin of a two-class linear model.
#[derive(Clone, Debug, PartialEq)]
pub struct Margin {
    pub w: Vec<f64>,
    pub b: f64,
}

impl Margin {
    pub fn of(model: &LinearSoftmaxModel) -> Result<Self> {
        let (w, b) = model.binary_margin()?;
        Ok(Self { w, b })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b
    }

    /// `(x - y)·w`, the margin difference without the bias.
    pub fn diff(&self, x: &[f64], y: &[f64]) -> f64 {
        self.w.iter().zip(x.iter().zip(y)).map(|(w, (a, b))| w * (a - b)).sum()
    }
}

fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn sigmoid_d1(f: f64) -> f64 {
    let s = sigmoid(f);
    s * (1.0 - s)
}

fn sigmoid_d2(f: f64) -> f64 {
    let s = sigmoid(f);
    s * (1.0 - s) * (1.0 - 2.0 * s)
}

/// A margin-space score with its first two derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MarginScore(ScoreKind);

impl MarginScore {
    pub fn new(kind: ScoreKind) -> Result<Self> {
        match kind {
            ScoreKind::Msp | ScoreKind::Entropy | ScoreKind::Mls => Ok(Self(kind)),
            other => Err(Error::Theory(format!(
                "derivatives not implemented for {}",
                other.as_str()
            ))),
        }
    }

    pub fn kind(self) -> ScoreKind {
        self.0
    }

    pub fn h(self, f: f64) -> f64 {
        match self.0 {
            ScoreKind::Msp => {
                let s = sigmoid(f);
                -s.max(1.0 - s)
            }
            ScoreKind::Entropy => {
                let (p, q) = (sigmoid(f), sigmoid(-f));
                let term = |v: f64| if v > 0.0 { -v * v.ln() } else { 0.0 };
                term(p) + term(q)
            }
            _ => -f,
        }
    }

    /// First derivative. MSP takes the one-sided value `σ'` at `f = 0`.
    pub fn d1(self, f: f64) -> f64 {
        match self.0 {
            ScoreKind::Msp if f > 0.0 => -sigmoid_d1(f),
            ScoreKind::Msp => sigmoid_d1(f),
            ScoreKind::Entropy => -f * sigmoid_d1(f),
            _ => -1.0,
        }
    }

    pub fn d2(self, f: f64) -> f64 {
        match self.0 {
            ScoreKind::Msp if f > 0.0 => -sigmoid_d2(f),
            ScoreKind::Msp => sigmoid_d2(f),
            ScoreKind::Entropy => -sigmoid_d1(f) - f * sigmoid_d2(f),
            _ => 0.0,
        }
    }
}

/// First- and second-order contributions of mixing `x_t` toward `x_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OmegaTerms {
    pub omega1: f64,
    /// Always zero for a linear margin.
    pub omega2: f64,
    pub omega3: f64,
    pub lambda: f64,
    /// `h(f(x_t))`.
    pub base_score: f64,
    pub approx: f64,
    /// Score of the mixed sample.
    pub exact: f64,
    pub residual: f64,
}

/// Decomposition terms from the target and auxiliary margins alone.
pub(crate) fn omega_from_margins(h: MarginScore, f_t: f64, f_i: f64, lambda: f64) -> OmegaTerms {
    let d = f_t - f_i;
    let step = lambda - 1.0;
    let omega1 = step * d * h.d1(f_t);
    let omega2 = 0.0;
    let omega3 = step * step / 2.0 * d * d * h.d2(f_t);
    let base_score = h.h(f_t);
    let approx = base_score + omega1 + omega2 + omega3;
    let exact = h.h(f_t + step * d);
    OmegaTerms {
        omega1,
        omega2,
        omega3,
        lambda,
        base_score,
        approx,
        exact,
        residual: exact - approx,
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::Theory(format!("mixing ratio must lie in (0, 1), got {lambda}")))
    }
}

/// Taylor terms of `h(f(λ x_t + (1-λ) x_i))` around `x_t`. The mixed margin
/// is taken as `f(x_t) + (λ-1)(x_t - x_i)·w`, which is exact for a linear
/// model and keeps the affine MLS case free of rounding.
pub fn omega_terms(
    model: &LinearSoftmaxModel,
    kind: ScoreKind,
    x_t: &[f64],
    x_i: &[f64],
    lambda: f64,
) -> Result<OmegaTerms> {
    let h = MarginScore::new(kind)?;
    let margin = Margin::of(model)?;
    check_lambda(lambda)?;
    if x_t.len() != margin.w.len() || x_i.len() != margin.w.len() {
        return Err(Error::DimensionMismatch {
            expected: margin.w.len(),
            actual: if x_t.len() != margin.w.len() { x_t.len() } else { x_i.len() },
        });
    }
    let f_t = margin.eval(x_t);
    let d = margin.diff(x_t, x_i);
    Ok(omega_from_margins(h, f_t, f_t - d, lambda))
}
