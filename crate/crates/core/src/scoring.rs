//! Output-based OOD scores. Every function is oriented so that a larger
//! value means "more likely out-of-distribution".

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ModelOutput, OutputKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// Negative maximum softmax probability.
    Msp,
    /// Negative maximum logit.
    Mls,
    /// Negative log-sum-exp of the logits.
    Energy,
    /// Shannon entropy of the softmax (natural log).
    Entropy,
    /// Negative maximum of the temperature-scaled softmax.
    Mcm,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 5] = [
        ScoreKind::Msp,
        ScoreKind::Mls,
        ScoreKind::Energy,
        ScoreKind::Entropy,
        ScoreKind::Mcm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Msp => "msp",
            ScoreKind::Mls => "mls",
            ScoreKind::Energy => "energy",
            ScoreKind::Entropy => "entropy",
            ScoreKind::Mcm => "mcm",
        }
    }

    pub fn accepts_probs(self) -> bool {
        !matches!(self, ScoreKind::Mls | ScoreKind::Energy)
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "msp" => Ok(ScoreKind::Msp),
            "mls" => Ok(ScoreKind::Mls),
            "energy" => Ok(ScoreKind::Energy),
            "entropy" => Ok(ScoreKind::Entropy),
            "mcm" => Ok(ScoreKind::Mcm),
            other => Err(Error::InvalidConfig(format!("unknown score '{other}'"))),
        }
    }
}

/// A scoring function with its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreFn {
    pub kind: ScoreKind,
    /// Softmax temperature, used by MCM only.
    pub temperature: f64,
}

static MCM_PROBS_WARNED: AtomicBool = AtomicBool::new(false);

impl ScoreFn {
    pub fn new(kind: ScoreKind, temperature: f64) -> Self {
        Self { kind, temperature }
    }

    pub fn of(kind: ScoreKind) -> Self {
        Self::new(kind, 1.0)
    }

    pub fn score(&self, out: &ModelOutput) -> Result<f64> {
        self.score_values(out.kind(), out.values())
    }

    /// Scores a raw vector interpreted as `kind`. Used for averaged outputs,
    /// which need not satisfy every [`ModelOutput`] invariant bit-for-bit.
    pub fn score_values(&self, kind: OutputKind, values: &[f64]) -> Result<f64> {
        if values.is_empty() {
            return Err(Error::Scoring("cannot score an empty output".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Scoring("output contains a non-finite value".into()));
        }
        let s = match (self.kind, kind) {
            (_, OutputKind::LabelOneHot) => {
                return Err(Error::Scoring(format!(
                    "{} cannot score a one-hot label",
                    self.kind
                )))
            }
            (_, OutputKind::Embedding) => {
                return Err(Error::Scoring(format!(
                    "{} cannot score an embedding",
                    self.kind
                )))
            }
            (ScoreKind::Mls | ScoreKind::Energy, OutputKind::Probs) => {
                return Err(Error::Scoring(format!("{} requires logits", self.kind)))
            }
            (ScoreKind::Msp, OutputKind::Logits) => -max_softmax(values),
            (ScoreKind::Msp, OutputKind::Probs) => -max(values),
            (ScoreKind::Mls, OutputKind::Logits) => -max(values),
            (ScoreKind::Energy, OutputKind::Logits) => -logsumexp(values),
            (ScoreKind::Entropy, OutputKind::Logits) => entropy_of_logits(values),
            (ScoreKind::Entropy, OutputKind::Probs) => entropy_of_probs(values),
            (ScoreKind::Mcm, OutputKind::Logits) => {
                if !(self.temperature.is_finite() && self.temperature > 0.0) {
                    return Err(Error::Scoring(format!(
                        "temperature must be positive, got {}",
                        self.temperature
                    )));
                }
                let scaled: Vec<f64> = values.iter().map(|v| v / self.temperature).collect();
                -max_softmax(&scaled)
            }
            (ScoreKind::Mcm, OutputKind::Probs) => {
                if !MCM_PROBS_WARNED.swap(true, Ordering::Relaxed) {
                    log::warn!("mcm on probability outputs ignores the temperature and equals msp");
                }
                -max(values)
            }
        };
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::Scoring(format!("{} produced a non-finite score", self.kind)))
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Scoring("softmax of an empty vector".into()));
    }
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let m = max(logits);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let m = max(values);
    m + values.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

fn max(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn max_softmax(logits: &[f64]) -> f64 {
    let m = max(logits);
    1.0 / logits.iter().map(|&l| (l - m).exp()).sum::<f64>()
}

fn entropy_of_logits(logits: &[f64]) -> f64 {
    let lse = logsumexp(logits);
    -logits
        .iter()
        .map(|&l| {
            let log_p = l - lse;
            let p = log_p.exp();
            if p == 0.0 {
                0.0
            } else {
                p * log_p
            }
        })
        .sum::<f64>()
}

fn entropy_of_probs(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .sum::<f64>()
}
