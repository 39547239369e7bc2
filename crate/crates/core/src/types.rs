//! Vectors, model outputs and access levels shared by every subsystem.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a probability vector.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

/// A point in input (or embedding) space. Non-empty and finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidData("feature vector must have dim >= 1".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "feature {pos} is not finite ({})",
                values[pos]
            )));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A feature vector with the identifier it was loaded under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub features: FeatureVector,
}

impl Sample {
    pub fn new(id: impl Into<String>, features: FeatureVector) -> Self {
        Self {
            id: id.into(),
            features,
        }
    }
}

/// Which part of the classifier's output a backend exposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessLevel {
    Logits,
    Probs,
    Labels,
    Embeddings,
}

impl AccessLevel {
    pub const ALL: [AccessLevel; 4] = [
        AccessLevel::Logits,
        AccessLevel::Probs,
        AccessLevel::Labels,
        AccessLevel::Embeddings,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AccessLevel::Logits => "logits",
            AccessLevel::Probs => "probs",
            AccessLevel::Labels => "labels",
            AccessLevel::Embeddings => "embeddings",
        }
    }

    pub fn output_kind(self) -> OutputKind {
        match self {
            AccessLevel::Logits => OutputKind::Logits,
            AccessLevel::Probs => OutputKind::Probs,
            AccessLevel::Labels => OutputKind::LabelOneHot,
            AccessLevel::Embeddings => OutputKind::Embedding,
        }
    }
}

impl fmt::Display for AccessLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccessLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logits" => Ok(AccessLevel::Logits),
            "probs" | "probabilities" => Ok(AccessLevel::Probs),
            "labels" | "label" => Ok(AccessLevel::Labels),
            "embeddings" | "embedding" => Ok(AccessLevel::Embeddings),
            other => Err(Error::InvalidConfig(format!("unknown access level '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Logits,
    Probs,
    LabelOneHot,
    Embedding,
}

/// One classifier response at a given access level.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    kind: OutputKind,
    values: Vec<f64>,
}

impl ModelOutput {
    pub fn new(kind: OutputKind, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidData("model output must not be empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("model output contains a non-finite value".into()));
        }
        match kind {
            OutputKind::Logits | OutputKind::Embedding => {}
            OutputKind::Probs => {
                if values.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::InvalidData(
                        "probability entries must lie in [0, 1]".into(),
                    ));
                }
                let sum: f64 = values.iter().sum();
                if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                    return Err(Error::InvalidData(format!(
                        "probabilities sum to {sum}, expected 1"
                    )));
                }
            }
            OutputKind::LabelOneHot => {
                let ones = values.iter().filter(|&&v| v == 1.0).count();
                let zeros = values.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || ones + zeros != values.len() {
                    return Err(Error::InvalidData(
                        "one-hot label must have exactly one entry equal to 1 and the rest 0"
                            .into(),
                    ));
                }
            }
        }
        Ok(Self { kind, values })
    }

    pub fn logits(values: Vec<f64>) -> Result<Self> {
        Self::new(OutputKind::Logits, values)
    }

    pub fn probs(values: Vec<f64>) -> Result<Self> {
        Self::new(OutputKind::Probs, values)
    }

    pub fn embedding(values: Vec<f64>) -> Result<Self> {
        Self::new(OutputKind::Embedding, values)
    }

    pub fn one_hot(class: usize, num_classes: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::InvalidData(format!(
                "class {class} out of range for {num_classes} classes"
            )));
        }
        let mut values = vec![0.0; num_classes];
        values[class] = 1.0;
        Ok(Self {
            kind: OutputKind::LabelOneHot,
            values,
        })
    }

    pub fn kind(&self) -> OutputKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Number of classes, absent for embeddings.
    pub fn num_classes(&self) -> Option<usize> {
        match self.kind {
            OutputKind::Embedding => None,
            _ => Some(self.values.len()),
        }
    }

    /// Predicted class; `None` for embeddings.
    pub fn argmax(&self) -> Option<usize> {
        match self.kind {
            OutputKind::Embedding => None,
            _ => Some(argmax(&self.values)),
        }
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
