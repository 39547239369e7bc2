use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, GradLoss};
use crate::dataset::{LabeledDataset, Record};
use crate::error::{Error, Result};
use crate::types::FeatureVector;

/// Which part of a dataset is perturbed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMode {
    In,
    Out,
    Both,
}

impl AttackMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackMode::In => "in",
            AttackMode::Out => "out",
            AttackMode::Both => "both",
        }
    }

    fn targets(self, ood: bool) -> bool {
        match self {
            AttackMode::In => !ood,
            AttackMode::Out => ood,
            AttackMode::Both => true,
        }
    }
}

impl fmt::Display for AttackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in" => Ok(AttackMode::In),
            "out" => Ok(AttackMode::Out),
            "both" => Ok(AttackMode::Both),
            other => Err(Error::InvalidConfig(format!(
                "unknown attack mode '{other}' (expected in, out or both)"
            ))),
        }
    }
}

/// Copy of `data` with the rows selected by `mode` replaced by their PGD
/// perturbations. Row order, ids and labels are kept.
pub fn attack_dataset(
    model: &dyn Backend,
    data: &LabeledDataset,
    mode: AttackMode,
    eps: f64,
    steps: usize,
    step_size: f64,
) -> Result<LabeledDataset> {
    let records = data
        .records()
        .par_iter()
        .map(|r| {
            if !mode.targets(r.ood) {
                return Ok(r.clone());
            }
            Ok(Record {
                features: pgd_attack(model, &r.features, !r.ood, eps, steps, step_size)?,
                ..r.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(records, data.labels().clone())
}

/// L-infinity PGD that pushes a sample across the detector's decision:
/// in-distribution inputs descend the cross-entropy to the uniform
/// distribution (looking less confident), OOD inputs descend the entropy
/// (looking more confident). Each step moves `step_size` along the gradient
/// sign and projects back into the `eps` box around `x`.
pub fn pgd_attack(
    model: &dyn Backend,
    x: &FeatureVector,
    is_id: bool,
    eps: f64,
    steps: usize,
    step_size: f64,
) -> Result<FeatureVector> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::Engine(format!("eps must be >= 0, got {eps}")));
    }
    if !(step_size.is_finite() && step_size >= 0.0) {
        return Err(Error::Engine(format!("step size must be >= 0, got {step_size}")));
    }
    let loss = if is_id { GradLoss::CeUniform } else { GradLoss::Entropy };
    let origin = x.as_slice();
    let mut cur = x.clone();
    for _ in 0..steps {
        let g = model.grad_input(&cur, loss)?;
        let next: Vec<f64> = cur
            .as_slice()
            .iter()
            .zip(g.as_slice())
            .zip(origin)
            .map(|((&v, &gi), &o)| {
                let stepped = v - step_size * sign(gi);
                stepped.clamp(o - eps, o + eps)
            })
            .collect();
        cur = FeatureVector::new(next)?;
    }
    Ok(cur)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
