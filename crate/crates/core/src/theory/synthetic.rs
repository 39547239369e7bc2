use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, Record};
use crate::error::{Error, Result};
use crate::types::FeatureVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// In-distribution component carrying this class label.
    Id(usize),
    Ood,
}

/// One axis-aligned Gaussian component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub mean: Vec<f64>,
    /// Diagonal of the covariance.
    pub variance: Vec<f64>,
    pub count: usize,
    pub role: Role,
}

impl Component {
    pub fn isotropic(mean: &[f64], variance: f64, count: usize, role: Role) -> Self {
        Self {
            mean: mean.to_vec(),
            variance: vec![variance; mean.len()],
            count,
            role,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub components: Vec<Component>,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    /// Two ID classes on the left half-plane and two OOD blobs mirrored on the
    /// right, all with unit variance and 100 points.
    pub fn theory_default() -> Self {
        let c = |m: [f64; 2], role| Component::isotropic(&m, 1.0, 100, role);
        Self {
            components: vec![
                c([-3.0, -3.0], Role::Id(0)),
                c([-3.0, 3.0], Role::Id(1)),
                c([3.0, -3.0], Role::Ood),
                c([3.0, 3.0], Role::Ood),
            ],
            seed: 0,
        }
    }

    /// Three ID classes where a linear classifier is confidently wrong about
    /// the OOD blobs: one sits just below the far class, the other two lie
    /// beyond the near pair along the decision normal.
    pub fn overconfidence_benchmark(id_count: usize, ood_count: usize, seed: u64) -> Self {
        let c = |m: [f64; 2], count, role| Component::isotropic(&m, 1.0, count, role);
        Self {
            components: vec![
                c([-1.5, 0.0], id_count, Role::Id(0)),
                c([1.5, 0.0], id_count, Role::Id(1)),
                c([0.0, 8.0], id_count, Role::Id(2)),
                c([0.0, 7.0], ood_count, Role::Ood),
                c([-6.0, 0.0], ood_count, Role::Ood),
                c([6.0, 0.0], ood_count, Role::Ood),
            ],
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .components
            .first()
            .ok_or_else(|| Error::Theory("spec has no components".into()))?;
        let dim = first.mean.len();
        let mut classes: Vec<usize> = Vec::new();
        for (i, c) in self.components.iter().enumerate() {
            if c.mean.is_empty() || c.mean.len() != dim || c.variance.len() != dim {
                return Err(Error::Theory(format!(
                    "component {i}: mean and variance must both have length {dim}"
                )));
            }
            if let Some(v) = c.variance.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::Theory(format!(
                    "component {i}: covariance is not positive definite (variance {v})"
                )));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::Theory(format!("component {i}: mean is not finite")));
            }
            if c.count == 0 {
                return Err(Error::Theory(format!("component {i}: count must be >= 1")));
            }
            if let Role::Id(k) = c.role {
                if !classes.contains(&k) {
                    classes.push(k);
                }
            }
        }
        if classes.len() < 2 {
            return Err(Error::Theory("need ≥2 ID classes".into()));
        }
        Ok(())
    }
}

/// Draws every component in order from one seeded stream. Row ids are
/// `c<component>-<index>`.
pub fn sample_synthetic(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.components.iter().map(|c| c.count).sum());
    for (ci, c) in spec.components.iter().enumerate() {
        let axes: Vec<Normal<f64>> = c
            .mean
            .iter()
            .zip(&c.variance)
            .map(|(m, v)| Normal::new(*m, v.sqrt()).map_err(|e| Error::Theory(e.to_string())))
            .collect::<Result<_>>()?;
        for j in 0..c.count {
            let x: Vec<f64> = axes.iter().map(|n| n.sample(&mut rng)).collect();
            let (label, ood) = match c.role {
                Role::Id(k) => (Some(k), false),
                Role::Ood => (None, true),
            };
            records.push(Record {
                id: format!("c{ci}-{j}"),
                features: FeatureVector::new(x)?,
                label,
                ood,
            });
        }
    }
    LabeledDataset::with_numeric_labels(records)
}
