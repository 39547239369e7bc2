//! Mixup perturbations and label encoding.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{argmax, FeatureVector, ModelOutput, OutputKind, Sample};

/// `lambda * x + (1 - lambda) * aux`, elementwise. `lambda` must lie in (0, 1].
pub fn mixup(x: &FeatureVector, aux: &FeatureVector, lambda: f64) -> Result<FeatureVector> {
    if x.dim() != aux.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            actual: aux.dim(),
        });
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Perturb(format!(
            "mixup ratio must lie in (0, 1], got {lambda}"
        )));
    }
    let mixed: Vec<f64> = x
        .as_slice()
        .iter()
        .zip(aux.as_slice())
        .map(|(&a, &b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    FeatureVector::new(mixed).map_err(|e| Error::Perturb(format!("mixup overflowed: {e}")))
}

/// One mixed vector and where it came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbedEntry {
    pub features: FeatureVector,
    pub source_id: String,
    pub aux_id: String,
    pub aux_index: usize,
    pub ratio_index: usize,
    pub lambda: f64,
}

/// All `N x R` mixtures of one source, ordered auxiliary-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbedBatch {
    pub num_aux: usize,
    pub num_ratios: usize,
    pub entries: Vec<PerturbedEntry>,
}

impl PerturbedBatch {
    pub fn get(&self, aux_index: usize, ratio_index: usize) -> &PerturbedEntry {
        &self.entries[aux_index * self.num_ratios + ratio_index]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn features(&self) -> Vec<FeatureVector> {
        self.entries.iter().map(|e| e.features.clone()).collect()
    }
}

pub fn perturb_batch(source: &Sample, aux: &[Sample], ratios: &[f64]) -> Result<PerturbedBatch> {
    if aux.is_empty() {
        return Err(Error::NoAuxiliary);
    }
    if ratios.is_empty() {
        return Err(Error::Perturb("empty ratio grid".into()));
    }
    let mut entries = Vec::with_capacity(aux.len() * ratios.len());
    for (i, a) in aux.iter().enumerate() {
        for (r, &lambda) in ratios.iter().enumerate() {
            entries.push(PerturbedEntry {
                features: mixup(&source.features, &a.features, lambda)?,
                source_id: source.id.clone(),
                aux_id: a.id.clone(),
                aux_index: i,
                ratio_index: r,
                lambda,
            });
        }
    }
    Ok(PerturbedBatch {
        num_aux: aux.len(),
        num_ratios: ratios.len(),
        entries,
    })
}

/// One-hot vector at the arg-max class; ties go to the lowest index.
pub fn one_hot(out: &ModelOutput) -> Result<ModelOutput> {
    match out.kind() {
        OutputKind::Logits | OutputKind::Probs => {
            ModelOutput::one_hot(argmax(out.values()), out.values().len())
        }
        OutputKind::LabelOneHot => Ok(out.clone()),
        OutputKind::Embedding => Err(Error::Perturb(
            "cannot one-hot encode an embedding".into(),
        )),
    }
}
