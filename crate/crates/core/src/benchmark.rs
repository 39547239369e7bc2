//! Desk-scale detection benchmark on Gaussian blobs where a linear classifier
//! is confidently wrong about the OOD samples.

use serde::{Deserialize, Serialize};

use crate::backend::{fit_logistic, LinearSoftmaxModel};
use crate::config::{AuxStrategy, MixDiffConfig, OracleSelection};
use crate::dataset::LabeledDataset;
use crate::engine::{run_detection, Engine, MixDiffResult, RunOptions};
use crate::error::Result;
use crate::oracle::OracleSet;
use crate::scoring::ScoreKind;
use crate::theory::{sample_synthetic, Role, SyntheticSpec};
use crate::types::{AccessLevel, Sample};

/// Weights tried when tuning on the validation split.
pub const GAMMA_GRID: [f64; 7] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSizes {
    pub train_per_class: usize,
    pub validation_per_component: usize,
    pub test_per_component: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for BenchmarkSizes {
    fn default() -> Self {
        Self {
            train_per_class: 200,
            validation_per_component: 100,
            test_per_component: 200,
            epochs: 300,
            learning_rate: 0.5,
        }
    }
}

/// A trained model with its oracle set, auxiliary pool and held-out splits.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub model: LinearSoftmaxModel,
    pub train: LabeledDataset,
    pub oracles: OracleSet,
    pub aux_pool: Vec<Sample>,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

impl Benchmark {
    /// Training, validation and test splits are drawn from disjoint seeds
    /// derived from `seed`.
    pub fn build(seed: u64, sizes: &BenchmarkSizes) -> Result<Self> {
        let base = seed.wrapping_mul(3);
        let mut train_spec = SyntheticSpec::overconfidence_benchmark(sizes.train_per_class, 1, base);
        train_spec.components.retain(|c| c.role != Role::Ood);
        let train = sample_synthetic(&train_spec)?;
        let split = |n, offset| {
            sample_synthetic(&SyntheticSpec::overconfidence_benchmark(n, n, base.wrapping_add(offset)))
        };
        let validation = split(sizes.validation_per_component, 1)?;
        let test = split(sizes.test_per_component, 2)?;
        let model = fit_logistic(&train, sizes.epochs, sizes.learning_rate)?.model;
        let cfg = Self::config(AccessLevel::Logits, ScoreKind::Entropy);
        let oracles = OracleSet::from_dataset(&train, cfg.oracle_size, true)?;
        Ok(Self {
            model,
            aux_pool: train.samples(),
            train,
            oracles,
            validation,
            test,
        })
    }

    /// Ten oracles per class, eight random ID auxiliaries, seven ratios.
    pub fn config(level: AccessLevel, score: ScoreKind) -> MixDiffConfig {
        MixDiffConfig {
            num_aux: 8,
            num_ratios: 7,
            oracle_size: 10,
            gamma: 1.0,
            access_level: level,
            base_score: score,
            aux_strategy: AuxStrategy::RandomId,
            oracle_selection: OracleSelection::ByPredictedLabel,
            ..Default::default()
        }
    }

    pub fn detect(&self, data: &LabeledDataset, cfg: MixDiffConfig, seed: u64) -> Result<Vec<MixDiffResult>> {
        let engine = Engine::new(&self.model, None, cfg)?;
        let opts = RunOptions {
            seed,
            aux_pool: Some(self.aux_pool.clone()),
            ..Default::default()
        };
        run_detection(&engine, data, &self.oracles, &opts)
    }
}
