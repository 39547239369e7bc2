use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Engine;
use crate::config::OracleSelection;
use crate::error::{Error, Result};
use crate::oracle::OracleSet;
use crate::types::{argmax, FeatureVector, Sample};

/// Random stream for per-target oracle draws; the auxiliary draw uses stream 0.
pub(crate) fn oracle_stream(target_index: usize) -> u64 {
    (1u64 << 32) + target_index as u64
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Exemplars chosen for one target. `class` is set when the choice depends
/// only on the predicted class, so caches can be shared between targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub class: Option<usize>,
    pub samples: Vec<Sample>,
}

/// Chooses oracle exemplars for targets according to the configured rule.
pub struct OracleSelector<'o> {
    oracles: &'o OracleSet,
    rule: OracleSelection,
    size: usize,
    pool: Vec<&'o Sample>,
    pool_probs: Vec<Vec<f64>>,
    seed: u64,
}

impl<'o> OracleSelector<'o> {
    /// For the unlabeled rule this queries the backend once for every pool sample.
    pub fn new(engine: &Engine<'_>, oracles: &'o OracleSet, seed: u64) -> Result<Self> {
        let cfg = engine.config();
        let size = cfg.oracle_size;
        let pool: Vec<&Sample> = oracles.pool().collect();
        if pool.len() < size {
            return Err(Error::Engine(format!(
                "oracle pool has {} exemplars, need {size}",
                pool.len()
            )));
        }
        let pool_probs = match cfg.oracle_selection {
            OracleSelection::ByPredictedLabel => {
                if !oracles.is_labeled() {
                    return Err(Error::Engine(
                        "selection by predicted label needs a labeled oracle set".into(),
                    ));
                }
                if oracles.oracle_size() < size {
                    return Err(Error::Engine(format!(
                        "oracle set holds {} exemplars per class, need {size}",
                        oracles.oracle_size()
                    )));
                }
                Vec::new()
            }
            OracleSelection::UnlabeledTopM => {
                let xs: Vec<FeatureVector> = pool.iter().map(|s| s.features.clone()).collect();
                engine
                    .query(&xs)?
                    .iter()
                    .map(|v| engine.probability_view(v))
                    .collect()
            }
            OracleSelection::RandomOracle => Vec::new(),
        };
        Ok(Self {
            oracles,
            rule: cfg.oracle_selection,
            size,
            pool,
            pool_probs,
            seed,
        })
    }

    /// `target` is the target's output as returned by [`Engine::query`].
    pub fn select(&self, engine: &Engine<'_>, target: &[f64], target_index: usize) -> Result<Selection> {
        match self.rule {
            OracleSelection::ByPredictedLabel => {
                let k = argmax(target);
                let list = self.oracles.class(k).ok_or(Error::NoOracleForClass(k))?;
                Ok(Selection {
                    class: Some(k),
                    samples: list[..self.size].to_vec(),
                })
            }
            OracleSelection::UnlabeledTopM => {
                let p = engine.probability_view(target);
                let sims: Vec<f64> = self
                    .pool_probs
                    .iter()
                    .map(|q| q.iter().zip(&p).map(|(a, b)| a * b).sum())
                    .collect();
                let mut order: Vec<usize> = (0..self.pool.len()).collect();
                // Stable sort: equal similarities keep pool order.
                order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]));
                Ok(Selection {
                    class: None,
                    samples: order[..self.size].iter().map(|&i| self.pool[i].clone()).collect(),
                })
            }
            OracleSelection::RandomOracle => {
                let mut rng = rng_for(self.seed, oracle_stream(target_index));
                let idx = rand::seq::index::sample(&mut rng, self.pool.len(), self.size);
                Ok(Selection {
                    class: None,
                    samples: idx.iter().map(|i| self.pool[i].clone()).collect(),
                })
            }
        }
    }
}
