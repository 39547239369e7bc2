//! The detector: mix a target and its oracle exemplars with the same
//! auxiliary samples, and score how differently the two sides react.

mod attack;
mod calibrate;
mod run;
mod select;

pub use attack::{attack_dataset, pgd_attack, AttackMode};
pub use calibrate::{tune_gamma, with_gamma, GammaChoice};
pub use run::{run_detection, results_to_jsonl, RunOptions};
pub use select::{OracleSelector, Selection};
pub(crate) use select::rng_for as select_rng;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, LinearSoftmaxModel};
use crate::config::MixDiffConfig;
use crate::error::{Error, Result, ResultExt};
use crate::perturb::mixup;
use crate::scoring::{softmax_unchecked, ScoreFn};
use crate::types::{argmax, AccessLevel, FeatureVector, OutputKind, Sample};

/// Averaged perturbed-oracle outputs for one oracle selection, auxiliary
/// list and ratio grid, stored auxiliary-major.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCache {
    oracle_ids: Vec<String>,
    aux_ids: Vec<String>,
    ratios: Vec<f64>,
    kind: OutputKind,
    means: Vec<Vec<f64>>,
    scores: Option<Vec<f64>>,
}

impl OracleCache {
    pub fn num_aux(&self) -> usize {
        self.aux_ids.len()
    }

    pub fn aux_ids(&self) -> &[String] {
        &self.aux_ids
    }

    pub fn oracle_ids(&self) -> &[String] {
        &self.oracle_ids
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn kind(&self) -> OutputKind {
        self.kind
    }

    /// Averaged output for auxiliary `i` at ratio `r`.
    pub fn mean_output(&self, i: usize, r: usize) -> &[f64] {
        &self.means[i * self.ratios.len() + r]
    }

    /// Score of the averaged output; `None` in label mode.
    pub fn score(&self, i: usize, r: usize) -> Option<f64> {
        self.scores.as_ref().map(|s| s[i * self.ratios.len() + r])
    }

    /// The same cache restricted to the auxiliaries at `keep`, in that order.
    pub fn select_aux(&self, keep: &[usize]) -> OracleCache {
        let r = self.ratios.len();
        fn pick<T: Clone>(v: &[T], keep: &[usize], r: usize) -> Vec<T> {
            keep.iter()
                .flat_map(|&i| (0..r).map(move |j| i * r + j))
                .map(|k| v[k].clone())
                .collect()
        }
        OracleCache {
            oracle_ids: self.oracle_ids.clone(),
            aux_ids: keep.iter().map(|&i| self.aux_ids[i].clone()).collect(),
            ratios: self.ratios.clone(),
            kind: self.kind,
            means: pick(&self.means, keep, r),
            scores: self.scores.as_ref().map(|v| pick(v, keep, r)),
        }
    }
}

/// Detection outcome for one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixDiffResult {
    pub id: String,
    pub predicted_class: usize,
    /// Score of the unperturbed output; absent with label access.
    pub base_score: Option<f64>,
    pub mixdiff_score: f64,
    pub final_score: f64,
    /// Ground-truth flag when known.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ood: Option<bool>,
    /// Per-(aux, ratio) terms, auxiliary-major.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub terms: Option<Vec<f64>>,
}

/// A backend queried at one access level, plus the head used to turn
/// embeddings into logits.
pub struct Engine<'a> {
    backend: &'a dyn Backend,
    head: Option<&'a LinearSoftmaxModel>,
    cfg: MixDiffConfig,
    score_fn: ScoreFn,
    ratios: Vec<f64>,
}

impl<'a> Engine<'a> {
    pub fn new(
        backend: &'a dyn Backend,
        head: Option<&'a LinearSoftmaxModel>,
        cfg: MixDiffConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if !backend.supports(cfg.access_level) {
            return Err(Error::Engine(format!(
                "{} does not expose {} outputs",
                backend.describe(),
                cfg.access_level
            )));
        }
        if cfg.access_level == AccessLevel::Embeddings {
            match head {
                None => {
                    return Err(Error::Engine(
                        "embedding access needs a classification head".into(),
                    ))
                }
                Some(h) if crate::backend::Backend::dim(h) != backend.dim() => {
                    return Err(Error::DimensionMismatch {
                        expected: backend.dim(),
                        actual: crate::backend::Backend::dim(h),
                    })
                }
                _ => {}
            }
        }
        Ok(Self {
            backend,
            head,
            score_fn: cfg.score_fn(),
            ratios: cfg.ratios()?,
            cfg,
        })
    }

    pub fn config(&self) -> &MixDiffConfig {
        &self.cfg
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend
    }

    /// Kind of the vectors returned by [`Engine::query`].
    pub fn output_kind(&self) -> OutputKind {
        match self.cfg.access_level {
            AccessLevel::Logits | AccessLevel::Embeddings => OutputKind::Logits,
            AccessLevel::Probs => OutputKind::Probs,
            AccessLevel::Labels => OutputKind::LabelOneHot,
        }
    }

    /// Backend outputs at the configured level, with embeddings mapped
    /// through the head so every vector is class-indexed.
    pub fn query(&self, xs: &[FeatureVector]) -> Result<Vec<Vec<f64>>> {
        let outs = self.backend.predict(xs, self.cfg.access_level)?;
        if outs.len() != xs.len() {
            return Err(Error::Backend(format!(
                "backend returned {} outputs for {} inputs",
                outs.len(),
                xs.len()
            )));
        }
        Ok(match self.head {
            Some(h) if self.cfg.access_level == AccessLevel::Embeddings => {
                outs.iter().map(|o| h.logits(o.values())).collect()
            }
            _ => outs.into_iter().map(|o| o.into_values()).collect(),
        })
    }

    /// The output as a probability vector: softmax of logits, probabilities
    /// as they are, one-hot labels unchanged.
    pub fn probability_view(&self, values: &[f64]) -> Vec<f64> {
        match self.output_kind() {
            OutputKind::Logits => softmax_unchecked(values),
            _ => values.to_vec(),
        }
    }

    fn score(&self, values: &[f64]) -> Result<f64> {
        self.score_fn.score_values(self.output_kind(), values)
    }

    /// Averages the perturbed outputs of `oracles` for every (aux, ratio)
    /// pair. Pairs whose oracle and auxiliary share an id are skipped.
    pub fn build_oracle_cache(&self, oracles: &[Sample], aux: &[Sample]) -> Result<OracleCache> {
        if oracles.is_empty() {
            return Err(Error::Engine("no oracle exemplars selected".into()));
        }
        if aux.is_empty() {
            return Err(Error::NoAuxiliary);
        }
        let (n, r_len) = (aux.len(), self.ratios.len());
        let mut inputs = Vec::with_capacity(oracles.len() * n * r_len);
        for (m, o) in oracles.iter().enumerate() {
            for (i, a) in aux.iter().enumerate() {
                for (r, &lam) in self.ratios.iter().enumerate() {
                    inputs.push(
                        mixup(&o.features, &a.features, lam)
                            .context(|| format!("oracle cache (m={m}, i={i}, r={r})"))?,
                    );
                }
            }
        }
        let outs = self
            .query(&inputs)
            .context(|| "querying perturbed oracles".to_string())?;
        let mut means = Vec::with_capacity(n * r_len);
        for (i, a) in aux.iter().enumerate() {
            for r in 0..r_len {
                let mut acc: Option<Vec<f64>> = None;
                let mut count = 0usize;
                for (m, o) in oracles.iter().enumerate() {
                    if o.id == a.id {
                        continue;
                    }
                    let v = &outs[(m * n + i) * r_len + r];
                    match &mut acc {
                        None => acc = Some(v.clone()),
                        Some(sum) => sum.iter_mut().zip(v).for_each(|(s, x)| *s += x),
                    }
                    count += 1;
                }
                let mut mean = acc.ok_or_else(|| {
                    Error::Engine(format!(
                        "auxiliary '{}' is the only oracle exemplar; nothing to compare against",
                        a.id
                    ))
                })?;
                mean.iter_mut().for_each(|s| *s /= count as f64);
                means.push(mean);
            }
        }
        let scores = if self.cfg.label_mode() {
            None
        } else {
            Some(means.iter().map(|m| self.score(m)).collect::<Result<Vec<f64>>>()?)
        };
        Ok(OracleCache {
            oracle_ids: oracles.iter().map(|o| o.id.clone()).collect(),
            aux_ids: aux.iter().map(|a| a.id.clone()).collect(),
            ratios: self.ratios.clone(),
            kind: self.output_kind(),
            means,
            scores,
        })
    }

    /// Scores one target against a cache built with the same auxiliaries.
    /// `cache` may be `None` only when comparison is disabled.
    pub fn mixdiff_score(
        &self,
        target: &Sample,
        cache: Option<&OracleCache>,
        aux: &[Sample],
    ) -> Result<MixDiffResult> {
        if aux.is_empty() {
            return Err(Error::NoAuxiliary);
        }
        let compare = self.cfg.compare_enabled;
        if compare {
            let c = cache.ok_or_else(|| Error::Engine("comparison needs an oracle cache".into()))?;
            if c.aux_ids.len() != aux.len()
                || c.aux_ids.iter().zip(aux).any(|(id, a)| *id != a.id)
                || c.ratios != self.ratios
                || c.kind != self.output_kind()
            {
                return Err(Error::Engine(
                    "oracle cache was built for different auxiliaries or ratios".into(),
                ));
            }
        }
        let r_len = self.ratios.len();
        let mut inputs = Vec::with_capacity(1 + aux.len() * r_len);
        inputs.push(target.features.clone());
        for a in aux {
            for &lam in &self.ratios {
                inputs.push(mixup(&target.features, &a.features, lam)?);
            }
        }
        let outs = self.query(&inputs)?;
        let predicted_class = argmax(&outs[0]);
        let label_mode = self.cfg.label_mode();
        let base_score = if label_mode {
            None
        } else {
            Some(self.score(&outs[0])?)
        };
        let mut terms = Vec::with_capacity(aux.len() * r_len);
        for i in 0..aux.len() {
            for r in 0..r_len {
                let o = &outs[1 + i * r_len + r];
                let term = if label_mode {
                    let c = cache.expect("checked above");
                    1.0 - c.mean_output(i, r)[argmax(o)]
                } else if compare {
                    let c = cache.expect("checked above");
                    self.score(o)? - c.score(i, r).expect("score modes store scores")
                } else {
                    self.score(o)?
                };
                terms.push(term);
            }
        }
        let mixdiff_score = terms.iter().sum::<f64>() / terms.len() as f64;
        let final_score = match base_score {
            Some(b) if !self.cfg.mixdiff_only => b + self.cfg.gamma * mixdiff_score,
            _ => mixdiff_score,
        };
        Ok(MixDiffResult {
            id: target.id.clone(),
            predicted_class,
            base_score,
            mixdiff_score,
            final_score,
            ood: None,
            terms: Some(terms),
        })
    }
}
