use std::borrow::Cow;
use std::collections::BTreeMap;

use rayon::prelude::*;

use super::select::{rng_for, OracleSelector, Selection};
use super::{Engine, MixDiffResult, OracleCache};
use crate::config::AuxStrategy;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::oracle::OracleSet;
use crate::types::{FeatureVector, Sample};

const AUX_STREAM: u64 = 0;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// Pool for the random-ID strategy; defaults to the oracle pool.
    pub aux_pool: Option<Vec<Sample>>,
    /// Keep per-(aux, ratio) terms in the results.
    pub keep_terms: bool,
}

/// Auxiliaries for one target and the shared cache it may reuse.
struct Plan {
    aux: Vec<Sample>,
    selection: Selection,
    /// Key into the shared caches plus the auxiliary positions to keep.
    shared: Option<((usize, usize), Vec<usize>)>,
}

/// Groups of consecutive targets of size `n + 1`; a trailing singleton joins
/// the previous group.
fn in_batch_groups(len: usize, n: usize) -> Vec<std::ops::Range<usize>> {
    let size = n + 1;
    let mut groups: Vec<std::ops::Range<usize>> = (0..len)
        .step_by(size)
        .map(|start| start..(start + size).min(len))
        .collect();
    if groups.len() > 1 && groups.last().is_some_and(|g| g.len() == 1) {
        let last = groups.pop().expect("non-empty");
        groups.last_mut().expect("non-empty").end = last.end;
    }
    groups
}

/// Scores every target. Results come back in dataset order and do not
/// depend on how work is scheduled across threads.
pub fn run_detection(
    engine: &Engine<'_>,
    targets: &LabeledDataset,
    oracles: &OracleSet,
    opts: &RunOptions,
) -> Result<Vec<MixDiffResult>> {
    match opts.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Engine(format!("cannot start worker pool: {e}")))?
            .install(|| run_inner(engine, targets, oracles, opts)),
        None => run_inner(engine, targets, oracles, opts),
    }
}

fn run_inner(
    engine: &Engine<'_>,
    targets: &LabeledDataset,
    oracles: &OracleSet,
    opts: &RunOptions,
) -> Result<Vec<MixDiffResult>> {
    let cfg = engine.config();
    let dim = engine.backend().dim();
    for (what, d) in [("targets", targets.dim()), ("oracles", oracles.dim())] {
        if d != dim {
            return Err(Error::Engine(format!(
                "{what} have dimension {d}, model expects {dim}"
            )));
        }
    }
    let samples = targets.samples();
    let n = cfg.effective_num_aux();

    let fixed_aux: Vec<Sample> = match cfg.aux_strategy {
        AuxStrategy::InBatch => {
            if samples.len() < 2 {
                return Err(Error::Engine(
                    "in-batch auxiliaries need at least two targets".into(),
                ));
            }
            Vec::new()
        }
        AuxStrategy::OracleAsAux => Vec::new(),
        AuxStrategy::RandomId => {
            let pool: Vec<Sample> = match &opts.aux_pool {
                Some(p) => p.clone(),
                None => oracles.pool().cloned().collect(),
            };
            if pool.len() < n {
                return Err(Error::Engine(format!(
                    "auxiliary pool has {} samples, need {n}",
                    pool.len()
                )));
            }
            if let Some(bad) = pool.iter().find(|s| s.features.dim() != dim) {
                return Err(Error::Engine(format!(
                    "auxiliary '{}' has dimension {}, model expects {dim}",
                    bad.id,
                    bad.features.dim()
                )));
            }
            let mut rng = rng_for(opts.seed, AUX_STREAM);
            rand::seq::index::sample(&mut rng, pool.len(), n)
                .iter()
                .map(|i| pool[i].clone())
                .collect()
        }
    };

    let selector = OracleSelector::new(engine, oracles, opts.seed)?;
    let features: Vec<FeatureVector> = samples.iter().map(|s| s.features.clone()).collect();
    let outputs = engine.query(&features)?;

    let groups = match cfg.aux_strategy {
        AuxStrategy::InBatch => in_batch_groups(samples.len(), n),
        _ => std::iter::once(0..samples.len()).collect(),
    };
    let mut plans = Vec::with_capacity(samples.len());
    let mut shared_needed: BTreeMap<(usize, usize), (Vec<Sample>, Vec<Sample>)> = BTreeMap::new();
    for (g, range) in groups.iter().enumerate() {
        for t in range.clone() {
            let selection = selector.select(engine, &outputs[t], t)?;
            let (aux, group_aux, keep): (Vec<Sample>, Vec<Sample>, Vec<usize>) = match cfg.aux_strategy {
                AuxStrategy::RandomId => (fixed_aux.clone(), fixed_aux.clone(), (0..n).collect()),
                AuxStrategy::OracleAsAux => {
                    let aux = selection.samples[1..].to_vec();
                    let keep = (0..aux.len()).collect();
                    (aux.clone(), aux, keep)
                }
                AuxStrategy::InBatch => {
                    let members: Vec<Sample> = range.clone().map(|j| samples[j].clone()).collect();
                    let keep: Vec<usize> = (0..members.len()).filter(|&j| range.start + j != t).collect();
                    let aux = keep.iter().map(|&j| members[j].clone()).collect();
                    (aux, members, keep)
                }
            };
            let shared = match (cfg.compare_enabled, selection.class) {
                (true, Some(k)) => {
                    shared_needed
                        .entry((g, k))
                        .or_insert_with(|| (selection.samples.clone(), group_aux));
                    Some(((g, k), keep))
                }
                _ => None,
            };
            plans.push(Plan {
                aux,
                selection,
                shared,
            });
        }
    }

    let shared_caches: BTreeMap<(usize, usize), OracleCache> = shared_needed
        .into_par_iter()
        .map(|(key, (orc, aux))| engine.build_oracle_cache(&orc, &aux).map(|c| (key, c)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();

    let flags = targets.ood_flags();
    plans
        .par_iter()
        .enumerate()
        .map(|(t, plan)| {
            let cache: Option<Cow<'_, OracleCache>> = if !cfg.compare_enabled {
                None
            } else {
                Some(match &plan.shared {
                    Some((key, keep)) => {
                        let c = &shared_caches[key];
                        if keep.len() == c.num_aux() {
                            Cow::Borrowed(c)
                        } else {
                            Cow::Owned(c.select_aux(keep))
                        }
                    }
                    None => Cow::Owned(engine.build_oracle_cache(&plan.selection.samples, &plan.aux)?),
                })
            };
            let mut r = engine.mixdiff_score(&samples[t], cache.as_deref(), &plan.aux)?;
            r.ood = Some(flags[t]);
            if !opts.keep_terms {
                r.terms = None;
            }
            Ok(r)
        })
        .collect()
}

/// One JSON object per line, in result order.
pub fn results_to_jsonl(results: &[MixDiffResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r).expect("results serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_merge_trailing_singleton() {
        let g = in_batch_groups(7, 2);
        assert_eq!(g, vec![0..3, 3..7]);
        assert_eq!(in_batch_groups(6, 2), vec![0..3, 3..6]);
        assert_eq!(in_batch_groups(2, 1), vec![0..2]);
        assert_eq!(in_batch_groups(2, 5), vec![0..2]);
        assert_eq!(in_batch_groups(8, 2), vec![0..3, 3..6, 6..8]);
    }
}
