use std::collections::BTreeMap;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::types::Sample;

/// In-distribution exemplars used as comparison anchors.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleSet {
    /// `M` exemplars for each class present.
    Labeled {
        num_classes: usize,
        per_class: BTreeMap<usize, Vec<Sample>>,
    },
    /// A flat pool of `M x K` exemplars without class keys.
    Unlabeled {
        num_classes: usize,
        oracle_size: usize,
        pool: Vec<Sample>,
    },
}

impl OracleSet {
    pub fn labeled(num_classes: usize, per_class: BTreeMap<usize, Vec<Sample>>) -> Result<Self> {
        let mut size = None;
        for (&k, list) in &per_class {
            if k >= num_classes {
                return Err(Error::InvalidData(format!(
                    "oracle class {k} outside 0..{num_classes}"
                )));
            }
            if list.is_empty() {
                return Err(Error::InvalidData(format!("oracle class {k} has no exemplars")));
            }
            match size {
                None => size = Some(list.len()),
                Some(m) if m != list.len() => {
                    return Err(Error::InvalidData(format!(
                        "oracle classes differ in size ({m} vs {} for class {k})",
                        list.len()
                    )))
                }
                _ => {}
            }
        }
        if size.is_none() {
            return Err(Error::InvalidData("oracle set is empty".into()));
        }
        Self::check_dims(per_class.values().flatten())?;
        Ok(OracleSet::Labeled {
            num_classes,
            per_class,
        })
    }

    pub fn unlabeled(num_classes: usize, oracle_size: usize, pool: Vec<Sample>) -> Result<Self> {
        if oracle_size == 0 || num_classes == 0 {
            return Err(Error::InvalidData("oracle size and class count must be positive".into()));
        }
        if pool.len() != oracle_size * num_classes {
            return Err(Error::InvalidData(format!(
                "unlabeled oracle pool must hold {} samples, got {}",
                oracle_size * num_classes,
                pool.len()
            )));
        }
        Self::check_dims(pool.iter())?;
        Ok(OracleSet::Unlabeled {
            num_classes,
            oracle_size,
            pool,
        })
    }

    /// Takes the first `m` in-distribution records of every class, in file order.
    pub fn from_dataset(data: &LabeledDataset, m: usize, labeled: bool) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig("oracle_size must be >= 1".into()));
        }
        let k = data.num_classes();
        let mut per_class: BTreeMap<usize, Vec<Sample>> = BTreeMap::new();
        for r in data.in_distribution() {
            let label = r.label.expect("in-distribution records carry labels");
            let list = per_class.entry(label).or_default();
            if list.len() < m {
                list.push(r.sample());
            }
        }
        for class in 0..k {
            let have = per_class.get(&class).map_or(0, Vec::len);
            if have < m {
                return Err(Error::InvalidData(format!(
                    "class {class} has {have} in-distribution exemplars, need {m}"
                )));
            }
        }
        if labeled {
            Self::labeled(k, per_class)
        } else {
            Self::unlabeled(k, m, per_class.into_values().flatten().collect())
        }
    }

    fn check_dims<'a>(mut samples: impl Iterator<Item = &'a Sample>) -> Result<()> {
        let Some(first) = samples.next() else {
            return Ok(());
        };
        let dim = first.features.dim();
        for s in samples {
            if s.features.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: s.features.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn is_labeled(&self) -> bool {
        matches!(self, OracleSet::Labeled { .. })
    }

    pub fn num_classes(&self) -> usize {
        match self {
            OracleSet::Labeled { num_classes, .. } | OracleSet::Unlabeled { num_classes, .. } => {
                *num_classes
            }
        }
    }

    /// Exemplars per comparison (M).
    pub fn oracle_size(&self) -> usize {
        match self {
            OracleSet::Labeled { per_class, .. } => per_class.values().next().map_or(0, Vec::len),
            OracleSet::Unlabeled { oracle_size, .. } => *oracle_size,
        }
    }

    pub fn dim(&self) -> usize {
        self.pool().next().map_or(0, |s| s.features.dim())
    }

    pub fn class(&self, k: usize) -> Option<&[Sample]> {
        match self {
            OracleSet::Labeled { per_class, .. } => per_class.get(&k).map(Vec::as_slice),
            OracleSet::Unlabeled { .. } => None,
        }
    }

    /// Every exemplar, class-major for labeled sets.
    pub fn pool(&self) -> Box<dyn Iterator<Item = &Sample> + '_> {
        match self {
            OracleSet::Labeled { per_class, .. } => Box::new(per_class.values().flatten()),
            OracleSet::Unlabeled { pool, .. } => Box::new(pool.iter()),
        }
    }

    pub fn pool_len(&self) -> usize {
        match self {
            OracleSet::Labeled { per_class, .. } => per_class.values().map(Vec::len).sum(),
            OracleSet::Unlabeled { pool, .. } => pool.len(),
        }
    }
}
