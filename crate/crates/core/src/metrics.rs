//! Detection metrics with OOD as the positive class and the predicate
//! `score >= threshold` for flagging.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// Scores paired with ground-truth OOD flags.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    is_ood: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, is_ood: Vec<bool>) -> Result<Self> {
        if scores.len() != is_ood.len() {
            return Err(Error::Metrics(format!(
                "{} scores but {} labels",
                scores.len(),
                is_ood.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Metrics(format!("score {i} is not finite")));
        }
        Ok(Self { scores, is_ood })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, bool)>) -> Result<Self> {
        let (scores, is_ood) = pairs.into_iter().unzip();
        Self::new(scores, is_ood)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn flags(&self) -> &[bool] {
        &self.is_ood
    }

    pub fn ood_scores(&self) -> Vec<f64> {
        self.split(true)
    }

    pub fn id_scores(&self) -> Vec<f64> {
        self.split(false)
    }

    fn split(&self, ood: bool) -> Vec<f64> {
        self.scores
            .iter()
            .zip(&self.is_ood)
            .filter(|(_, &f)| f == ood)
            .map(|(&s, _)| s)
            .collect()
    }

    fn require_both(&self) -> Result<(usize, usize)> {
        let n_ood = self.is_ood.iter().filter(|&&f| f).count();
        let n_id = self.len() - n_ood;
        if n_ood == 0 || n_id == 0 {
            return Err(Error::Metrics(
                "need at least one in-distribution and one OOD sample".into(),
            ));
        }
        Ok((n_id, n_ood))
    }
}

/// Area under the ROC curve as the Mann-Whitney statistic with midranks for ties.
pub fn auroc(s: &ScoredSet) -> Result<f64> {
    let (n_id, n_ood) = s.require_both()?;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b]));
    let mut rank_sum_ood = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && s.scores[order[j + 1]] == s.scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let mid = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if s.is_ood[idx] {
                rank_sum_ood += mid;
            }
        }
        i = j + 1;
    }
    let n_ood_f = n_ood as f64;
    let u = rank_sum_ood - n_ood_f * (n_ood_f + 1.0) / 2.0;
    Ok(u / (n_ood_f * n_id as f64))
}

/// Largest threshold that still flags at least a `tpr` fraction of OOD samples.
pub fn tpr_threshold(s: &ScoredSet, tpr: f64) -> Result<f64> {
    s.require_both()?;
    if !(tpr > 0.0 && tpr <= 1.0) {
        return Err(Error::Metrics(format!("tpr must lie in (0, 1], got {tpr}")));
    }
    let mut ood = s.ood_scores();
    ood.sort_by(|a, b| b.total_cmp(a));
    let n = ood.len();
    let k = (1..=n)
        .find(|&k| k as f64 / n as f64 >= tpr)
        .unwrap_or(n);
    Ok(ood[k - 1])
}

/// Fraction of in-distribution samples flagged at the [`tpr_threshold`].
pub fn fpr_at_tpr(s: &ScoredSet, tpr: f64) -> Result<f64> {
    let t = tpr_threshold(s, tpr)?;
    let id = s.id_scores();
    Ok(id.iter().filter(|&&v| v >= t).count() as f64 / id.len() as f64)
}

/// Area under the precision-recall curve as average precision: the sum over
/// descending distinct thresholds of recall increments times precision.
pub fn aucpr(s: &ScoredSet) -> Result<f64> {
    let (_, n_ood) = s.require_both()?;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.scores[b].total_cmp(&s.scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = s.scores[order[i]];
        while i < order.len() && s.scores[order[i]] == t {
            if s.is_ood[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_ood as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdMass {
    pub threshold: f64,
    pub id_over: f64,
    pub id_under: f64,
    pub ood_over: f64,
    pub ood_under: f64,
}

/// Fractions of each class on either side of the [`tpr_threshold`].
pub fn threshold_mass(s: &ScoredSet, tpr: f64) -> Result<ThresholdMass> {
    let t = tpr_threshold(s, tpr)?;
    let frac_over = |v: Vec<f64>| {
        let over = v.iter().filter(|&&x| x >= t).count();
        (over as f64 / v.len() as f64, (v.len() - over) as f64 / v.len() as f64)
    };
    let (id_over, id_under) = frac_over(s.id_scores());
    let (ood_over, ood_under) = frac_over(s.ood_scores());
    Ok(ThresholdMass {
        threshold: t,
        id_over,
        id_under,
        ood_over,
        ood_under,
    })
}

/// AUROC, FPR at 95% TPR and AUCPR of one score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub auroc: f64,
    pub fpr95: f64,
    pub aucpr: f64,
}

pub fn evaluate(s: &ScoredSet) -> Result<MetricReport> {
    Ok(MetricReport {
        auroc: auroc(s)?,
        fpr95: fpr_at_tpr(s, 0.95)?,
        aucpr: aucpr(s)?,
    })
}

/// Which samples enter an interval analysis, relative to the base score's
/// 95%-TPR threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    All,
    Below,
    Above,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalRow {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub n_id: usize,
    pub n_ood: usize,
    /// mean(other | OOD) - mean(other | ID); `None` unless both classes are present.
    pub other_gap: Option<f64>,
    /// mean(base | OOD) - mean(base | ID).
    pub base_gap: Option<f64>,
}

pub const NUM_INTERVALS: usize = 5;

/// Splits samples into five equal-width bins of the base score and reports,
/// per bin, the OOD-minus-ID gap of both scores.
pub fn interval_gap(
    base: &ScoredSet,
    other: &[f64],
    region: Region,
) -> Result<Vec<IntervalRow>> {
    if other.len() != base.len() {
        return Err(Error::Metrics(format!(
            "misaligned arrays: {} base scores, {} other scores",
            base.len(),
            other.len()
        )));
    }
    if other.iter().any(|v| !v.is_finite()) {
        return Err(Error::Metrics("other scores must be finite".into()));
    }
    let keep: Vec<usize> = match region {
        Region::All => (0..base.len()).collect(),
        Region::Below | Region::Above => {
            let t = tpr_threshold(base, 0.95)?;
            (0..base.len())
                .filter(|&i| (base.scores[i] >= t) == (region == Region::Above))
                .collect()
        }
    };
    let (lo, hi) = keep.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
        (lo.min(base.scores[i]), hi.max(base.scores[i]))
    });
    let width = if keep.is_empty() { 0.0 } else { (hi - lo) / NUM_INTERVALS as f64 };
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); NUM_INTERVALS];
    for &i in &keep {
        let b = if width > 0.0 {
            (((base.scores[i] - lo) / width) as usize).min(NUM_INTERVALS - 1)
        } else {
            0
        };
        bins[b].push(i);
    }
    let mean = |idx: &[usize], vals: &[f64], ood: bool| {
        let v: Vec<f64> = idx
            .iter()
            .filter(|&&i| base.is_ood[i] == ood)
            .map(|&i| vals[i])
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(bins
        .iter()
        .enumerate()
        .map(|(b, idx)| {
            let gap = |vals: &[f64]| match (mean(idx, vals, true), mean(idx, vals, false)) {
                (Some(o), Some(i)) => Some(o - i),
                _ => None,
            };
            IntervalRow {
                index: b,
                lo: if keep.is_empty() { f64::NAN } else { lo + width * b as f64 },
                hi: if keep.is_empty() {
                    f64::NAN
                } else if b + 1 == NUM_INTERVALS {
                    hi
                } else {
                    lo + width * (b + 1) as f64
                },
                n_id: idx.iter().filter(|&&i| !base.is_ood[i]).count(),
                n_ood: idx.iter().filter(|&&i| base.is_ood[i]).count(),
                other_gap: gap(other),
                base_gap: gap(&base.scores),
            }
        })
        .collect())
}

pub fn interval_rows_to_csv(rows: &[IntervalRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut out = String::from("interval,lo,hi,n_id,n_ood,other_gap,base_gap\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.index,
            r.lo,
            r.hi,
            r.n_id,
            r.n_ood,
            opt(r.other_gap),
            opt(r.base_gap)
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("column");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (n, row) in self.names.iter().zip(&self.values) {
            out.push_str(n);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise Pearson correlation of named, equally long score columns.
pub fn score_correlation(columns: &[(String, Vec<f64>)]) -> Result<CorrelationMatrix> {
    if columns.len() < 2 {
        return Err(Error::Metrics("need at least two columns".into()));
    }
    let n = columns[0].1.len();
    if n < 3 {
        return Err(Error::Metrics("columns need at least three entries".into()));
    }
    let mut centered = Vec::with_capacity(columns.len());
    for (name, col) in columns {
        if col.len() != n {
            return Err(Error::Metrics(format!(
                "column '{name}' has {} entries, expected {n}",
                col.len()
            )));
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Metrics(format!("column '{name}' has non-finite values")));
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let c: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Metrics(format!("column '{name}' has zero variance")));
        }
        centered.push((c, norm));
    }
    let k = columns.len();
    let mut values = vec![vec![0.0; k]; k];
    for a in 0..k {
        values[a][a] = 1.0;
        for b in a + 1..k {
            let dot: f64 = centered[a].0.iter().zip(&centered[b].0).map(|(x, y)| x * y).sum();
            let r = (dot / (centered[a].1 * centered[b].1)).clamp(-1.0, 1.0);
            values[a][b] = r;
            values[b][a] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: columns.iter().map(|(n, _)| n.clone()).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(ood: &[f64], id: &[f64]) -> ScoredSet {
        ScoredSet::from_pairs(
            ood.iter().map(|&s| (s, true)).chain(id.iter().map(|&s| (s, false))),
        )
        .unwrap()
    }

    fn brute_auroc(s: &ScoredSet) -> f64 {
        let (o, i) = (s.ood_scores(), s.id_scores());
        let mut acc = 0.0;
        for a in &o {
            for b in &i {
                acc += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
        acc / (o.len() * i.len()) as f64
    }

    fn brute_aucpr(s: &ScoredSet) -> f64 {
        let mut ts: Vec<f64> = s.scores().to_vec();
        ts.sort_by(|a, b| b.total_cmp(a));
        ts.dedup();
        let n_ood = s.ood_scores().len() as f64;
        let mut prev = 0.0;
        let mut ap = 0.0;
        for t in ts {
            let tp = s.ood_scores().iter().filter(|&&v| v >= t).count() as f64;
            let fp = s.id_scores().iter().filter(|&&v| v >= t).count() as f64;
            ap += (tp / n_ood - prev) * tp / (tp + fp);
            prev = tp / n_ood;
        }
        ap
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, ties: bool) -> ScoredSet {
        loop {
            let pairs: Vec<(f64, bool)> = (0..n)
                .map(|_| {
                    let s: f64 = if ties {
                        rng.random_range(0..5) as f64
                    } else {
                        rng.random()
                    };
                    (s, rng.random_bool(0.4))
                })
                .collect();
            if let Ok(s) = ScoredSet::from_pairs(pairs) {
                if s.require_both().is_ok() {
                    return s;
                }
            }
        }
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&set(&[0.9, 0.8], &[0.1, 0.2])).unwrap(), 1.0);
        assert_eq!(auroc(&set(&[0.3, 0.3], &[0.3, 0.3, 0.3])).unwrap(), 0.5);
        assert!(auroc(&set(&[0.1], &[])).is_err());
    }

    #[test]
    fn auroc_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in 0..50 {
            let s = random_set(&mut rng, 20, t % 2 == 0);
            assert!((auroc(&s).unwrap() - brute_auroc(&s)).abs() < 1e-12);
        }
    }

    #[test]
    fn fpr_examples() {
        assert_eq!(fpr_at_tpr(&set(&[0.9, 0.8], &[0.1, 0.2]), 0.95).unwrap(), 0.0);
        let s = set(&[0.4], &[0.1, 0.5, 0.7]);
        assert_eq!(tpr_threshold(&s, 0.95).unwrap(), 0.4);
        assert!((fpr_at_tpr(&s, 0.95).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fpr_identical_distributions() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let s = set(&v, &v);
        // 95 of 100 OOD at or above t=5; the same 95 ID values are flagged.
        assert_eq!(tpr_threshold(&s, 0.95).unwrap(), 5.0);
        assert!((fpr_at_tpr(&s, 0.95).unwrap() - 0.95).abs() < 1e-12);
    }

    #[test]
    fn aucpr_examples() {
        assert_eq!(aucpr(&set(&[0.9, 0.8], &[0.1, 0.2])).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<(f64, bool)> = (0..2000).map(|_| (rng.random(), rng.random_bool(0.3))).collect();
        let prevalence = pairs.iter().filter(|p| p.1).count() as f64 / 2000.0;
        let ap = aucpr(&ScoredSet::from_pairs(pairs).unwrap()).unwrap();
        assert!((ap - prevalence).abs() < 0.05, "{ap} vs {prevalence}");
        for t in 0..30 {
            let s = random_set(&mut rng, 15, t % 2 == 0);
            assert!((aucpr(&s).unwrap() - brute_aucpr(&s)).abs() < 1e-12);
        }
    }

    #[test]
    fn threshold_mass_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_set(&mut rng, 200, false);
        let m = threshold_mass(&s, 0.95).unwrap();
        assert!((m.id_over + m.id_under - 1.0).abs() < 1e-12);
        assert!((m.ood_over + m.ood_under - 1.0).abs() < 1e-12);
        assert!(m.ood_over >= 0.95);
        let t = m.threshold;
        let id = s.id_scores();
        assert_eq!(m.id_over, id.iter().filter(|&&v| v >= t).count() as f64 / id.len() as f64);
        let perfect = threshold_mass(&set(&[5.0, 6.0], &[1.0, 2.0]), 0.95).unwrap();
        assert_eq!((perfect.id_over, perfect.ood_over), (0.0, 1.0));
    }

    #[test]
    fn interval_gap_identity_and_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_set(&mut rng, 60, false);
        let rows = interval_gap(&s, s.scores(), Region::All).unwrap();
        assert_eq!(rows.len(), NUM_INTERVALS);
        for r in &rows {
            assert_eq!(r.other_gap, r.base_gap);
        }
        let rows = interval_gap(&s, &vec![3.0; s.len()], Region::All).unwrap();
        for r in rows.iter().filter(|r| r.n_id > 0 && r.n_ood > 0) {
            assert_eq!(r.other_gap, Some(0.0));
        }
        assert!(interval_gap(&s, &[1.0], Region::All).is_err());
    }

    #[test]
    fn interval_gap_hand_fixture() {
        // Base scores 0..=9 split into bins of width 1.8:
        // [0,1.8) {0,1}, [1.8,3.6) {2,3}, [3.6,5.4) {4,5}, [5.4,7.2) {6,7}, [7.2,9] {8,9}.
        let base: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ood = vec![false, true, false, true, false, false, true, true, false, true];
        let other = vec![1.0, 5.0, 2.0, 2.0, 0.0, 0.0, 4.0, 6.0, 3.0, 9.0];
        let s = ScoredSet::new(base, ood).unwrap();
        let rows = interval_gap(&s, &other, Region::All).unwrap();
        assert_eq!(rows[0].other_gap, Some(4.0));
        assert_eq!(rows[0].base_gap, Some(1.0));
        assert_eq!(rows[1].other_gap, Some(0.0));
        assert_eq!(rows[2].other_gap, None);
        assert_eq!((rows[2].n_id, rows[2].n_ood), (2, 0));
        assert_eq!(rows[3].other_gap, None);
        assert_eq!(rows[4].other_gap, Some(6.0));
        assert_eq!(rows[4].base_gap, Some(1.0));
        assert_eq!(rows[4].hi, 9.0);
    }

    #[test]
    fn interval_regions_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = random_set(&mut rng, 100, false);
        let count = |r: Region| -> usize {
            interval_gap(&s, s.scores(), r).unwrap().iter().map(|x| x.n_id + x.n_ood).sum()
        };
        assert_eq!(count(Region::Below) + count(Region::Above), count(Region::All));
    }

    #[test]
    fn correlation_examples() {
        let x: Vec<f64> = vec![1.0, 2.0, 4.0, 8.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let m = score_correlation(&[("x".into(), x.clone()), ("y".into(), neg)]).unwrap();
        assert_eq!(m.values[0][0], 1.0);
        assert!((m.values[0][1] + 1.0).abs() < 1e-15);
        let e = score_correlation(&[("x".into(), x), ("c".into(), vec![2.0; 4])]).unwrap_err();
        assert!(e.to_string().contains("'c'"));
    }

    #[test]
    fn correlation_matches_covariance_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let a: Vec<f64> = (0..10).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..10).map(|_| rng.random()).collect();
            let n = a.len() as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
            let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let m = score_correlation(&[("a".into(), a), ("b".into(), b)]).unwrap();
            assert!((m.values[0][1] - cov / (sa * sb)).abs() < 1e-12);
        }
    }

    fn arb_set() -> impl Strategy<Value = ScoredSet> {
        prop::collection::vec((-100.0f64..100.0, any::<bool>()), 2..40)
            .prop_filter("both classes", |v| v.iter().any(|p| p.1) && v.iter().any(|p| !p.1))
            .prop_map(|v| ScoredSet::from_pairs(v).unwrap())
    }

    proptest! {
        #[test]
        fn auroc_invariant_under_monotone_map(s in arb_set()) {
            let mapped = ScoredSet::new(
                s.scores().iter().map(|v| (v / 50.0).exp() * 3.0 - 1.0).collect(),
                s.flags().to_vec(),
            ).unwrap();
            prop_assert!((auroc(&s).unwrap() - auroc(&mapped).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn negation_flips_auroc(s in arb_set()) {
            let neg = ScoredSet::new(s.scores().iter().map(|v| -v).collect(), s.flags().to_vec()).unwrap();
            prop_assert!((auroc(&s).unwrap() + auroc(&neg).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn fpr_monotone_in_tpr(s in arb_set(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(fpr_at_tpr(&s, lo).unwrap() <= fpr_at_tpr(&s, hi).unwrap());
        }

        #[test]
        fn permutation_invariance(s in arb_set(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let p = ScoredSet::new(
                idx.iter().map(|&i| s.scores()[i]).collect(),
                idx.iter().map(|&i| s.flags()[i]).collect(),
            ).unwrap();
            prop_assert_eq!(auroc(&s).unwrap(), auroc(&p).unwrap());
            prop_assert_eq!(aucpr(&s).unwrap(), aucpr(&p).unwrap());
            prop_assert_eq!(fpr_at_tpr(&s, 0.95).unwrap(), fpr_at_tpr(&p, 0.95).unwrap());
            prop_assert_eq!(threshold_mass(&s, 0.95).unwrap(), threshold_mass(&p, 0.95).unwrap());
        }
    }
}
