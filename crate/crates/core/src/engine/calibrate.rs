use serde::Serialize;

use super::MixDiffResult;
use crate::error::{Error, Result};
use crate::metrics::{auroc, ScoredSet};

/// The weight picked on a validation split and the AUROC it reached there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaChoice {
    pub gamma: f64,
    pub auroc: f64,
}

/// Recomputes final scores for another weight. Results without a base score
/// (label access) are returned unchanged.
pub fn with_gamma(results: &[MixDiffResult], gamma: f64) -> Vec<MixDiffResult> {
    results
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if let Some(b) = r.base_score {
                r.final_score = b + gamma * r.mixdiff_score;
            }
            r
        })
        .collect()
}

/// Picks the weight from `grid` that maximizes AUROC on labeled validation
/// results; ties keep the earliest grid entry.
pub fn tune_gamma(results: &[MixDiffResult], grid: &[f64]) -> Result<GammaChoice> {
    if grid.is_empty() {
        return Err(Error::Engine("empty gamma grid".into()));
    }
    let flags = results
        .iter()
        .map(|r| r.ood.ok_or_else(|| Error::Engine(format!("result '{}' has no OOD flag", r.id))))
        .collect::<Result<Vec<bool>>>()?;
    let mut best: Option<GammaChoice> = None;
    for &gamma in grid {
        let scores = results
            .iter()
            .map(|r| {
                r.base_score
                    .map(|b| b + gamma * r.mixdiff_score)
                    .ok_or_else(|| Error::Engine("gamma tuning needs base scores".into()))
            })
            .collect::<Result<Vec<f64>>>()?;
        let a = auroc(&ScoredSet::new(scores, flags.clone())?)?;
        if best.is_none_or(|b| a > b.auroc) {
            best = Some(GammaChoice { gamma, auroc: a });
        }
    }
    Ok(best.expect("grid is non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(id: &str, base: f64, mix: f64, ood: bool) -> MixDiffResult {
        MixDiffResult {
            id: id.into(),
            predicted_class: 0,
            base_score: Some(base),
            mixdiff_score: mix,
            final_score: base,
            ood: Some(ood),
            terms: None,
        }
    }

    #[test]
    fn picks_the_separating_weight() {
        // Base alone mis-ranks; the mixdiff term fixes it for gamma >= 1.
        let rs = vec![r("a", 1.0, 0.0, false), r("b", 0.5, 1.0, true)];
        let c = tune_gamma(&rs, &[0.0, 0.25, 1.0, 2.0]).unwrap();
        assert_eq!(c.gamma, 1.0);
        assert_eq!(c.auroc, 1.0);
        let rescored = with_gamma(&rs, 2.0);
        assert_eq!(rescored[1].final_score, 2.5);
    }

    #[test]
    fn needs_flags_and_grid() {
        let mut rs = vec![r("a", 1.0, 0.0, false), r("b", 0.5, 1.0, true)];
        assert!(tune_gamma(&rs, &[]).is_err());
        rs[0].ood = None;
        assert!(tune_gamma(&rs, &[1.0]).is_err());
    }
}
