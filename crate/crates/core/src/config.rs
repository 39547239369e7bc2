use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{ScoreFn, ScoreKind};
use crate::types::AccessLevel;

/// Where the auxiliary samples mixed into targets and oracles come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxStrategy {
    /// The other targets of the same processing batch.
    InBatch,
    /// One fixed draw from a pool of ID samples.
    RandomId,
    /// The remaining oracle exemplars of the predicted class.
    OracleAsAux,
}

impl AuxStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            AuxStrategy::InBatch => "in_batch",
            AuxStrategy::RandomId => "random_id",
            AuxStrategy::OracleAsAux => "oracle_as_aux",
        }
    }
}

impl fmt::Display for AuxStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AuxStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "in_batch" | "inbatch" => Ok(AuxStrategy::InBatch),
            "random_id" | "randomid" => Ok(AuxStrategy::RandomId),
            "oracle_as_aux" | "oracleasaux" => Ok(AuxStrategy::OracleAsAux),
            other => Err(Error::InvalidConfig(format!(
                "unknown auxiliary strategy '{other}'"
            ))),
        }
    }
}

/// How the oracle exemplars compared against a target are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleSelection {
    ByPredictedLabel,
    UnlabeledTopM,
    RandomOracle,
}

impl OracleSelection {
    pub fn as_str(self) -> &'static str {
        match self {
            OracleSelection::ByPredictedLabel => "by_predicted_label",
            OracleSelection::UnlabeledTopM => "unlabeled_top_m",
            OracleSelection::RandomOracle => "random_oracle",
        }
    }
}

impl fmt::Display for OracleSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OracleSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "by_predicted_label" | "predicted" => Ok(OracleSelection::ByPredictedLabel),
            "unlabeled_top_m" | "unlabeled" => Ok(OracleSelection::UnlabeledTopM),
            "random_oracle" | "random" => Ok(OracleSelection::RandomOracle),
            other => Err(Error::InvalidConfig(format!(
                "unknown oracle selection '{other}'"
            ))),
        }
    }
}

/// Hyperparameters of one detection run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixDiffConfig {
    /// Auxiliary samples per target (N). Ignored by `OracleAsAux`, which uses M - 1.
    pub num_aux: usize,
    /// Mixup ratios (R).
    pub num_ratios: usize,
    /// Oracle exemplars per comparison (M).
    pub oracle_size: usize,
    /// Weight of the MixDiff term in the final score.
    pub gamma: f64,
    pub access_level: AccessLevel,
    pub base_score: ScoreKind,
    pub aux_strategy: AuxStrategy,
    pub oracle_selection: OracleSelection,
    /// When false the oracle side is skipped and only perturbed-target scores are averaged.
    pub compare_enabled: bool,
    pub mcm_temperature: f64,
    /// Report the MixDiff term alone as the final score.
    pub mixdiff_only: bool,
}

impl Default for MixDiffConfig {
    fn default() -> Self {
        Self {
            num_aux: 14,
            num_ratios: 7,
            oracle_size: 15,
            gamma: 2.0,
            access_level: AccessLevel::Logits,
            base_score: ScoreKind::Entropy,
            aux_strategy: AuxStrategy::RandomId,
            oracle_selection: OracleSelection::ByPredictedLabel,
            compare_enabled: true,
            mcm_temperature: 1.0,
            mixdiff_only: false,
        }
    }
}

impl MixDiffConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_ratios == 0 {
            return bad("num_ratios must be >= 1".into());
        }
        if self.oracle_size == 0 {
            return bad("oracle_size must be >= 1".into());
        }
        if self.num_aux == 0 && self.aux_strategy != AuxStrategy::OracleAsAux {
            return bad("num_aux must be >= 1".into());
        }
        if self.aux_strategy == AuxStrategy::OracleAsAux && self.oracle_size < 2 {
            return bad("oracle_as_aux needs oracle_size >= 2".into());
        }
        if !self.gamma.is_finite() {
            return bad(format!("gamma must be finite, got {}", self.gamma));
        }
        if !(self.mcm_temperature.is_finite() && self.mcm_temperature > 0.0) {
            return bad(format!(
                "mcm_temperature must be positive, got {}",
                self.mcm_temperature
            ));
        }
        if self.access_level == AccessLevel::Labels && !self.compare_enabled {
            return bad("label access requires compare_enabled".into());
        }
        if self.access_level == AccessLevel::Probs && !self.base_score.accepts_probs() {
            return bad(format!(
                "{} needs logits and cannot be used with probs access",
                self.base_score
            ));
        }
        Ok(())
    }

    /// Auxiliary count actually used per target.
    pub fn effective_num_aux(&self) -> usize {
        match self.aux_strategy {
            AuxStrategy::OracleAsAux => self.oracle_size - 1,
            _ => self.num_aux,
        }
    }

    pub fn score_fn(&self) -> ScoreFn {
        ScoreFn::new(self.base_score, self.mcm_temperature)
    }

    pub fn ratios(&self) -> Result<Vec<f64>> {
        mixup_ratio_grid(self.num_ratios)
    }

    pub fn label_mode(&self) -> bool {
        self.access_level == AccessLevel::Labels
    }
}

/// Mixup ratios `r / (R + 1)` for `r = 1..=R`.
pub fn mixup_ratio_grid(num_ratios: usize) -> Result<Vec<f64>> {
    if num_ratios == 0 {
        return Err(Error::InvalidConfig("num_ratios must be >= 1".into()));
    }
    let denom = (num_ratios + 1) as f64;
    Ok((1..=num_ratios).map(|r| r as f64 / denom).collect())
}
