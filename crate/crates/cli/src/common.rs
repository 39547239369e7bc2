use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use mixdiff_core::backend::{RemoteBackend, RemoteOptions};
use mixdiff_core::dataset::load_dataset_with_labels;
use mixdiff_core::metrics::{evaluate, MetricReport, ScoredSet};
use mixdiff_core::{
    AccessLevel, AuxStrategy, Backend, DataFormat, LabelTable, LabeledDataset, LinearSoftmaxModel,
    MixDiffConfig, OracleSelection, OracleSet, ScoreKind,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Detector settings: an optional TOML file whose keys mirror the config
/// fields, overridden by individual flags.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML file with detector settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub num_aux: Option<usize>,
    #[arg(long)]
    pub num_ratios: Option<usize>,
    #[arg(long)]
    pub oracle_size: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// logits, probs, labels or embeddings.
    #[arg(long)]
    pub access_level: Option<AccessLevel>,
    /// msp, mls, energy, entropy or mcm.
    #[arg(long)]
    pub base_score: Option<ScoreKind>,
    /// in_batch, random_id or oracle_as_aux.
    #[arg(long)]
    pub aux_strategy: Option<AuxStrategy>,
    /// by_predicted_label, unlabeled_top_m or random_oracle.
    #[arg(long)]
    pub oracle_selection: Option<OracleSelection>,
    /// Score perturbed targets without subtracting the oracle side.
    #[arg(long)]
    pub no_compare: bool,
    #[arg(long)]
    pub mcm_temperature: Option<f64>,
    /// Report the perturbation score alone as the final score.
    #[arg(long)]
    pub mixdiff_only: bool,
}

impl ConfigArgs {
    pub fn load(&self) -> CliResult<MixDiffConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                toml::from_str::<MixDiffConfig>(&text).map_err(|e| {
                    CliError::Core(mixdiff_core::Error::InvalidConfig(format!(
                        "{}: {}",
                        p.display(),
                        e.message()
                    )))
                })?
            }
            None => MixDiffConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(num_aux, num_ratios, oracle_size, gamma, access_level, base_score, aux_strategy, oracle_selection, mcm_temperature);
        if self.no_compare {
            cfg.compare_enabled = false;
        }
        if self.mixdiff_only {
            cfg.mixdiff_only = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Where predictions come from.
#[derive(Clone, Debug, PartialEq)]
pub enum BackendSpec {
    Local(PathBuf),
    Remote(String),
}

impl BackendSpec {
    pub fn parse(s: &str) -> CliResult<Self> {
        if let Some(p) = s.strip_prefix("local:") {
            Ok(BackendSpec::Local(PathBuf::from(p)))
        } else if let Some(u) = s.strip_prefix("remote:") {
            Ok(BackendSpec::Remote(u.to_string()))
        } else {
            Err(CliError::Usage(format!(
                "backend must be local:<model.json> or remote:<url>, got '{s}'"
            )))
        }
    }

    pub fn describe(&self) -> String {
        match self {
            BackendSpec::Local(p) => format!("local:{}", p.display()),
            BackendSpec::Remote(u) => format!("remote:{u}"),
        }
    }
}

pub struct OpenBackend {
    pub backend: Box<dyn Backend>,
    /// Maps embeddings to logits; a local model is its own head.
    pub head: Option<LinearSoftmaxModel>,
}

pub fn open_backend(spec: &BackendSpec, head: Option<&Path>) -> CliResult<OpenBackend> {
    let head_model = head.map(LinearSoftmaxModel::load).transpose()?;
    Ok(match spec {
        BackendSpec::Local(p) => {
            let m = LinearSoftmaxModel::load(p)?;
            OpenBackend {
                head: Some(head_model.unwrap_or_else(|| m.clone())),
                backend: Box::new(m),
            }
        }
        BackendSpec::Remote(url) => OpenBackend {
            backend: Box::new(RemoteBackend::connect(url, RemoteOptions::default())?),
            head: head_model,
        },
    })
}

pub fn load_data(path: &Path, labels: Option<&LabelTable>) -> CliResult<LabeledDataset> {
    let format = DataFormat::from_path(path)?;
    Ok(load_dataset_with_labels(path, format, labels)?)
}

/// Oracle data plus the label table every other file is read with.
pub fn load_oracles(path: &Path, labels: Option<&Path>) -> CliResult<(LabeledDataset, LabelTable)> {
    let table = labels.map(LabelTable::load).transpose()?;
    let data = load_data(path, table.as_ref())?;
    let table = data.labels().clone();
    Ok((data, table))
}

/// The first `oracle_size` in-distribution rows of every class. Labels are
/// kept only for selection by predicted label; other selections see a flat
/// pool of `oracle_size * num_classes` rows.
pub fn build_oracle_set(data: &LabeledDataset, cfg: &MixDiffConfig, num_classes: usize) -> CliResult<OracleSet> {
    if data.num_classes() != num_classes {
        return Err(CliError::Core(mixdiff_core::Error::InvalidData(format!(
            "oracle file has {} classes, model predicts {num_classes}",
            data.num_classes()
        ))));
    }
    let labeled = cfg.oracle_selection == OracleSelection::ByPredictedLabel;
    Ok(OracleSet::from_dataset(data, cfg.oracle_size, labeled)?)
}

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<T>()
                .map_err(|_| CliError::Usage(format!("invalid {what} '{p}'")))
        })
        .collect()
}

/// AUROC, FPR95 and AUCPR of one score column, or `None` when the flags do
/// not contain both classes.
pub fn metrics_for(scores: Vec<f64>, flags: &[bool]) -> CliResult<Option<MetricReport>> {
    if !(flags.iter().any(|&f| f) && flags.iter().any(|&f| !f)) {
        return Ok(None);
    }
    Ok(Some(evaluate(&ScoredSet::new(scores, flags.to_vec())?)?))
}

#[derive(Serialize)]
pub struct VariantMetrics {
    pub num_targets: usize,
    pub num_ood: usize,
    pub base: Option<MetricReport>,
    pub mixdiff_only: Option<MetricReport>,
    #[serde(rename = "final")]
    pub final_: Option<MetricReport>,
}
