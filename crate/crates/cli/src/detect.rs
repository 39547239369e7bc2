use std::path::PathBuf;

use clap::Args;
use log::info;
use mixdiff_core::engine::{results_to_jsonl, run_detection, Engine, MixDiffResult, RunOptions};
use mixdiff_core::metrics::{interval_gap, interval_rows_to_csv, score_correlation, Region, ScoredSet};
use mixdiff_core::Sample;

use crate::common::{
    build_oracle_set, load_data, load_oracles, metrics_for, open_backend, BackendSpec, ConfigArgs,
    VariantMetrics,
};
use crate::error::CliResult;
use crate::output::{to_json_pretty, Manifest};

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// Targets to score (CSV or JSONL).
    #[arg(long)]
    pub data: PathBuf,
    /// In-distribution exemplars to draw oracles from.
    #[arg(long)]
    pub oracles: PathBuf,
    /// local:<model.json> or remote:<url>.
    #[arg(long)]
    pub backend: String,
    /// Classification head for embedding access.
    #[arg(long)]
    pub head: Option<PathBuf>,
    /// Label table JSON shared by every input file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Pool for random auxiliaries; defaults to the oracle rows.
    #[arg(long)]
    pub aux_pool: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; every core by default.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Keep per-(auxiliary, ratio) terms in results.jsonl.
    #[arg(long)]
    pub keep_terms: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run(args: &DetectArgs) -> CliResult<()> {
    let cfg = args.config.load()?;
    let spec = BackendSpec::parse(&args.backend)?;
    let mut manifest = Manifest::new(
        "detect",
        args.seed,
        &args.out,
        serde_json::to_value(&cfg).expect("config serializes"),
    );
    manifest.input("data", args.data.display().to_string());
    manifest.input("oracles", args.oracles.display().to_string());
    manifest.input("backend", spec.describe());
    for (name, p) in [("head", &args.head), ("labels", &args.labels), ("aux_pool", &args.aux_pool)] {
        if let Some(p) = p {
            manifest.input(name, p.display().to_string());
        }
    }

    let opened = open_backend(&spec, args.head.as_deref())?;
    let (oracle_data, table) = load_oracles(&args.oracles, args.labels.as_deref())?;
    let targets = load_data(&args.data, Some(&table))?;
    let aux_pool: Option<Vec<Sample>> = args
        .aux_pool
        .as_deref()
        .map(|p| load_data(p, Some(&table)).map(|d| d.samples()))
        .transpose()?;
    let num_classes = opened
        .head
        .as_ref()
        .map(|h| h.bias().len())
        .unwrap_or_else(|| opened.backend.num_classes());
    let oracles = build_oracle_set(&oracle_data, &cfg, num_classes)?;
    manifest.phase("load");
    info!("scoring {} targets against {} oracle rows", targets.len(), oracle_data.len());

    let engine = Engine::new(opened.backend.as_ref(), opened.head.as_ref(), cfg)?;
    let opts = RunOptions {
        seed: args.seed,
        jobs: args.jobs,
        aux_pool,
        keep_terms: args.keep_terms,
    };
    let results = run_detection(&engine, &targets, &oracles, &opts)?;
    manifest.phase("detect");

    manifest.write("results.jsonl", results_to_jsonl(&results).as_bytes())?;
    let flags: Vec<bool> = targets.records().iter().map(|r| r.ood).collect();
    let metrics = summarize(&results, &flags)?;
    manifest.write("metrics.json", to_json_pretty(&metrics).as_bytes())?;
    if let Some((intervals, correlation)) = analyses(&results, &flags)? {
        manifest.write("intervals.csv", intervals.as_bytes())?;
        manifest.write("correlation.csv", correlation.as_bytes())?;
    }
    manifest.phase("write");
    manifest.finish()?;
    if let Some(m) = &metrics.final_ {
        println!("final auroc {:.4} fpr95 {:.4} aucpr {:.4}", m.auroc, m.fpr95, m.aucpr);
    }
    Ok(())
}

fn summarize(results: &[MixDiffResult], flags: &[bool]) -> CliResult<VariantMetrics> {
    let base = match results.iter().map(|r| r.base_score).collect::<Option<Vec<f64>>>() {
        Some(b) => metrics_for(b, flags)?,
        None => None,
    };
    Ok(VariantMetrics {
        num_targets: results.len(),
        num_ood: flags.iter().filter(|&&f| f).count(),
        base,
        mixdiff_only: metrics_for(results.iter().map(|r| r.mixdiff_score).collect(), flags)?,
        final_: metrics_for(results.iter().map(|r| r.final_score).collect(), flags)?,
    })
}

/// Interval gaps of the perturbation score against the base score and the
/// correlation between score columns. Skipped without base scores or when
/// only one class is present.
fn analyses(results: &[MixDiffResult], flags: &[bool]) -> CliResult<Option<(String, String)>> {
    let Some(base) = results.iter().map(|r| r.base_score).collect::<Option<Vec<f64>>>() else {
        return Ok(None);
    };
    if !(flags.iter().any(|&f| f) && flags.iter().any(|&f| !f)) || results.len() < 3 {
        return Ok(None);
    }
    let mix: Vec<f64> = results.iter().map(|r| r.mixdiff_score).collect();
    let set = ScoredSet::new(base.clone(), flags.to_vec())?;
    let mut intervals = String::from("region,");
    let mut first = true;
    for region in [Region::All, Region::Below, Region::Above] {
        let rows = interval_gap(&set, &mix, region)?;
        let csv = interval_rows_to_csv(&rows);
        let mut lines = csv.lines();
        let header = lines.next().unwrap_or_default();
        if first {
            intervals.push_str(header);
            intervals.push('\n');
            first = false;
        }
        let tag = serde_json::to_value(region).expect("region serializes");
        for line in lines {
            intervals.push_str(tag.as_str().unwrap_or_default());
            intervals.push(',');
            intervals.push_str(line);
            intervals.push('\n');
        }
    }
    let columns = vec![("base".to_string(), base), ("mixdiff".to_string(), mix)];
    let correlation = match score_correlation(&columns) {
        Ok(m) => m.to_csv(),
        Err(e) => {
            log::warn!("correlation skipped: {e}");
            String::from("column,base,mixdiff\n")
        }
    };
    Ok(Some((intervals, correlation)))
}

