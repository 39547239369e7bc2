use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use mixdiff_core::engine::{attack_dataset, run_detection, AttackMode, Engine, RunOptions};
use mixdiff_core::metrics::{auroc, ScoredSet};

use crate::common::{build_oracle_set, load_data, load_oracles, parse_list, BackendSpec, ConfigArgs};
use crate::error::{CliError, CliResult};
use crate::output::Manifest;

#[derive(Args, Debug)]
pub struct AttackArgs {
    /// Labeled targets with both ID and OOD rows.
    #[arg(long)]
    pub data: PathBuf,
    /// local:<model.json>; gradients are not available remotely.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub oracles: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// L-infinity radius.
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    /// Comma-separated PGD step counts.
    #[arg(long, default_value = "0,1,5,10")]
    pub steps: String,
    #[arg(long, default_value_t = 0.1)]
    pub step_size: f64,
    /// Comma-separated subsets to perturb: in, out, both.
    #[arg(long, default_value = "both")]
    pub mode: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run(args: &AttackArgs) -> CliResult<()> {
    let cfg = args.config.load()?;
    let path = match BackendSpec::parse(&args.model)? {
        BackendSpec::Local(p) => p,
        BackendSpec::Remote(_) => {
            return Err(CliError::Usage(
                "attacks need input gradients; pass a local:<model.json> model".into(),
            ))
        }
    };
    let steps: Vec<usize> = parse_list(&args.steps, "step count")?;
    let modes: Vec<AttackMode> = parse_list(&args.mode, "attack mode")?;
    if steps.is_empty() || modes.is_empty() {
        return Err(CliError::Usage("--steps and --mode need at least one value".into()));
    }

    let config = serde_json::json!({
        "detector": cfg,
        "eps": args.eps,
        "steps": steps,
        "step_size": args.step_size,
        "modes": modes,
    });
    let mut manifest = Manifest::new("attack", args.seed, &args.out, config);
    manifest.input("data", args.data.display().to_string());
    manifest.input("model", path.display().to_string());
    manifest.input("oracles", args.oracles.display().to_string());
    if let Some(p) = &args.labels {
        manifest.input("labels", p.display().to_string());
    }

    let model = mixdiff_core::LinearSoftmaxModel::load(&path)?;
    let (oracle_data, table) = load_oracles(&args.oracles, args.labels.as_deref())?;
    let data = load_data(&args.data, Some(&table))?;
    let oracles = build_oracle_set(&oracle_data, &cfg, model.bias().len())?;
    let engine = Engine::new(&model, Some(&model), cfg.clone())?;
    let opts = RunOptions {
        seed: args.seed,
        jobs: args.jobs,
        ..Default::default()
    };
    manifest.phase("load");

    let mut csv = String::from("mode,steps,score_variant,auroc\n");
    for &mode in &modes {
        for &n in &steps {
            let attacked = attack_dataset(&model, &data, mode, args.eps, n, args.step_size)?;
            let results = run_detection(&engine, &attacked, &oracles, &opts)?;
            let flags: Vec<bool> = attacked.records().iter().map(|r| r.ood).collect();
            let mut variants: Vec<(&str, Vec<f64>)> = Vec::new();
            if let Some(base) = results.iter().map(|r| r.base_score).collect::<Option<Vec<f64>>>() {
                variants.push(("base", base));
            }
            variants.push(("mixdiff_only", results.iter().map(|r| r.mixdiff_score).collect()));
            variants.push(("final", results.iter().map(|r| r.final_score).collect()));
            for (name, scores) in variants {
                let a = auroc(&ScoredSet::new(scores, flags.clone())?)?;
                let _ = writeln!(csv, "{mode},{n},{name},{a}");
            }
            log::info!("mode {mode} steps {n} done");
        }
    }
    manifest.phase("attack");
    manifest.write("attack.csv", csv.as_bytes())?;
    manifest.finish()?;
    print!("{csv}");
    Ok(())
}
