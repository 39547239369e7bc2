use std::fs;
use std::path::PathBuf;

use clap::Args;
use mixdiff_core::theory::{lattice_to_csv, run_suite, SuiteOptions, SyntheticSpec};

use crate::common::parse_list;
use crate::error::{CliError, CliResult};
use crate::output::{to_json_pretty, Manifest};

#[derive(Args, Debug)]
pub struct TheoryArgs {
    /// Mixture spec (JSON or TOML); the built-in two-class mixture otherwise.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Comma-separated mixing ratios for the decay check.
    #[arg(long)]
    pub lambdas: Option<String>,
    #[arg(long)]
    pub hard_pairs: Option<usize>,
}

pub fn load_spec(path: &std::path::Path) -> CliResult<SyntheticSpec> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parsed = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str::<SyntheticSpec>(&text).map_err(|e| e.message().to_string())
    } else {
        serde_json::from_str::<SyntheticSpec>(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|m| {
        CliError::Core(mixdiff_core::Error::InvalidConfig(format!("{}: {m}", path.display())))
    })
}

pub fn run(args: &TheoryArgs) -> CliResult<()> {
    let mut spec = match &args.spec {
        Some(p) => load_spec(p)?,
        None => SyntheticSpec::theory_default(),
    };
    if let Some(s) = args.seed {
        spec = spec.with_seed(s);
    }
    let mut opts = SuiteOptions::default();
    if let Some(v) = args.epochs {
        opts.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        opts.learning_rate = v;
    }
    if let Some(v) = args.pairs {
        opts.pairs = v;
    }
    if let Some(v) = &args.lambdas {
        opts.lambdas = parse_list(v, "lambda")?;
    }
    if let Some(v) = args.hard_pairs {
        opts.hard_pairs = v;
    }

    let config = serde_json::json!({ "spec": spec, "options": opts });
    let mut manifest = Manifest::new("verify-theory", spec.seed, &args.out, config);
    if let Some(p) = &args.spec {
        manifest.input("spec", p.display().to_string());
    }
    let report = run_suite(&spec, &opts)?;
    manifest.phase("suite");

    for d in &report.decay {
        let name = format!("decay_{}.csv", d.score.to_string().to_lowercase());
        manifest.write(&name, d.to_csv().as_bytes())?;
    }
    manifest.write("lattice_msp.csv", lattice_to_csv(&report.lattice).as_bytes())?;
    manifest.write("report.json", to_json_pretty(&report).as_bytes())?;
    manifest.phase("write");
    manifest.finish()?;

    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed {
            module: "theory",
            message: format!("failed checks: {}", failed.join(", ")),
        })
    }
}
