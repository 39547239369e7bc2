use std::path::PathBuf;

use clap::{Args, ValueEnum};
use mixdiff_core::backend::fit_logistic;
use mixdiff_core::benchmark::{Benchmark, BenchmarkSizes};
use mixdiff_core::theory::{sample_synthetic, SyntheticSpec};
use mixdiff_core::DataFormat;

use crate::common::load_data;
use crate::error::{CliError, CliResult};
use crate::output::{write_atomic, Manifest};
use crate::theory::load_spec;

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Labeled training rows; OOD rows are ignored.
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the model JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let data = load_data(&args.data, None)?;
    let report = fit_logistic(&data, args.epochs, args.lr)?;
    write_atomic(&args.out, report.model.to_json().as_bytes())?;
    println!(
        "trained {} epochs, loss {:.6}",
        report.losses.len() - 1,
        report.losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    /// Two-class mixture used by verify-theory.
    Theory,
    /// Overconfidence benchmark: train/validation/test splits plus a model.
    Benchmark,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum, conflicts_with = "spec")]
    pub preset: Option<Preset>,
    /// Mixture spec (JSON or TOML).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let mut manifest = Manifest::new("synth", args.seed, &args.out, serde_json::Value::Null);
    match (args.preset, &args.spec) {
        (Some(Preset::Benchmark), _) => {
            let b = Benchmark::build(args.seed, &BenchmarkSizes::default())?;
            for (name, split) in [("train", &b.train), ("validation", &b.validation), ("test", &b.test)] {
                manifest.write(&format!("{name}.csv"), split.to_string_as(DataFormat::Csv).as_bytes())?;
            }
            manifest.write("model.json", b.model.to_json().as_bytes())?;
        }
        (preset, spec) => {
            let s = match (preset, spec) {
                (_, Some(p)) => {
                    manifest.input("spec", p.display().to_string());
                    load_spec(p)?
                }
                (Some(Preset::Theory), None) => SyntheticSpec::theory_default(),
                _ => return Err(CliError::Usage("pass --preset or --spec".into())),
            };
            let data = sample_synthetic(&s.with_seed(args.seed))?;
            manifest.write("data.csv", data.to_string_as(DataFormat::Csv).as_bytes())?;
        }
    }
    manifest.finish()
}
