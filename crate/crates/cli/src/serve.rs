use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use mixdiff_core::server::{run_until, termination_signal, ServerConfig, DEFAULT_MAX_BATCH};
use mixdiff_core::{AccessLevel, LinearSoftmaxModel};

use crate::error::{CliError, CliResult};

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Model JSON to serve.
    #[arg(long)]
    pub model: PathBuf,
    /// The only output level the server answers.
    #[arg(long, default_value = "logits")]
    pub level: AccessLevel,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Largest batch accepted per request.
    #[arg(long, default_value_t = DEFAULT_MAX_BATCH)]
    pub max_batch: usize,
}

pub fn run(args: &ServeArgs) -> CliResult<()> {
    let bind: SocketAddr = args
        .bind
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid bind address '{}'", args.bind)))?;
    if args.max_batch == 0 {
        return Err(CliError::Usage("--max-batch must be at least 1".into()));
    }
    let model = LinearSoftmaxModel::load(&args.model)?;
    let mut cfg = ServerConfig::new(bind, args.level);
    cfg.max_batch = args.max_batch;
    run_until(
        Arc::new(model),
        &cfg,
        |addr| {
            println!("listening on http://{addr}");
            let _ = std::io::stdout().flush();
        },
        termination_signal,
    )?;
    log::info!("server stopped");
    Ok(())
}
