use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cumdid::config::LoadedConfig;
use cumdid::{pipeline, Error, ErrorKind};
use log::{error, info};

/// Intertemporal difference-in-differences for cumulative, binned treatments.
#[derive(Debug, Parser)]
#[command(name = "cumdid", version)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(long, short)]
    verbose: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Estimation => 4,
    }
}

fn run(args: &Args) -> Result<(), Error> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
    }
    let loaded = LoadedConfig::from_path(&args.config)?;
    let summary = pipeline::run(&loaded, args.out.as_deref())?;
    info!("wrote {} files to {}", summary.files.len(), summary.output_dir.display());
    for job in &summary.analysis.jobs {
        let a = &job.result.ate;
        println!(
            "{} on {} (width {}): ATE {} [{}, {}]",
            job.outcome,
            job.treatment,
            job.bin_width,
            a.estimate,
            a.ci_lo.map_or("NA".into(), |v| v.to_string()),
            a.ci_hi.map_or("NA".into(), |v| v.to_string()),
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error ({:?}): {e}", e.kind());
            ExitCode::from(exit_code(&e))
        }
    }
}
