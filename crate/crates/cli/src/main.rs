mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use locflow::cutoff::Profile;
use locflow::Error;

/// Laboratory for cutoff-localized Ricci flow on coordinate charts.
#[derive(Debug, Parser)]
#[command(name = "locflow", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized scenarios and suites.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a scenario metric and write it with a JSON manifest.
    Scenario(ScenarioArgs),
    /// Curvature pack of a metric file.
    Curvature(CurvatureArgs),
    /// Sobolev constant estimate on a cutoff ball or the whole chart.
    Sobolev(SobolevArgs),
    /// Localized flow from a run configuration.
    Flow(FlowArgs),
    /// Geodesic ball volumes around a point.
    Volume(VolumeArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    name: String,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    wavenumber: Option<u32>,
    #[arg(long)]
    kx: Option<f64>,
    #[arg(long)]
    ky: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    radius2: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CurvatureArgs {
    metric: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SobolevArgs {
    metric: PathBuf,
    /// Ball center, comma-separated coordinates (default: chart center).
    #[arg(long, value_delimiter = ',')]
    center: Option<Vec<f64>>,
    /// Cutoff radius; without it the whole chart is the domain.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, value_enum, default_value = "cos2")]
    profile: ProfileArg,
    #[arg(long, default_value_t = 64)]
    budget: usize,
    #[arg(long, default_value_t = locflow::sobolev::DEFAULT_SAFETY)]
    safety: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FlowArgs {
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VolumeArgs {
    metric: PathBuf,
    #[arg(long, value_delimiter = ',')]
    center: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', required = true)]
    radii: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    suite: PathBuf,
    #[arg(long, default_value = "verify-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum ProfileArg {
    Cos2,
    Quintic,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Cos2 => Profile::Cos2,
            ProfileArg::Quintic => Profile::Quintic,
        }
    }
}

/// Outcome of a command that ran to completion.
pub enum Status {
    Ok,
    ChecksFailed,
    StepFailed,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::Step(_)
            | Error::NonFinite(_)
            | Error::SingularMetric { .. }
            | Error::DisplacementOutOfGrid { .. },
        ) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Scenario(a) => commands::scenario(a, cli.seed),
        Command::Curvature(a) => commands::curvature(a),
        Command::Sobolev(a) => commands::sobolev(a),
        Command::Flow(a) => commands::flow(a, cli.seed),
        Command::Volume(a) => commands::volume(a),
        Command::Verify(a) => commands::verify(a, cli.seed),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ChecksFailed) => ExitCode::from(1),
        Ok(Status::StepFailed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
