use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use purkinje::config::RunConfig;
use purkinje::inference::{ParamVector, RunStatus};
use purkinje::pipeline;
use purkinje::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "purkinje", version, about = "Purkinje network identification from the 12-lead ECG")]
struct Cli {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel evaluations.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Harmonic map of a disk-topology surface (.obj or .off) to the unit disk.
    Flatten { surface: PathBuf },
    /// Grows both trees for a parameter vector.
    Grow {
        /// JSON list or object, inline or as a file. Defaults to the synthetic theta.
        #[arg(long)]
        theta: Option<String>,
    },
    /// Trees, activation map and ECG for a parameter vector.
    Forward {
        #[arg(long)]
        theta: Option<String>,
    },
    /// Full identification into a run directory.
    Fit,
    /// Re-simulates a fitted ensemble with both roots at time 0.
    Pace { run: PathBuf },
    /// Aligns, detrends and summarises a directory of beat CSVs.
    IngestBeats { input: PathBuf },
    /// Writes the bundled meshes and a matching configuration.
    Fixtures,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn theta_arg(arg: Option<&str>, cfg: &RunConfig) -> Result<ParamVector> {
    let Some(arg) = arg else {
        return ParamVector::from_slice(&cfg.synthetic.theta);
    };
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        pipeline::parse_theta(&text)
    } else {
        pipeline::parse_theta(arg)
    }
}

fn out_or(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Flatten { surface } => {
            let out = out_or(cli, "flatmap.json");
            let fm = pipeline::cmd_flatten(surface, &out)?;
            log::info!("flattened {} vertices into {}", fm.uv.len(), out.display());
        }
        Command::Grow { theta } => {
            let cfg = load_config(cli)?;
            let theta = theta_arg(theta.as_deref(), &cfg)?;
            pipeline::cmd_grow(&cfg, &theta, &out_or(cli, "trees"))?;
        }
        Command::Forward { theta } => {
            let cfg = load_config(cli)?;
            let theta = theta_arg(theta.as_deref(), &cfg)?;
            print_json(&pipeline::cmd_forward(&cfg, &theta, &out_or(cli, "forward"))?)?;
        }
        Command::Fit => {
            let cfg = load_config(cli)?;
            let outcome = pipeline::cmd_fit(&cfg, &out_or(cli, "run"))?;
            log::info!("run directory {}", outcome.dir.display());
            print_json(&outcome.status)?;
            if outcome.status.status == RunStatus::BudgetExhausted {
                return Err(Error::Budget(format!(
                    "{} of the requested members accepted; partial results in {}",
                    outcome.status.ensemble,
                    outcome.dir.display()
                )));
            }
        }
        Command::Pace { run } => {
            let (dir, summary) = pipeline::cmd_pace(run, cli.out.as_deref())?;
            log::info!("paced members in {}", dir.display());
            print_json(&summary)?;
        }
        Command::IngestBeats { input } => {
            let set = pipeline::cmd_ingest_beats(input, &out_or(cli, "beats"))?;
            log::info!("ingested {} beats", set.beats.len());
        }
        Command::Fixtures => pipeline::cmd_fixtures(&out_or(cli, "fixtures"))?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
