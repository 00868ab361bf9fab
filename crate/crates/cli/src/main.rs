//! `protogmm` command-line driver.
//!
//! Exit codes: 0 success, 2 user error (bad flags, config or input file),
//! 3 I/O failure, 4 degenerate data.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use protogmm::collapse::DEFAULT_EPSILONS;
use protogmm::config::RunConfig;
use protogmm::sim::Regime;
use protogmm::Error;

use manifest::{write_manifest, ManifestBuilder};

#[derive(Parser, Debug)]
#[command(
    name = "protogmm",
    version,
    about = "Prototype mixture estimation and collapse diagnostics"
)]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory; `manifest.json` is always written here.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the simulator and log per-epoch collapse telemetry.
    Simulate {
        /// Overrides `sim.regime`.
        #[arg(long)]
        regime: Option<Regime>,
        /// Run all 16 mixture toggle combinations, one sub-directory each.
        #[arg(long)]
        grid: bool,
    },
    /// Count unique prototypes over an ε grid and summarise pairwise angles.
    Analyze {
        /// Prototype CSV (`d0,...` header) or mixture checkpoint.
        protos: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EPSILONS)]
        epsilons: Vec<f64>,
    },
    /// PCA to the plane, then Gaussian and von Mises KDE exports.
    ExportKde {
        protos: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        kappa: f64,
        /// Fixed 2D bandwidth; Scott's rule when absent.
        #[arg(long)]
        bandwidth: Option<f64>,
        /// Project rows as stored instead of normalising them first.
        #[arg(long)]
        raw: bool,
        /// Output prefix; defaults to `<out>/kde`.
        #[arg(long)]
        prefix: Option<PathBuf>,
    },
    /// Fit the streaming mixture to a feature file, batch by batch.
    ClusterStream {
        features: PathBuf,
        /// Checkpoint path; defaults to `<out>/stream.pdgm`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Parse { .. } => 2,
        Error::Io { .. } => 3,
        Error::DegenerateRank(_) | Error::DegenerateComponent { .. } | Error::InvalidState(_) => 4,
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate { .. } => "simulate",
        Command::Analyze { .. } => "analyze",
        Command::ExportKde { .. } => "export-kde",
        Command::ClusterStream { .. } => "cluster-stream",
    }
}

fn load_config(path: Option<&Path>) -> protogmm::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::read(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: &Cli, m: &mut ManifestBuilder) -> protogmm::Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    cfg.sim.seed = cli.seed;
    if let Some(p) = &cli.config {
        m.param("config_path", p.display().to_string());
    }
    match &cli.command {
        Command::Simulate { regime, grid } => {
            if let Some(r) = regime {
                cfg.sim.regime = *r;
            }
            m.config = cfg
                .to_pairs()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
            commands::simulate(&cfg, &cli.out, *grid, m)
        }
        Command::Analyze { protos, epsilons } => commands::analyze(protos, epsilons, &cli.out, m),
        Command::ExportKde {
            protos,
            kappa,
            bandwidth,
            raw,
            prefix,
        } => {
            let prefix = prefix.clone().unwrap_or_else(|| cli.out.join("kde"));
            commands::export_kde(protos, *kappa, *bandwidth, *raw, &prefix, m)
        }
        Command::ClusterStream {
            features,
            checkpoint,
        } => {
            m.config = cfg
                .to_pairs()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
            let ckpt = checkpoint
                .clone()
                .unwrap_or_else(|| cli.out.join("stream.pdgm"));
            commands::cluster(features, &cfg, cli.seed, &ckpt, m)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut m = ManifestBuilder::new(command_name(&cli.command), cli.seed);
    let result = run(&cli, &mut m);
    let (code, msg) = match &result {
        Ok(()) => (0, None),
        Err(e) => {
            eprintln!("error: {e}");
            (exit_code(e), Some(e.to_string()))
        }
    };
    if let Err(e) = write_manifest(&cli.out, &m.finish(i32::from(code), msg)) {
        eprintln!("error: cannot write manifest in {}: {e}", cli.out.display());
        return ExitCode::from(if code == 0 { 3 } else { code });
    }
    ExitCode::from(code)
}
