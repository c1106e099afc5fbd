use clap::{Parser, Subcommand, ValueEnum};
use spdc_cli::{cmd_fit_beam, cmd_simulate, cmd_sweep, parse_config, SweepKind};
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulate and analyse the spatial distribution of down-converted photon
/// pairs for Gaussian and optical-vortex pump beams.
#[derive(Parser)]
#[command(name = "spdc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Width,
    Order,
    Critical,
}

impl From<KindArg> for SweepKind {
    fn from(value: KindArg) -> Self {
        match value {
            KindArg::Width => SweepKind::Width,
            KindArg::Order => SweepKind::Order,
            KindArg::Critical => SweepKind::Critical,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one ring image and its profile/metrics tables.
    Simulate {
        /// Configuration file (`section.key = value` lines).
        #[arg(short = 'c', long)]
        config: PathBuf,
        /// Output directory; defaults to the config's run.output_dir.
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
        /// Use the brute-force accumulation path instead of the FFT path.
        #[arg(long)]
        direct: bool,
    },
    /// Run a parameter study and write its CSV table.
    Sweep {
        #[arg(short = 'c', long)]
        config: PathBuf,
        /// Which study to run.
        #[arg(long)]
        kind: KindArg,
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
    /// Fit a vortex/Gaussian profile of known order to an image.
    FitBeam {
        /// PGM or grid-CSV image of the beam.
        #[arg(short = 'i', long)]
        image: PathBuf,
        /// Topological charge of the model to fit.
        #[arg(long)]
        l: u32,
        /// Pixel pitch for PGM inputs, mm (CSV carries its own).
        #[arg(long)]
        pitch_mm: Option<f64>,
        /// Output directory for fit_beam.csv.
        #[arg(short = 'o', long, default_value = ".")]
        out: PathBuf,
    },
}

fn read_config(path: &PathBuf) -> Result<spdc_cli::RunConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("config: {}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("config: {e}"))
}

fn run() -> Result<(), String> {
    match Cli::parse().command {
        Command::Simulate { config, out, direct } => {
            let cfg = read_config(&config)?;
            let out_dir = out.unwrap_or_else(|| cfg.run.output_dir.clone());
            cmd_simulate(&cfg, &out_dir, direct).map_err(|e| format!("simulate: {e}"))?;
            Ok(())
        }
        Command::Sweep { config, kind, out } => {
            let cfg = read_config(&config)?;
            let out_dir = out.unwrap_or_else(|| cfg.run.output_dir.clone());
            cmd_sweep(&cfg, &out_dir, kind.into()).map_err(|e| format!("sweep: {e}"))?;
            Ok(())
        }
        Command::FitBeam { image, l, pitch_mm, out } => {
            cmd_fit_beam(&image, l, pitch_mm, &out).map_err(|e| format!("fit-beam: {e}"))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("spdc: {message}");
            ExitCode::FAILURE
        }
    }
}
