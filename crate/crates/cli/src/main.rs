use std::path::PathBuf;
use std::process::ExitCode;

use anopipe_cli::{exit_code, run_stage, PipelineConfig, Preset, Stage, Variant};
use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anopipe", version, about = "Train and compare anomaly detectors on rendered and translated anomalies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; unset keys take the preset's values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Root seed for every random choice.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite the stage's existing output.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render the scene pools.
    GenData(Common),
    /// Train the geometry-consistent translator.
    TrainGcgan(Common),
    /// Translate the rendered anomalies.
    Convert(Common),
    /// Build the training and test manifests.
    Assemble(Common),
    /// Train one or both detectors.
    TrainDetector {
        #[command(flatten)]
        common: Common,
        /// Defaults to both.
        #[arg(long, value_enum)]
        variant: Option<Variant>,
    },
    /// Score both detectors on the test set.
    Evaluate(Common),
    /// Grad-CAM overlays and focus fractions on test anomalies.
    Explain(Common),
    /// Write the HTML comparison report.
    Report(Common),
}

fn run(cli: Cli) -> Result<()> {
    let (common, stages) = match cli.command {
        Command::GenData(c) => (c, vec![Stage::GenData]),
        Command::TrainGcgan(c) => (c, vec![Stage::TrainGcgan]),
        Command::Convert(c) => (c, vec![Stage::Convert]),
        Command::Assemble(c) => (c, vec![Stage::Assemble]),
        Command::TrainDetector { common, variant } => {
            let variants = variant.map_or(Variant::ALL.to_vec(), |v| vec![v]);
            (common, variants.into_iter().map(Stage::TrainDetector).collect())
        }
        Command::Evaluate(c) => (c, vec![Stage::Evaluate]),
        Command::Explain(c) => (c, vec![Stage::Explain]),
        Command::Report(c) => (c, vec![Stage::Report]),
    };
    let cfg = PipelineConfig::resolve(common.config.as_deref(), common.preset, common.seed)?;
    for stage in stages {
        let entry = run_stage(&cfg, stage, common.force)?;
        println!("{} done in {:.1}s", entry.stage, entry.wall_clock_s);
        for a in &entry.artifacts {
            println!("  {}  {}", &a.sha256[..16], a.path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let result = run(Cli::parse());
    if let Err(e) = &result {
        eprintln!("error: {e:#}");
    }
    ExitCode::from(exit_code(&result) as u8)
}
