use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ccfmap::pipeline::{self, Overrides, PipelineConfig, PipelineError};

#[derive(Parser)]
#[command(version, about = "Map informal settlements in multispectral rasters")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = pipeline::THREADS_ENV)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on one region and score the held-out split.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trees: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify a raster with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Raster container directory.
        #[arg(long)]
        raster: PathBuf,
        /// Class map path (.pgm).
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate every model on every dataset config.
    Crosseval {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic scene from a spec file.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    pipeline::with_threads(cli.threads, move || match cli.command {
        Command::Train {
            config,
            seed,
            trees,
            out,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            cfg.apply(&Overrides { seed, trees, out });
            cfg.validate()?;
            let outcome = pipeline::cmd_train(&cfg)?;
            println!(
                "{}: pixel accuracy {:.4}, mean IoU {:.4} -> {}",
                cfg.region,
                outcome.report.pixel_accuracy,
                outcome.report.mean_iou,
                outcome.model_path.display()
            );
            Ok(())
        }
        Command::Predict { model, raster, out } => {
            let o = pipeline::cmd_predict(&model, &raster, &out)?;
            println!(
                "{}: informal fraction {:.4}, {} nodata pixels",
                out.display(),
                o.informal_fraction,
                o.nodata_pixels
            );
            Ok(())
        }
        Command::Crosseval {
            models,
            configs,
            out,
        } => {
            let table = pipeline::cmd_crosseval(&models, &configs, &out)?;
            print!("{}", table.accuracy_table_csv());
            Ok(())
        }
        Command::Synth { config, seed, out } => {
            let o = pipeline::cmd_synth(&config, &out, seed)?;
            println!("wrote {}", o.config.display());
            Ok(())
        }
    })?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
