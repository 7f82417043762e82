//! Thin CLI over the library's command entry points.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fakespot::commands;
use fakespot::config::RunConfig;

#[derive(Parser)]
#[command(name = "fakespot", about = "Detect AI-generated images and explain the predictions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Plain-text key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline overrides, e.g. --set seed=2 --set epochs=5 (highest precedence).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, fakespot::Error> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        for assignment in &self.sets {
            let (k, v) = assignment.split_once('=').ok_or_else(|| {
                fakespot::Error::Config(format!("--set expects KEY=VALUE, got '{assignment}'"))
            })?;
            config.set(k.trim(), v.trim())?;
        }
        if let Some(v) = &self.data_root {
            config.data_root = v.clone();
        }
        if let Some(v) = &self.output_dir {
            config.output_dir = v.clone();
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.epochs {
            config.epochs = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            config.learning_rate = v;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one topology and write an epoch log plus checkpoint.
    Train(ConfigArgs),
    /// Evaluate a checkpoint on a dataset's test folder.
    Evaluate {
        checkpoint: PathBuf,
        #[arg(long)]
        data_root: PathBuf,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Run the two-stage 36-network topology search.
    GridSearch(ConfigArgs),
    /// Write Grad-CAM overlays and heatmaps for image files.
    Explain {
        checkpoint: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
        /// Conv layer index to target (default: last conv layer).
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long, default_value = "explained")]
        out_dir: PathBuf,
    },
    /// Forward-noise image files to a diffusion step.
    Noisify {
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long, default_value_t = 25)]
        step: usize,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "noised")]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), fakespot::Error> {
    match cli.command {
        Command::Train(args) => {
            let out = commands::cmd_train(&args.resolve()?)?;
            println!("checkpoint: {}", out.checkpoint_path.display());
        }
        Command::Evaluate {
            checkpoint,
            data_root,
            batch_size,
            out_csv,
        } => {
            commands::cmd_evaluate(&checkpoint, &data_root, batch_size, out_csv.as_deref())?;
        }
        Command::GridSearch(args) => {
            let out = commands::cmd_gridsearch(&args.resolve()?)?;
            println!("summary: {}", out.summary_path.display());
        }
        Command::Explain {
            checkpoint,
            images,
            layer,
            out_dir,
        } => {
            let files = commands::cmd_explain(&checkpoint, &images, layer, &out_dir)?;
            println!("wrote {} files to {}", files.len(), out_dir.display());
        }
        Command::Noisify {
            images,
            step,
            steps,
            seed,
            out_dir,
        } => {
            let files = commands::cmd_noisify(&images, step, steps, seed, &out_dir)?;
            println!("wrote {} files to {}", files.len(), out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
