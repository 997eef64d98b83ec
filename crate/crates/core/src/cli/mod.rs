//! `nc-forge` command-line front end.

pub mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{preset_values, DataSource, ExperimentConfig};

use crate::data::TaskSpec;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "nc-forge",
    version,
    about = "Neural-collapse regularized training on long-tailed data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic long-tailed task as IDX files.
    GenData {
        /// synth10-lt or synth10-balanced
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        preset: Option<String>,
        /// Config file; only its data keys are used.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train one run.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on its test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Noise sweep; bare flag uses the config's noise_sigmas.
        #[arg(long, num_args = 0..=1, value_delimiter = ',')]
        noise: Option<Vec<f64>>,
        /// Defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise angles and class-mean norms of a checkpoint.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the closed-form verifiers.
    Verify {
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 64)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn beside(checkpoint: &std::path::Path) -> PathBuf {
    checkpoint
        .parent()
        .map_or_else(|| PathBuf::from("."), |p| p.to_path_buf())
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code; argument errors are printed by clap and give 2.
pub fn run_from<I, T>(args: I) -> Result<i32>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return Ok(code);
        }
    };
    match cli.command {
        Command::GenData { preset, spec, out } => {
            let task = match (preset, spec) {
                (Some(name), _) => commands::data_preset(&name)?,
                (None, Some(path)) => match ExperimentConfig::load(path)?.data {
                    DataSource::Synthetic(t) => t,
                    DataSource::Idx { .. } => {
                        return Err(crate::Error::Config(
                            "gen-data needs data = synthetic".into(),
                        ))
                    }
                },
                (None, None) => unreachable!("clap requires one of them"),
            };
            commands::gen_data(&task, &task_text(&task), &out)?;
        }
        Command::Train { config, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| commands::default_out(&cfg, seed));
            let state = commands::train_run(&cfg, seed, &out)?;
            if let Some(r) = state.log.last() {
                println!(
                    "trained {} epochs, train_acc {:.4}, nc1 {:.4}",
                    state.epoch, r.train_acc, r.nc.nc1
                );
            }
            println!("artifacts in {}", out.display());
        }
        Command::Eval {
            checkpoint,
            noise,
            out,
        } => {
            let out = out.unwrap_or_else(|| beside(&checkpoint));
            let v = commands::eval_checkpoint(&checkpoint, noise.as_deref(), &out)?;
            println!("accuracy {}", v["accuracy"]);
        }
        Command::Analyze { checkpoint, out } => {
            let out = out.unwrap_or_else(|| beside(&checkpoint));
            let mean = commands::analyze(&checkpoint, &out)?;
            println!("mean pairwise angle {mean:.3} deg");
        }
        Command::Verify { k, p, seed } => {
            let (lines, ok) = commands::verify(k, p, seed)?;
            for l in lines {
                println!("{l}");
            }
            return Ok(if ok { 0 } else { 1 });
        }
    }
    Ok(0)
}

fn task_text(t: &TaskSpec) -> String {
    format!(
        "classes = {}\ndim = {}\nhead_per_class = {}\nimbalance_ratio = {}\ntest_per_class = {}\nseparation = {}\nspread = {}\ndata_seed = {}\n",
        t.num_classes, t.dim, t.head_per_class, t.imbalance_ratio, t.test_per_class, t.separation, t.spread, t.seed
    )
}
