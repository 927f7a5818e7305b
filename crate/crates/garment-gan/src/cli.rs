use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use garment_gan_core::eval::{config_digest, evaluate, render_grid, train_oracle, OracleConfig};
use garment_gan_core::training::{Schedule, TrainConfig};

use crate::checkpoint::{load_checkpoint, load_oracle, save_oracle};
use crate::error::{io_err, Error, Result};
use crate::manifest::save_manifest;
use crate::png::write_png;
use crate::run::run_training;
use crate::service::{serve, AppState, ModelHandle};
use crate::source::DataSource;

#[derive(Debug, Parser)]
#[command(
    name = "garment-gan",
    version,
    about = "Attribute editing of garment images with AttGAN-style models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a dataset (usually synthetic glyphs) as manifest.csv + PNGs.
    GenerateData {
        #[arg(long, default_value = "glyphs")]
        data: DataSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model.
    Train {
        /// JSON file mirroring the training configuration.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: DataSource,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        schedule: Option<Schedule>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Judge a checkpoint's edits on the held-out split of `--data`.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: DataSource,
        /// Oracle file; fitted on the training split and written here if
        /// it does not exist yet.
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a grid: original, reconstruction, one flipped attribute per column.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: DataSource,
        /// Comma-separated item ids.
        #[arg(long, value_delimiter = ',')]
        images: Vec<String>,
        /// Comma-separated attribute names; empty renders only the first two columns.
        #[arg(long, value_delimiter = ',', default_value = "")]
        attrs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the editing API.
    Serve {
        #[arg(long, env = "GARMENT_GAN_CHECKPOINT")]
        checkpoint: PathBuf,
        /// Gallery source (manifest or glyph spec).
        #[arg(long)]
        gallery: Option<DataSource>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value_t = 2)]
        workers: usize,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData { data, out } => {
            let d = data.load()?;
            let file = save_manifest(&d, &out)?;
            eprintln!("wrote {} items to {}", d.len(), file.display());
        }
        Command::Train {
            config,
            data,
            out,
            schedule,
            seed,
            steps,
            resume,
            quiet,
        } => {
            let text = std::fs::read_to_string(&config).map_err(io_err(&config))?;
            let mut cfg: TrainConfig = serde_json::from_str(&text)?;
            if let Some(s) = schedule {
                cfg.schedule = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = steps {
                cfg.total_steps = n;
            }
            let d = data.load()?;
            let from = resume.map(load_checkpoint).transpose()?;
            let run = run_training(&cfg, &d, &out, from, !quiet)?;
            eprintln!(
                "trained {} steps on {} items ({} held out); last checkpoint {}",
                run.state.step,
                run.train_count,
                run.test_count,
                run.checkpoints.last().map_or("-".into(), |p| p.display().to_string())
            );
        }
        Command::Evaluate {
            checkpoint,
            data,
            oracle,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let d = data.load()?;
            if d.schema() != &ckpt.schema {
                return Err(Error::Usage("data schema differs from the checkpoint's".into()));
            }
            let (train_set, test_set) = d.split(ckpt.config.test_fraction, ckpt.config.seed)?;
            let judge = if oracle.exists() {
                let (schema, o) = load_oracle(&oracle)?;
                if schema.names() != d.schema().names() {
                    return Err(Error::Usage("oracle schema differs from the data's".into()));
                }
                o
            } else {
                let o = train_oracle(&train_set, &OracleConfig::default(), ckpt.config.seed)?;
                save_oracle(&oracle, d.schema(), &o)?;
                eprintln!(
                    "fitted oracle on {} training items -> {}",
                    train_set.len(),
                    oracle.display()
                );
                o
            };
            let report = evaluate(&ckpt.state.generator, &judge, &test_set, config_digest(&ckpt.config))?;
            let json = serde_json::to_string_pretty(&report)?;
            std::fs::write(&out, &json).map_err(io_err(&out))?;
            println!("{json}");
        }
        Command::Render {
            checkpoint,
            data,
            images,
            attrs,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let d = data.load()?;
            let mut sources = Vec::new();
            for id in &images {
                let item = d
                    .find(id)
                    .ok_or_else(|| Error::Usage(format!("no item `{id}` in the data")))?;
                sources.push((item.pixels.clone(), item.attrs.clone()));
            }
            let edits = attrs
                .iter()
                .filter(|a| !a.is_empty())
                .map(|a| ckpt.schema.index_of(a))
                .collect::<garment_gan_core::Result<Vec<_>>>()?;
            let grid = render_grid(&ckpt.state.generator, &sources, &edits, &ckpt.schema)?;
            write_png(&out, grid.width(), grid.height(), &grid.rgb)?;
            eprintln!("wrote {}x{} tiles to {}", grid.rows, grid.cols, out.display());
        }
        Command::Serve {
            checkpoint,
            gallery,
            addr,
            workers,
        } => {
            let handle = ModelHandle::load(&checkpoint)?;
            let gallery = gallery.map(|g| g.load()).transpose()?;
            let state = Arc::new(AppState::new(handle, gallery, workers)?);
            let rt = tokio::runtime::Runtime::new().map_err(io_err(&addr))?;
            rt.block_on(serve(&addr, state))?;
        }
    }
    Ok(())
}
