//! Training runs on disk: `config.resolved.json`, `losses.jsonl` and
//! `checkpoints/step_<k>.ckpt` under an output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use garment_gan_core::data::{AttributeSchema, Dataset};
use garment_gan_core::training::{resume, train, LossRecord, Observer, TrainConfig, TrainState};

use crate::checkpoint::{checkpoint_path, save_checkpoint, Checkpoint};
use crate::error::{io_err, Error, Result};

struct DiskObserver<'a> {
    dir: &'a Path,
    schema: &'a AttributeSchema,
    config: &'a TrainConfig,
    log: BufWriter<File>,
    log_path: PathBuf,
    checkpoints: Vec<PathBuf>,
    error: Option<Error>,
    verbose: bool,
}

impl Observer<f32> for DiskObserver<'_> {
    fn on_log(&mut self, record: &LossRecord) -> garment_gan_core::Result<()> {
        let line = serde_json::to_string(record).expect("loss records serialize");
        if let Err(e) = writeln!(self.log, "{line}").and_then(|_| self.log.flush()) {
            self.error = Some(io_err(&self.log_path)(e));
            return Err(garment_gan_core::Error::Config("loss log write failed".into()));
        }
        if self.verbose {
            eprintln!(
                "step {:>6}  rec {:.4}  cls_g {:.4}  cls_c {:.4}  adv_g {:.4}  adv_d {:.4}",
                record.step, record.rec, record.cls_g, record.cls_c, record.adv_g, record.adv_d
            );
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, state: &TrainState<f32>) -> garment_gan_core::Result<()> {
        let path = checkpoint_path(self.dir, state.step);
        match save_checkpoint(&path, self.schema, self.config, state) {
            Ok(()) => {
                self.checkpoints.push(path);
                Ok(())
            }
            Err(e) => {
                self.error = Some(e);
                Err(garment_gan_core::Error::Config("checkpoint write failed".into()))
            }
        }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub state: TrainState<f32>,
    pub checkpoints: Vec<PathBuf>,
    pub train_count: usize,
    pub test_count: usize,
}

/// Splits `data` by the config's test fraction and seed, trains on the
/// training part (continuing `from` if given) and writes the run files.
pub fn run_training(
    config: &TrainConfig,
    data: &Dataset,
    out: &Path,
    from: Option<Checkpoint>,
    verbose: bool,
) -> Result<RunOutput> {
    config.validate()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let resolved = out.join("config.resolved.json");
    fs::write(&resolved, serde_json::to_string_pretty(config)?).map_err(io_err(&resolved))?;
    let (train_set, test_set) = data.split(config.test_fraction, config.seed)?;
    let log_path = out.join("losses.jsonl");
    let file = if from.is_some() {
        fs::OpenOptions::new().create(true).append(true).open(&log_path)
    } else {
        File::create(&log_path)
    }
    .map_err(io_err(&log_path))?;
    let mut obs = DiskObserver {
        dir: out,
        schema: data.schema(),
        config,
        log: BufWriter::new(file),
        log_path,
        checkpoints: Vec::new(),
        error: None,
        verbose,
    };
    let result = match from {
        Some(ckpt) => {
            if ckpt.schema != *data.schema() {
                return Err(Error::Usage("checkpoint schema differs from the data's".into()));
            }
            if ckpt.config.model != config.model || ckpt.config.seed != config.seed {
                return Err(Error::Usage(
                    "resume needs the checkpoint's model configuration and seed".into(),
                ));
            }
            resume(ckpt.state, config, &train_set, &mut obs)
        }
        None => train(config, &train_set, &mut obs),
    };
    if let Some(e) = obs.error.take() {
        return Err(e);
    }
    Ok(RunOutput {
        state: result?,
        checkpoints: obs.checkpoints,
        train_count: train_set.len(),
        test_count: test_set.len(),
    })
}
