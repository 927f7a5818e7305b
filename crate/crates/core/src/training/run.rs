use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::{Schedule, TrainConfig};
use super::state::TrainState;
use super::steps::{
    dc_step_with_fakes, g_step_cls, g_step_joint, g_step_rec_adv, generate_fakes, DcReport, GReport, StepBatch,
};
use crate::data::{sample_target_attributes, BatchSampler, Dataset};
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::scalar::Scalar;

/// Which generator update just happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorPhase {
    Joint,
    /// `lambda1 * rec + adv_g` half of the split schedule.
    RecAdv,
    /// `lambda2 * cls_g` half of the split schedule.
    Cls,
}

/// One line of the loss log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub rec: f64,
    pub cls_g: f64,
    pub cls_c: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub total_g: f64,
    pub total_dc: f64,
}

impl LossRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.rec,
            self.cls_g,
            self.cls_c,
            self.adv_g,
            self.adv_d,
            self.total_g,
            self.total_dc,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Hooks called by the training loop. All methods default to no-ops.
pub trait Observer<T> {
    fn on_dc_update(&mut self, _state: &TrainState<T>, _report: &DcReport) {}
    fn on_generator_update(&mut self, _phase: GeneratorPhase, _state: &TrainState<T>, _report: &GReport) {}
    fn on_step(&mut self, _state: &TrainState<T>, _record: &LossRecord) {}
    fn on_log(&mut self, _record: &LossRecord) -> Result<()> {
        Ok(())
    }
    fn on_checkpoint(&mut self, _state: &TrainState<T>) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct Silent;
impl<T> Observer<T> for Silent {}

/// Drives outer steps over a fixed dataset.
pub struct Trainer<'a> {
    config: &'a TrainConfig,
    dataset: &'a Dataset,
    sampler: BatchSampler,
}

impl<'a> Trainer<'a> {
    pub fn new(config: &'a TrainConfig, dataset: &'a Dataset) -> Result<Self> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (h, w) = dataset.image_size();
        if h != config.model.image_size || w != config.model.image_size {
            return Err(Error::Shape(alloc::format!(
                "dataset images are {h}x{w}, model expects {0}x{0}",
                config.model.image_size
            )));
        }
        if dataset.schema().len() != config.model.n_attributes {
            return Err(Error::Arity {
                expected: config.model.n_attributes,
                actual: dataset.schema().len(),
            });
        }
        Ok(Self {
            config,
            dataset,
            sampler: BatchSampler::new(config.seed, dataset.len(), config.batch_size),
        })
    }

    /// Images, attributes and targets of outer step `step`.
    pub fn batch<T: Scalar>(&mut self, step: u64) -> Result<StepBatch<T>> {
        let indices = self.sampler.indices(step);
        let (x, a) = self.dataset.batch::<T>(&indices);
        let b = sample_target_attributes(&a, &mut stream(self.config.seed, Domain::Targets, step))?;
        Ok(StepBatch { x, a, b })
    }

    /// One outer step: `inner_dc_steps` discriminator/classifier updates
    /// followed by the schedule's generator phase.
    pub fn step<T: Scalar>(&mut self, state: &mut TrainState<T>, observer: &mut dyn Observer<T>) -> Result<LossRecord> {
        let config = self.config;
        let batch = self.batch::<T>(state.step)?;
        // The generator is fixed during the inner loop, so its fakes are too.
        let fakes = generate_fakes(&state.generator, &batch)?;
        let mut dc = DcReport::default();
        for _ in 0..config.inner_dc_steps {
            dc = dc_step_with_fakes(state, config, &batch, &fakes)?;
            observer.on_dc_update(state, &dc);
        }
        let (rec, adv_g, cls_g) = match config.schedule {
            Schedule::AttganJoint => {
                let g = g_step_joint(state, config, &batch)?;
                observer.on_generator_update(GeneratorPhase::Joint, state, &g);
                (g.rec, g.adv_g, g.cls_g)
            }
            Schedule::DesignSplit => {
                let first = g_step_rec_adv(state, config, &batch)?;
                observer.on_generator_update(GeneratorPhase::RecAdv, state, &first);
                let second = g_step_cls(state, config, &batch)?;
                observer.on_generator_update(GeneratorPhase::Cls, state, &second);
                (first.rec, first.adv_g, second.cls_g)
            }
        };
        state.generator_phases += 1;
        state.step += 1;
        let w = config.weights;
        let (rec, adv_g, cls_g) = (rec.unwrap_or(0.0), adv_g.unwrap_or(0.0), cls_g.unwrap_or(0.0));
        let record = LossRecord {
            step: state.step,
            rec,
            cls_g,
            cls_c: dc.cls_c,
            adv_g,
            adv_d: dc.adv_d,
            total_g: w.lambda1 * rec + w.lambda2 * cls_g + adv_g,
            total_dc: dc.total,
        };
        if !record.is_finite() {
            return Err(Error::Diverged {
                what: "logged loss".into(),
                step: state.step,
                detail: alloc::format!("{record:?}"),
            });
        }
        observer.on_step(state, &record);
        Ok(record)
    }

    /// Runs until `state.step == config.total_steps`, emitting logs and
    /// checkpoints on schedule. Returns the records of the steps run.
    pub fn run<T: Scalar>(
        &mut self,
        state: &mut TrainState<T>,
        observer: &mut dyn Observer<T>,
    ) -> Result<Vec<LossRecord>> {
        let config = self.config;
        if state.seed != config.seed {
            return Err(Error::Config(alloc::format!(
                "state was created with seed {}, config has seed {}",
                state.seed,
                config.seed
            )));
        }
        let mut records = Vec::new();
        while state.step < config.total_steps {
            let record = self.step(state, observer)?;
            if config.log_every > 0 && (state.step.is_multiple_of(config.log_every) || state.step == config.total_steps) {
                observer.on_log(&record)?;
            }
            let periodic = config.checkpoint_every > 0 && state.step.is_multiple_of(config.checkpoint_every);
            if periodic || state.step == config.total_steps {
                observer.on_checkpoint(state)?;
            }
            records.push(record);
        }
        Ok(records)
    }
}

/// Trains from a fresh initialisation.
pub fn train<T: Scalar>(
    config: &TrainConfig,
    dataset: &Dataset,
    observer: &mut dyn Observer<T>,
) -> Result<TrainState<T>> {
    let mut state = TrainState::new(config)?;
    Trainer::new(config, dataset)?.run(&mut state, observer)?;
    Ok(state)
}

/// Continues `state` up to `config.total_steps`.
pub fn resume<T: Scalar>(
    mut state: TrainState<T>,
    config: &TrainConfig,
    dataset: &Dataset,
    observer: &mut dyn Observer<T>,
) -> Result<TrainState<T>> {
    Trainer::new(config, dataset)?.run(&mut state, observer)?;
    Ok(state)
}
