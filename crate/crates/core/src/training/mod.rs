//! Optimisation: Adam, the discriminator/classifier and generator steps, and
//! the outer training loop for both schedules.

mod adam;
mod config;
mod run;
mod state;
mod steps;

pub use adam::{adam_update, AdamMoments};
pub use config::{AdamHyper, Schedule, TrainConfig};
pub use run::{resume, train, GeneratorPhase, LossRecord, Observer, Silent, Trainer};
pub use state::TrainState;
pub use steps::{
    dc_step, disc_cls_gradients, g_step_cls, g_step_joint, g_step_rec_adv, g_step_split, generate_fakes,
    generator_gradients, DcReport, GReport, GeneratorObjective, GeneratorPass, StepBatch,
};
