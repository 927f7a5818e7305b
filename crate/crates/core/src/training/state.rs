use super::adam::AdamMoments;
use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::models::{DiscCls, Generator};
use crate::rng::{stream, Domain};
use crate::scalar::Scalar;

/// Everything needed to continue a run bit-for-bit. Random draws are derived
/// from `(seed, step)` and `(seed, dc_updates)`, so no generator state is
/// stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    /// Completed outer steps.
    pub step: u64,
    /// Completed discriminator/classifier updates.
    pub dc_updates: u64,
    /// Completed generator phases.
    pub generator_phases: u64,
    pub seed: u64,
    pub generator: Generator<T>,
    pub disc: DiscCls<T>,
    pub opt_dc: AdamMoments<T>,
    pub opt_g: AdamMoments<T>,
    /// Moments of the separate classification update of the split schedule.
    pub opt_g_cls: AdamMoments<T>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = Generator::new(config.model, &mut stream(config.seed, Domain::Init, 0))?;
        let disc = DiscCls::new(config.model.disc(), &mut stream(config.seed, Domain::Init, 1))?;
        Ok(Self {
            step: 0,
            dc_updates: 0,
            generator_phases: 0,
            seed: config.seed,
            opt_dc: AdamMoments::new(&disc.params),
            opt_g: AdamMoments::new(&generator.params),
            opt_g_cls: AdamMoments::new(&generator.params),
            generator,
            disc,
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        let bad = self
            .generator
            .params
            .first_non_finite()
            .or_else(|| self.generator.buffers.first_non_finite())
            .or_else(|| self.disc.params.first_non_finite());
        match bad {
            Some(name) => Err(Error::Diverged {
                what: "parameter".into(),
                step: self.step,
                detail: alloc::format!("array `{name}`"),
            }),
            None => Ok(()),
        }
    }

    /// Bitwise equality of all arrays and counters.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        let g = &self.generator;
        let og = &other.generator;
        self.step == other.step
            && self.dc_updates == other.dc_updates
            && self.generator_phases == other.generator_phases
            && self.seed == other.seed
            && g.params.bitwise_eq(&og.params)
            && g.buffers.bitwise_eq(&og.buffers)
            && self.disc.params.bitwise_eq(&other.disc.params)
            && moments_eq(&self.opt_dc, &other.opt_dc)
            && moments_eq(&self.opt_g, &other.opt_g)
            && moments_eq(&self.opt_g_cls, &other.opt_g_cls)
    }
}

fn moments_eq<T: Scalar>(a: &AdamMoments<T>, b: &AdamMoments<T>) -> bool {
    a.steps == b.steps && a.first.bitwise_eq(&b.first) && a.second.bitwise_eq(&b.second)
}
