//! Single optimisation steps and the objective/gradient evaluations behind
//! them.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::adam::adam_update;
use super::config::TrainConfig;
use super::state::TrainState;
use crate::data::AttributeVector;
use crate::error::{Error, Result};
use crate::losses::{
    adv_d_with_grad, adv_g_with_grad, attribute_bce_with_grad, reconstruction_grad, reconstruction_loss,
    AdversarialLoss,
};
use crate::models::{DiscCls, Generator};
use crate::nn::Mode;
use crate::params::ParamStore;
use crate::rng::{stream, Domain};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Images `x`, their attributes `a` and the sampled targets `b`.
#[derive(Debug, Clone)]
pub struct StepBatch<T> {
    pub x: Tensor<T>,
    pub a: Vec<AttributeVector>,
    pub b: Vec<AttributeVector>,
}

impl<T: Scalar> StepBatch<T> {
    pub fn validate(&self) -> Result<()> {
        let n = self.x.shape().n;
        if n == 0 || self.a.len() != n || self.b.len() != n {
            return Err(Error::Shape(format!(
                "batch of {n} images with {} sources and {} targets",
                self.a.len(),
                self.b.len()
            )));
        }
        Ok(())
    }
}

/// Terms computed by one discriminator/classifier update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DcReport {
    pub cls_c: f64,
    /// Includes the gradient penalty when enabled.
    pub adv_d: f64,
    pub total: f64,
}

/// Terms computed during a generator phase; absent terms are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GReport {
    pub rec: Option<f64>,
    pub cls_g: Option<f64>,
    pub adv_g: Option<f64>,
    pub total: f64,
}

/// Which generator objective to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorObjective {
    /// `lambda1 * rec + lambda2 * cls_g + adv_g`.
    Joint,
    /// `lambda1 * rec + adv_g`.
    RecAdv,
    /// `lambda2 * cls_g`.
    Cls,
    /// `rec`.
    Rec,
    /// `adv_g`.
    Adv,
}

impl GeneratorObjective {
    /// `(rec, cls, adv)` weights; `None` leaves the term out entirely.
    fn weights(self, config: &TrainConfig) -> (Option<f64>, Option<f64>, Option<f64>) {
        let w = config.weights;
        match self {
            Self::Joint => (Some(w.lambda1), Some(w.lambda2), Some(1.0)),
            Self::RecAdv => (Some(w.lambda1), None, Some(1.0)),
            Self::Cls => (None, Some(w.lambda2), None),
            Self::Rec => (Some(1.0), None, None),
            Self::Adv => (None, None, Some(1.0)),
        }
    }
}

/// Training-mode tapes whose batch statistics may be committed afterwards.
pub struct GeneratorPass<T> {
    pub value: f64,
    pub grads: ParamStore<T>,
    pub report: GReport,
    encoder_tape: crate::nn::Tape<T>,
    decoder_tapes: Vec<crate::models::DecodeTape<T>>,
}

impl<T: Scalar> GeneratorPass<T> {
    fn commit_stats(self, generator: &mut Generator<T>) -> (ParamStore<T>, GReport) {
        generator.update_encoder_stats(&self.encoder_tape);
        for t in &self.decoder_tapes {
            generator.update_decoder_stats(t);
        }
        (self.grads, self.report)
    }
}

fn finite(value: f64, what: &str, step: u64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            what: what.into(),
            step,
            detail: format!("value {value}"),
        })
    }
}

/// Value and parameter gradient of a generator objective. The
/// discriminator/classifier is treated as fixed. Nothing is mutated.
pub fn generator_gradients<T: Scalar>(
    generator: &Generator<T>,
    disc: &DiscCls<T>,
    config: &TrainConfig,
    batch: &StepBatch<T>,
    objective: GeneratorObjective,
) -> Result<GeneratorPass<T>> {
    batch.validate()?;
    let (w_rec, w_cls, w_adv) = objective.weights(config);
    let mut grads = generator.params.zeros_like();
    let mut report = GReport::default();
    let (z, encoder_tape) = generator.encode_taped(&batch.x, Mode::Train)?;
    let mut decoder_tapes = Vec::new();

    let mut grad_z = Tensor::zeros(z.shape());
    if let Some(w) = w_rec {
        let (x_rec, tape) = generator.decode_taped(&z, &batch.a, Mode::Train)?;
        let rec = reconstruction_loss(&batch.x, &x_rec)?;
        report.rec = Some(rec.as_f64());
        report.total += w * rec.as_f64();
        let g = reconstruction_grad(&batch.x, &x_rec, T::lift(w));
        grad_z.add_assign(&generator.decode_backward(&tape, g, &mut grads));
        decoder_tapes.push(tape);
    }
    if w_cls.is_some() || w_adv.is_some() {
        let (x_edit, tape) = generator.decode_taped(&z, &batch.b, Mode::Train)?;
        let (out, disc_tape) = disc.forward_taped(&x_edit)?;
        let grad_adv = match w_adv {
            Some(w) => {
                let (v, g) = adv_g_with_grad(config.adversarial, out.adv.data(), T::lift(w))?;
                report.adv_g = Some(v.as_f64());
                report.total += w * v.as_f64();
                Some(Tensor::from_vec(out.adv.shape(), g)?)
            }
            None => None,
        };
        let grad_cls = match w_cls {
            Some(w) => {
                let (v, g) = attribute_bce_with_grad(&out.cls, &batch.b, T::lift(w))?;
                report.cls_g = Some(v.as_f64());
                report.total += w * v.as_f64();
                Some(g)
            }
            None => None,
        };
        let mut scratch = disc.params.zeros_like();
        let g_edit = disc.backward(&disc_tape, grad_adv, grad_cls, &mut scratch);
        grad_z.add_assign(&generator.decode_backward(&tape, g_edit, &mut grads));
        decoder_tapes.push(tape);
    }
    generator.encode_backward(&encoder_tape, grad_z, &mut grads);
    Ok(GeneratorPass {
        value: report.total,
        grads,
        report,
        encoder_tape,
        decoder_tapes,
    })
}

/// Value and parameter gradient of `lambda3 * cls_c + adv_d` (plus the
/// gradient penalty when configured) for fixed fakes.
pub fn disc_cls_gradients<T: Scalar>(
    disc: &DiscCls<T>,
    config: &TrainConfig,
    x: &Tensor<T>,
    a: &[AttributeVector],
    fakes: &Tensor<T>,
    penalty_index: u64,
    seed: u64,
) -> Result<(f64, ParamStore<T>, DcReport)> {
    let mut grads = disc.params.zeros_like();
    let (real, real_tape) = disc.forward_taped(x)?;
    let (fake, fake_tape) = disc.forward_taped(fakes)?;
    let (adv_v, g_real, g_fake) = adv_d_with_grad(config.adversarial, real.adv.data(), fake.adv.data(), T::one())?;
    let (cls_v, g_cls) = attribute_bce_with_grad(&real.cls, a, T::lift(config.weights.lambda3))?;
    disc.backward(
        &real_tape,
        Some(Tensor::from_vec(real.adv.shape(), g_real)?),
        Some(g_cls),
        &mut grads,
    );
    disc.backward(
        &fake_tape,
        Some(Tensor::from_vec(fake.adv.shape(), g_fake)?),
        None,
        &mut grads,
    );
    let mut adv_d = adv_v.as_f64();
    if let AdversarialLoss::WassersteinGp { penalty_weight } = config.adversarial {
        adv_d += gradient_penalty(
            disc,
            x,
            fakes,
            penalty_weight,
            stream(seed, Domain::Penalty, penalty_index),
            &mut grads,
        )?;
    }
    let cls_c = cls_v.as_f64();
    let total = config.weights.lambda3 * cls_c + adv_d;
    Ok((total, grads, DcReport { cls_c, adv_d, total }))
}

/// `weight * mean_i (|grad_x D(x_hat_i)| - 1)^2` on random interpolates
/// between real and fake images, accumulating its parameter gradient.
fn gradient_penalty<T: Scalar, R: Rng>(
    disc: &DiscCls<T>,
    x: &Tensor<T>,
    fakes: &Tensor<T>,
    weight: f64,
    mut rng: R,
    grads: &mut ParamStore<T>,
) -> Result<f64> {
    let s = x.shape();
    let mut mixed = x.clone();
    for i in 0..s.n {
        let eps = T::lift(rng.random::<f64>());
        for (m, &f) in mixed.item_mut(i).iter_mut().zip(fakes.item(i)) {
            *m = eps * *m + (T::one() - eps) * f;
        }
    }
    let (_, tape) = disc.forward_taped(&mixed)?;
    let seeds = Tensor::full(Shape::flat(s.n, 1), T::one());
    let (gx, rec) = disc.adv_input_gradient(&tape, seeds)?;
    let mut tangent = Tensor::zeros(s);
    let mut penalty = 0.0;
    let k = T::lift(2.0 * weight / s.n as f64);
    for i in 0..s.n {
        let g = gx.item(i);
        let norm = g.iter().map(|&v| v * v).sum::<T>().sqrt();
        let gap = norm - T::one();
        penalty += weight * (gap * gap).as_f64() / s.n as f64;
        // guard the direction at a zero gradient
        let scale = if norm > T::zero() { k * gap / norm } else { T::zero() };
        for (t, &v) in tangent.item_mut(i).iter_mut().zip(g) {
            *t = scale * v;
        }
    }
    disc.penalty_backward(&tape, &rec, tangent, grads)?;
    Ok(penalty)
}

/// Fakes `G_dec(G_enc(x), b)` with batch statistics, without touching the
/// generator's running statistics.
pub fn generate_fakes<T: Scalar>(generator: &Generator<T>, batch: &StepBatch<T>) -> Result<Tensor<T>> {
    generator.edit(&batch.x, &batch.b, Mode::Train)
}

/// One Adam update of the discriminator/classifier on
/// `lambda3 * cls_c + adv_d`. Generator arrays are untouched.
pub fn dc_step<T: Scalar>(state: &mut TrainState<T>, config: &TrainConfig, batch: &StepBatch<T>) -> Result<DcReport> {
    batch.validate()?;
    let fakes = generate_fakes(&state.generator, batch)?;
    dc_step_with_fakes(state, config, batch, &fakes)
}

pub(crate) fn dc_step_with_fakes<T: Scalar>(
    state: &mut TrainState<T>,
    config: &TrainConfig,
    batch: &StepBatch<T>,
    fakes: &Tensor<T>,
) -> Result<DcReport> {
    let (value, grads, report) = disc_cls_gradients(
        &state.disc,
        config,
        &batch.x,
        &batch.a,
        fakes,
        state.dc_updates,
        state.seed,
    )?;
    finite(value, "discriminator/classifier loss", state.step)?;
    adam_update(&mut state.disc.params, &grads, &mut state.opt_dc, &config.adam())?;
    state.dc_updates += 1;
    if let Some(name) = state.disc.params.first_non_finite() {
        return Err(Error::Diverged {
            what: "discriminator parameter".into(),
            step: state.step,
            detail: format!("array `{name}`"),
        });
    }
    Ok(report)
}

fn generator_update<T: Scalar>(
    state: &mut TrainState<T>,
    config: &TrainConfig,
    batch: &StepBatch<T>,
    objective: GeneratorObjective,
    commit_stats: bool,
    use_cls_optimizer: bool,
) -> Result<GReport> {
    let pass = generator_gradients(&state.generator, &state.disc, config, batch, objective)?;
    finite(pass.value, "generator loss", state.step)?;
    let (grads, report) = if commit_stats {
        pass.commit_stats(&mut state.generator)
    } else {
        (pass.grads, pass.report)
    };
    let moments = if use_cls_optimizer {
        &mut state.opt_g_cls
    } else {
        &mut state.opt_g
    };
    adam_update(&mut state.generator.params, &grads, moments, &config.adam())?;
    if !state.generator.is_finite() {
        return Err(Error::Diverged {
            what: "generator parameter".into(),
            step: state.step,
            detail: format!("{:?}", state.generator.params.first_non_finite()),
        });
    }
    Ok(report)
}

/// One Adam update of the generator on the joint objective.
pub fn g_step_joint<T: Scalar>(
    state: &mut TrainState<T>,
    config: &TrainConfig,
    batch: &StepBatch<T>,
) -> Result<GReport> {
    generator_update(state, config, batch, GeneratorObjective::Joint, true, false)
}

/// First half of the split schedule: `lambda1 * rec + adv_g`.
pub fn g_step_rec_adv<T: Scalar>(
    state: &mut TrainState<T>,
    config: &TrainConfig,
    batch: &StepBatch<T>,
) -> Result<GReport> {
    generator_update(state, config, batch, GeneratorObjective::RecAdv, true, false)
}

/// Second half of the split schedule: `lambda2 * cls_g`, with its gradient
/// taken at the current (already updated) parameters. Running statistics are
/// left to the first half.
pub fn g_step_cls<T: Scalar>(state: &mut TrainState<T>, config: &TrainConfig, batch: &StepBatch<T>) -> Result<GReport> {
    let separate = !config.shared_cls_optimizer;
    generator_update(state, config, batch, GeneratorObjective::Cls, false, separate)
}

/// Both halves of the split schedule in order.
pub fn g_step_split<T: Scalar>(
    state: &mut TrainState<T>,
    config: &TrainConfig,
    batch: &StepBatch<T>,
) -> Result<(GReport, GReport)> {
    let first = g_step_rec_adv(state, config, batch)?;
    let second = g_step_cls(state, config, batch)?;
    Ok((first, second))
}
