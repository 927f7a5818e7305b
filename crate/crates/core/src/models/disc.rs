use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::config::DiscConfig;
use super::generator::cast_store;
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Geometry, Layer, Linear, Mode, Sequential, Tape};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

const LEAKY_SLOPE: f64 = 0.2;

/// Discriminator `D` and attribute classifier `C` sharing one conv trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscCls<T> {
    config: DiscConfig,
    trunk: Sequential,
    adv_head: Sequential,
    cls_head: Sequential,
    pub params: ParamStore<T>,
}

pub(crate) struct DiscTape<T> {
    trunk: Tape<T>,
    adv: Tape<T>,
    cls: Tape<T>,
    features: Shape,
}

/// Raw outputs of one forward pass.
pub(crate) struct DiscOutput<T> {
    /// `(n, 1)` realness logits.
    pub adv: Tensor<T>,
    /// `(n, n_attributes)` attribute logits.
    pub cls: Tensor<T>,
}

fn head<T: Scalar, R: Rng + ?Sized>(
    params: &mut ParamStore<T>,
    rng: &mut R,
    name: &str,
    features: usize,
    hidden: usize,
    out: usize,
    std: f64,
) -> Sequential {
    let mut s = Sequential::new();
    if hidden == 0 {
        s.push(Layer::Linear(Linear::new(
            params,
            rng,
            &format!("{name}.out"),
            features,
            out,
            std,
        )));
    } else {
        s.push(Layer::Linear(Linear::new(
            params,
            rng,
            &format!("{name}.fc"),
            features,
            hidden,
            std,
        )));
        s.push(Layer::LeakyRelu { slope: LEAKY_SLOPE });
        s.push(Layer::Linear(Linear::new(
            params,
            rng,
            &format!("{name}.out"),
            hidden,
            out,
            std,
        )));
    }
    s
}

impl<T: Scalar> DiscCls<T> {
    pub fn new<R: Rng + ?Sized>(config: DiscConfig, rng: &mut R) -> Result<Self> {
        if config.n_attributes == 0 || (config.blocks > 0 && config.base_channels == 0) {
            return Err(Error::Config("discriminator needs attributes and channels".into()));
        }
        if !config.image_size.is_multiple_of(1 << config.blocks) {
            return Err(Error::Config(format!(
                "image size {} not divisible by 2^{}",
                config.image_size, config.blocks
            )));
        }
        let mut params = ParamStore::new();
        let mut trunk = Sequential::new();
        let mut in_c = 3;
        for i in 0..config.blocks {
            let out_c = config.base_channels << i;
            trunk.push(Layer::Conv2d(Conv2d::new(
                &mut params,
                rng,
                &format!("trunk.{i}.conv"),
                in_c,
                out_c,
                Geometry::DOWN2,
                config.init_std,
            )));
            trunk.push(Layer::LeakyRelu { slope: LEAKY_SLOPE });
            in_c = out_c;
        }
        let f = config.trunk_features();
        let adv_head = head(&mut params, rng, "adv", f, config.head_hidden, 1, config.init_std);
        let cls_head = head(
            &mut params,
            rng,
            "cls",
            f,
            config.head_hidden,
            config.n_attributes,
            config.init_std,
        );
        Ok(Self {
            config,
            trunk,
            adv_head,
            cls_head,
            params,
        })
    }

    pub fn config(&self) -> &DiscConfig {
        &self.config
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        let s = self.config.image_size;
        x.expect_shape(Shape::new(x.shape().n, 3, s, s), "discriminator input")
    }

    pub(crate) fn forward_taped(&self, x: &Tensor<T>) -> Result<(DiscOutput<T>, DiscTape<T>)> {
        self.check(x)?;
        let empty = ParamStore::new();
        let (h, trunk) = self.trunk.forward(&self.params, &empty, x.clone(), Mode::Train);
        let features = h.shape();
        let flat = h.flatten();
        let (adv, adv_tape) = self.adv_head.forward(&self.params, &empty, flat.clone(), Mode::Train);
        let (cls, cls_tape) = self.cls_head.forward(&self.params, &empty, flat, Mode::Train);
        Ok((
            DiscOutput { adv, cls },
            DiscTape {
                trunk,
                adv: adv_tape,
                cls: cls_tape,
                features,
            },
        ))
    }

    /// Realness logit per image.
    pub fn discriminate(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        Ok(self.forward_taped(x)?.0.adv.into_vec())
    }

    /// Attribute logits, `(n, n_attributes)`.
    pub fn classify_logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        let empty = ParamStore::new();
        let h = self.trunk.infer(&self.params, &empty, x.clone(), Mode::Eval).flatten();
        Ok(self.cls_head.infer(&self.params, &empty, h, Mode::Eval))
    }

    /// Attribute probabilities `sigmoid(logits)`, `(n, n_attributes)`.
    pub fn classify(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.classify_logits(x)?.map(sigmoid))
    }

    /// Backward from gradients at both heads; accumulates parameter
    /// gradients and returns the input gradient.
    pub(crate) fn backward(
        &self,
        tape: &DiscTape<T>,
        grad_adv: Option<Tensor<T>>,
        grad_cls: Option<Tensor<T>>,
        grads: &mut ParamStore<T>,
    ) -> Tensor<T> {
        let n = tape.features.n;
        let mut gh = Tensor::zeros(Shape::flat(n, tape.features.item_len()));
        if let Some(g) = grad_adv {
            let part = self.adv_head.backward(&self.params, &tape.adv, g, grads);
            gh.add_assign(&part);
        }
        if let Some(g) = grad_cls {
            let part = self.cls_head.backward(&self.params, &tape.cls, g, grads);
            gh.add_assign(&part);
        }
        let gh = gh.reshape(tape.features).expect("trunk feature shape");
        self.trunk.backward(&self.params, &tape.trunk, gh, grads)
    }

    /// Gradient of `sum_i seeds_i * D(x)_i` w.r.t. `x`, plus the recorded
    /// per-layer gradients needed for double backpropagation.
    pub(crate) fn adv_input_gradient(
        &self,
        tape: &DiscTape<T>,
        seeds: Tensor<T>,
    ) -> Result<(Tensor<T>, PenaltyTape<T>)> {
        let (gh, head_rec) = self.adv_head.backward_recording(&self.params, &tape.adv, seeds)?;
        let gh = gh.reshape(tape.features)?;
        let (gx, trunk_rec) = self.trunk.backward_recording(&self.params, &tape.trunk, gh)?;
        Ok((gx, PenaltyTape { head_rec, trunk_rec }))
    }

    /// Accumulates `dP/dparams` for a scalar `P` of the input gradient, given
    /// `dP/d(input gradient)`.
    pub(crate) fn penalty_backward(
        &self,
        tape: &DiscTape<T>,
        rec: &PenaltyTape<T>,
        tangent: Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Result<()> {
        let delta = self
            .trunk
            .propagate_tangent(&self.params, &tape.trunk, &rec.trunk_rec, tangent, grads)?;
        self.adv_head
            .propagate_tangent(&self.params, &tape.adv, &rec.head_rec, delta.flatten(), grads)?;
        Ok(())
    }

    pub fn from_parts(config: DiscConfig, params: ParamStore<T>) -> Result<Self> {
        let mut rng = crate::rng::stream(0, crate::rng::Domain::Init, 1);
        let mut d = Self::new(config, &mut rng)?;
        if !d.params.same_layout(&params) {
            return Err(Error::Shape(
                "discriminator arrays do not match the model config".into(),
            ));
        }
        d.params = params;
        Ok(d)
    }

    pub fn is_finite(&self) -> bool {
        self.params.first_non_finite().is_none()
    }

    pub fn cast<U: Scalar>(&self) -> DiscCls<U> {
        DiscCls {
            config: self.config,
            trunk: self.trunk.clone(),
            adv_head: self.adv_head.clone(),
            cls_head: self.cls_head.clone(),
            params: cast_store(&self.params),
        }
    }
}

pub(crate) struct PenaltyTape<T> {
    head_rec: Vec<Tensor<T>>,
    trunk_rec: Vec<Tensor<T>>,
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
