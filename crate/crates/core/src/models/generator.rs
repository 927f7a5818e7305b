use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::config::ModelConfig;
use crate::data::AttributeVector;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, ConvTranspose2d, Geometry, Layer, Mode, Sequential, Tape};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

const LEAKY_SLOPE: f64 = 0.2;

/// Encoder feature map for a batch of images.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode<T> {
    pub features: Tensor<T>,
}

/// Encoder `G_enc` and attribute-conditioned decoder `G_dec`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    config: ModelConfig,
    encoder: Sequential,
    decoder: Sequential,
    pub params: ParamStore<T>,
    /// Batch-norm running statistics.
    pub buffers: ParamStore<T>,
}

pub(crate) struct DecodeTape<T> {
    tape: Tape<T>,
    latent_channels: usize,
}

impl<T: Scalar> Generator<T> {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut buffers = ParamStore::new();
        let std = config.init_std;
        let g = Geometry::DOWN2;

        let mut encoder = Sequential::new();
        let mut in_c = 3;
        for i in 0..config.encoder_blocks {
            let out_c = config.base_channels << i;
            let name = format!("enc.{i}");
            encoder.push(Layer::Conv2d(Conv2d::new_unbiased(
                &mut params,
                rng,
                &format!("{name}.conv"),
                in_c,
                out_c,
                g,
                std,
            )));
            encoder.push(Layer::BatchNorm2d(BatchNorm2d::new(
                &mut params,
                &mut buffers,
                &format!("{name}.bn"),
                out_c,
            )));
            encoder.push(Layer::LeakyRelu { slope: LEAKY_SLOPE });
            in_c = out_c;
        }

        let mut decoder = Sequential::new();
        let blocks = config.encoder_blocks;
        let mut in_c = config.latent_layout().0 + config.n_attributes;
        for j in 0..blocks {
            let last = j + 1 == blocks;
            let out_c = if last {
                3
            } else {
                config.base_channels << (blocks - 2 - j)
            };
            let name = format!("dec.{j}");
            let deconv = if last {
                ConvTranspose2d::new
            } else {
                ConvTranspose2d::new_unbiased
            };
            decoder.push(Layer::ConvTranspose2d(deconv(
                &mut params,
                rng,
                &format!("{name}.deconv"),
                in_c,
                out_c,
                g,
                std,
            )));
            if last {
                decoder.push(Layer::Tanh);
            } else {
                decoder.push(Layer::BatchNorm2d(BatchNorm2d::new(
                    &mut params,
                    &mut buffers,
                    &format!("{name}.bn"),
                    out_c,
                )));
                decoder.push(Layer::LeakyRelu { slope: LEAKY_SLOPE });
            }
            in_c = out_c;
        }
        Ok(Self {
            config,
            encoder,
            decoder,
            params,
            buffers,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Input channels of the first decoder layer.
    pub fn decoder_input_channels(&self) -> usize {
        match self.decoder.layers().first() {
            Some(Layer::ConvTranspose2d(c)) => c.in_channels,
            _ => unreachable!("decoder starts with a transposed convolution"),
        }
    }

    pub fn image_shape(&self, n: usize) -> Shape {
        Shape::new(n, 3, self.config.image_size, self.config.image_size)
    }

    fn latent_shape(&self, n: usize) -> Shape {
        let (c, h, w) = self.config.latent_layout();
        Shape::new(n, c, h, w)
    }

    fn check_image(&self, x: &Tensor<T>) -> Result<()> {
        x.expect_shape(self.image_shape(x.shape().n), "generator input")
    }

    pub fn encode(&self, x: &Tensor<T>, mode: Mode) -> Result<LatentCode<T>> {
        self.check_image(x)?;
        Ok(LatentCode {
            features: self.encoder.infer(&self.params, &self.buffers, x.clone(), mode),
        })
    }

    pub fn decode(&self, z: &LatentCode<T>, attrs: &[AttributeVector], mode: Mode) -> Result<Tensor<T>> {
        let input = self.condition(&z.features, attrs)?;
        Ok(self.decoder.infer(&self.params, &self.buffers, input, mode))
    }

    /// `G_dec(G_enc(x), b)`.
    pub fn edit(&self, x: &Tensor<T>, attrs: &[AttributeVector], mode: Mode) -> Result<Tensor<T>> {
        let z = self.encode(x, mode)?;
        self.decode(&z, attrs, mode)
    }

    /// Tiles each attribute vector (as +-1) over the latent plane and
    /// concatenates it after the latent channels.
    fn condition(&self, z: &Tensor<T>, attrs: &[AttributeVector]) -> Result<Tensor<T>> {
        let n = z.shape().n;
        z.expect_shape(self.latent_shape(n), "latent code")?;
        if attrs.len() != n {
            return Err(Error::Shape(format!(
                "{} attribute vectors for {n} latents",
                attrs.len()
            )));
        }
        let na = self.config.n_attributes;
        let (c, h, w) = self.config.latent_layout();
        let plane = h * w;
        let mut out = Tensor::zeros(Shape::new(n, c + na, h, w));
        for (i, a) in attrs.iter().enumerate() {
            if a.len() != na {
                return Err(Error::Arity {
                    expected: na,
                    actual: a.len(),
                });
            }
            let dst = out.item_mut(i);
            dst[..c * plane].copy_from_slice(z.item(i));
            for (k, &bit) in a.bits().iter().enumerate() {
                let v = if bit == 1 { T::one() } else { -T::one() };
                dst[(c + k) * plane..(c + k + 1) * plane]
                    .iter_mut()
                    .for_each(|d| *d = v);
            }
        }
        Ok(out)
    }

    pub(crate) fn encode_taped(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Tape<T>)> {
        self.check_image(x)?;
        Ok(self.encoder.forward(&self.params, &self.buffers, x.clone(), mode))
    }

    pub(crate) fn decode_taped(
        &self,
        z: &Tensor<T>,
        attrs: &[AttributeVector],
        mode: Mode,
    ) -> Result<(Tensor<T>, DecodeTape<T>)> {
        let input = self.condition(z, attrs)?;
        let (out, tape) = self.decoder.forward(&self.params, &self.buffers, input, mode);
        Ok((
            out,
            DecodeTape {
                tape,
                latent_channels: self.config.latent_layout().0,
            },
        ))
    }

    /// Backward through the decoder; returns the gradient w.r.t. the latent
    /// code (the attribute channels are constants).
    pub(crate) fn decode_backward(
        &self,
        tape: &DecodeTape<T>,
        grad_out: Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Tensor<T> {
        let g = self.decoder.backward(&self.params, &tape.tape, grad_out, grads);
        let s = g.shape();
        let c = tape.latent_channels;
        let mut gz = Tensor::zeros(Shape::new(s.n, c, s.h, s.w));
        for i in 0..s.n {
            let len = c * s.plane();
            gz.item_mut(i).copy_from_slice(&g.item(i)[..len]);
        }
        gz
    }

    pub(crate) fn encode_backward(&self, tape: &Tape<T>, grad_out: Tensor<T>, grads: &mut ParamStore<T>) {
        self.encoder.backward(&self.params, tape, grad_out, grads);
    }

    pub(crate) fn update_encoder_stats(&mut self, tape: &Tape<T>) {
        self.encoder.update_running_stats(&mut self.buffers, tape);
    }

    pub(crate) fn update_decoder_stats(&mut self, tape: &DecodeTape<T>) {
        self.decoder.update_running_stats(&mut self.buffers, &tape.tape);
    }

    /// Rebuilds the architecture for `config` and adopts the given arrays.
    pub fn from_parts(config: ModelConfig, params: ParamStore<T>, buffers: ParamStore<T>) -> Result<Self> {
        let mut rng = crate::rng::stream(0, crate::rng::Domain::Init, 0);
        let mut g = Self::new(config, &mut rng)?;
        if !g.params.same_layout(&params) || !g.buffers.same_layout(&buffers) {
            return Err(Error::Shape("generator arrays do not match the model config".into()));
        }
        g.params = params;
        g.buffers = buffers;
        Ok(g)
    }

    pub fn is_finite(&self) -> bool {
        self.params.first_non_finite().is_none() && self.buffers.first_non_finite().is_none()
    }

    pub fn cast<U: Scalar>(&self) -> Generator<U> {
        Generator {
            config: self.config,
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            params: cast_store(&self.params),
            buffers: cast_store(&self.buffers),
        }
    }
}

pub(crate) fn cast_store<T: Scalar, U: Scalar>(store: &ParamStore<T>) -> ParamStore<U> {
    let mut out = ParamStore::new();
    for p in store.iter() {
        out.push(
            p.name.clone(),
            p.shape.clone(),
            p.data.iter().map(|v| U::lift(v.as_f64())).collect::<Vec<_>>(),
        );
    }
    out
}
