//! Layers with hand-written reverse-mode derivatives, composed into
//! [`Sequential`] stacks.

mod conv;
mod linear;
mod norm;

use alloc::format;
use alloc::vec::Vec;

pub use conv::{Conv2d, ConvTranspose2d, Geometry};
pub use linear::Linear;
pub use norm::BatchNorm2d;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Batch-normalisation behaviour for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Normalise with batch statistics.
    Train,
    /// Normalise with running statistics.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    ConvTranspose2d(ConvTranspose2d),
    BatchNorm2d(BatchNorm2d),
    LeakyRelu { slope: f64 },
    Tanh,
    Linear(Linear),
}

pub(crate) enum Cache<T> {
    Conv(conv::ConvCache<T>),
    ConvT(conv::ConvTCache<T>),
    Bn(norm::BnCache<T>),
    Leaky { input: Tensor<T> },
    Tanh { output: Tensor<T> },
    Linear { input: Tensor<T> },
}

/// Forward-pass record needed by the backward pass.
pub struct Tape<T> {
    caches: Vec<Cache<T>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    layers: Vec<Layer>,
}

impl Sequential {
    pub fn new() -> Self {
        Self { layers: Vec::new() }
    }

    pub fn push(&mut self, layer: Layer) {
        self.layers.push(layer);
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn forward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        buffers: &ParamStore<T>,
        x: Tensor<T>,
        mode: Mode,
    ) -> (Tensor<T>, Tape<T>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for layer in &self.layers {
            let (out, cache) = match layer {
                Layer::Conv2d(c) => {
                    let (y, cache) = c.forward(params, &h);
                    (y, Cache::Conv(cache))
                }
                Layer::ConvTranspose2d(c) => {
                    let (y, cache) = c.forward(params, &h);
                    (y, Cache::ConvT(cache))
                }
                Layer::BatchNorm2d(bn) => {
                    let (y, cache) = match mode {
                        Mode::Train => bn.forward_train(params, &h),
                        Mode::Eval => bn.forward_eval(params, buffers, &h),
                    };
                    (y, Cache::Bn(cache))
                }
                Layer::LeakyRelu { slope } => {
                    let s = T::lift(*slope);
                    let y = h.map(|v| if v > T::zero() { v } else { v * s });
                    (y, Cache::Leaky { input: h })
                }
                Layer::Tanh => {
                    let y = h.map(|v| v.tanh());
                    (y.clone(), Cache::Tanh { output: y })
                }
                Layer::Linear(l) => {
                    let y = l.forward(params, &h);
                    (y, Cache::Linear { input: h })
                }
            };
            caches.push(cache);
            h = out;
        }
        (h, Tape { caches })
    }

    /// Forward pass without keeping a tape.
    pub fn infer<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        buffers: &ParamStore<T>,
        x: Tensor<T>,
        mode: Mode,
    ) -> Tensor<T> {
        self.forward(params, buffers, x, mode).0
    }

    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient.
    pub fn backward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        tape: &Tape<T>,
        grad_out: Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Tensor<T> {
        let mut g = grad_out;
        for (layer, cache) in self.layers.iter().zip(&tape.caches).rev() {
            g = match (layer, cache) {
                (Layer::Conv2d(c), Cache::Conv(cache)) => c.backward(params, cache, &g, grads),
                (Layer::ConvTranspose2d(c), Cache::ConvT(cache)) => c.backward(params, cache, &g, grads),
                (Layer::BatchNorm2d(bn), Cache::Bn(cache)) => bn.backward(params, cache, &g, grads),
                (Layer::LeakyRelu { slope }, Cache::Leaky { input }) => leaky_grad(*slope, input, &g),
                (Layer::Tanh, Cache::Tanh { output }) => {
                    let mut out = g;
                    for (d, &y) in out.data_mut().iter_mut().zip(output.data()) {
                        *d = *d * (T::one() - y * y);
                    }
                    out
                }
                (Layer::Linear(l), Cache::Linear { input }) => l.backward(params, input, &g, grads),
                _ => unreachable!("tape does not match layer stack"),
            };
        }
        g
    }

    /// Copy batch statistics recorded in a training-mode tape into the
    /// running-statistics buffers.
    pub fn update_running_stats<T: Scalar>(&self, buffers: &mut ParamStore<T>, tape: &Tape<T>) {
        for (layer, cache) in self.layers.iter().zip(&tape.caches) {
            if let (Layer::BatchNorm2d(bn), Cache::Bn(cache)) = (layer, cache) {
                bn.update_running(buffers, cache);
            }
        }
    }

    /// Input gradient only, also returning the gradient at every layer
    /// output (index `i` is the gradient w.r.t. the output of layer `i`).
    /// Only piecewise-linear stacks (conv, linear, leaky) are supported.
    pub fn backward_recording<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        tape: &Tape<T>,
        grad_out: Tensor<T>,
    ) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let mut recorded = Vec::with_capacity(self.layers.len());
        let mut g = grad_out;
        for (layer, cache) in self.layers.iter().zip(&tape.caches).rev() {
            recorded.push(g.clone());
            g = match (layer, cache) {
                (Layer::Conv2d(c), Cache::Conv(cache)) => c.input_grad(params, cache, &g),
                (Layer::LeakyRelu { slope }, Cache::Leaky { input }) => leaky_grad(*slope, input, &g),
                (Layer::Linear(l), Cache::Linear { input }) => l.input_grad(params, &g, input.shape()),
                (other, _) => {
                    return Err(Error::Config(format!(
                        "double backpropagation is unsupported through {other:?}"
                    )))
                }
            };
        }
        recorded.reverse();
        Ok((g, recorded))
    }

    /// Given `tangent = dP/d(input gradient)` for a scalar `P` of the input
    /// gradient computed by [`Sequential::backward_recording`], accumulate
    /// `dP/dW` into `grads` and return `dP/d(output gradient)`.
    ///
    /// In a piecewise-linear stack the input gradient is
    /// `W_1^T D_1 W_2^T ... u`, so its derivative is obtained by pushing the
    /// tangent forward through the bias-free layers with the recorded
    /// activation masks.
    pub fn propagate_tangent<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        tape: &Tape<T>,
        recorded: &[Tensor<T>],
        tangent: Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Result<Tensor<T>> {
        let mut delta = tangent;
        for ((layer, cache), upstream) in self.layers.iter().zip(&tape.caches).zip(recorded) {
            delta = match (layer, cache) {
                (Layer::Conv2d(c), Cache::Conv(_)) => {
                    c.accumulate_weight_grad(&delta, upstream, grads);
                    c.apply_weight(params, &delta)
                }
                (Layer::LeakyRelu { slope }, Cache::Leaky { input }) => leaky_grad(*slope, input, &delta),
                (Layer::Linear(l), Cache::Linear { .. }) => {
                    let flat = delta.flatten();
                    l.accumulate_weight_grad(&flat, upstream, grads);
                    l.apply_weight(params, &flat)
                }
                (other, _) => {
                    return Err(Error::Config(format!(
                        "double backpropagation is unsupported through {other:?}"
                    )))
                }
            };
        }
        Ok(delta)
    }
}

fn leaky_grad<T: Scalar>(slope: f64, input: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let s = T::lift(slope);
    let mut out = g.clone();
    for (d, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *d = *d * s;
        }
    }
    out
}
