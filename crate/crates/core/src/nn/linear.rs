use alloc::format;
use alloc::vec;

use rand::Rng;

use crate::params::{ParamId, ParamStore};
use crate::scalar::{gemm, MatRef, Scalar};
use crate::tensor::{Shape, Tensor};

/// Fully connected layer, weight layout `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_features: usize,
        out_features: usize,
        init_std: f64,
    ) -> Self {
        Self {
            weight: params.push_gaussian(format!("{name}.weight"), vec![out_features, in_features], init_std, rng),
            bias: params.push_filled(format!("{name}.bias"), vec![out_features], T::zero()),
            in_features,
            out_features,
        }
    }

    pub(crate) fn apply_weight<T: Scalar>(&self, params: &ParamStore<T>, x: &Tensor<T>) -> Tensor<T> {
        let n = x.shape().n;
        let mut y = vec![T::zero(); n * self.out_features];
        gemm(
            MatRef::new(x.data(), n, self.in_features),
            MatRef::new(params.get(self.weight), self.out_features, self.in_features).t(),
            T::zero(),
            &mut y,
        );
        Tensor::from_vec(Shape::flat(n, self.out_features), y).expect("linear shape")
    }

    pub(crate) fn forward<T: Scalar>(&self, params: &ParamStore<T>, x: &Tensor<T>) -> Tensor<T> {
        let mut y = self.apply_weight(params, x);
        let bias = params.get(self.bias);
        for row in y.data_mut().chunks_mut(self.out_features) {
            for (v, &b) in row.iter_mut().zip(bias) {
                *v = *v + b;
            }
        }
        y
    }

    pub(crate) fn accumulate_weight_grad<T: Scalar>(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut ParamStore<T>,
    ) {
        let n = grad_out.shape().n;
        gemm(
            MatRef::new(grad_out.data(), n, self.out_features).t(),
            MatRef::new(input.data(), n, self.in_features),
            T::one(),
            grads.get_mut(self.weight),
        );
    }

    pub(crate) fn input_grad<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        grad_out: &Tensor<T>,
        in_shape: Shape,
    ) -> Tensor<T> {
        let n = grad_out.shape().n;
        let mut gx = vec![T::zero(); n * self.in_features];
        gemm(
            MatRef::new(grad_out.data(), n, self.out_features),
            MatRef::new(params.get(self.weight), self.out_features, self.in_features),
            T::zero(),
            &mut gx,
        );
        Tensor::from_vec(in_shape, gx).expect("linear input grad shape")
    }

    pub(crate) fn backward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Tensor<T> {
        self.accumulate_weight_grad(input, grad_out, grads);
        let gb = grads.get_mut(self.bias);
        for row in grad_out.data().chunks(self.out_features) {
            for (g, &v) in gb.iter_mut().zip(row) {
                *g = *g + v;
            }
        }
        self.input_grad(params, grad_out, input.shape())
    }
}
