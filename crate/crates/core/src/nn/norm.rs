use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-channel batch normalisation. Affine parameters live in the trainable
/// store; running statistics live in the buffer store.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
}

pub(crate) enum BnCache<T> {
    Train {
        xhat: Vec<T>,
        inv_std: Vec<T>,
        mean: Vec<T>,
        unbiased_var: Vec<T>,
    },
    Eval {
        scale: Vec<T>,
    },
}

impl BatchNorm2d {
    pub fn new<T: Scalar>(
        params: &mut ParamStore<T>,
        buffers: &mut ParamStore<T>,
        name: &str,
        channels: usize,
    ) -> Self {
        Self {
            gamma: params.push_filled(format!("{name}.gamma"), vec![channels], T::one()),
            beta: params.push_filled(format!("{name}.beta"), vec![channels], T::zero()),
            running_mean: buffers.push_filled(format!("{name}.running_mean"), vec![channels], T::zero()),
            running_var: buffers.push_filled(format!("{name}.running_var"), vec![channels], T::one()),
            channels,
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub(crate) fn forward_train<T: Scalar>(&self, params: &ParamStore<T>, x: &Tensor<T>) -> (Tensor<T>, BnCache<T>) {
        let s = x.shape();
        let (p, c) = (s.plane(), s.c);
        let count = (s.n * p) as f64;
        let gamma = params.get(self.gamma);
        let beta = params.get(self.beta);
        let data = x.data();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ni in 0..s.n {
            for ci in 0..c {
                let sum: T = data[(ni * c + ci) * p..(ni * c + ci + 1) * p].iter().copied().sum();
                mean[ci] = mean[ci] + sum;
            }
        }
        let inv_count = T::lift(1.0 / count);
        mean.iter_mut().for_each(|m| *m = *m * inv_count);
        for ni in 0..s.n {
            for ci in 0..c {
                let m = mean[ci];
                let sum: T = data[(ni * c + ci) * p..(ni * c + ci + 1) * p]
                    .iter()
                    .map(|&v| (v - m) * (v - m))
                    .sum();
                var[ci] = var[ci] + sum;
            }
        }
        var.iter_mut().for_each(|v| *v = *v * inv_count);
        let eps = T::lift(self.eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); data.len()];
        let mut y = vec![T::zero(); data.len()];
        for ni in 0..s.n {
            for ci in 0..c {
                let range = (ni * c + ci) * p..(ni * c + ci + 1) * p;
                for i in range {
                    let h = (data[i] - mean[ci]) * inv_std[ci];
                    xhat[i] = h;
                    y[i] = gamma[ci] * h + beta[ci];
                }
            }
        }
        let correction = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        let unbiased_var = var.iter().map(|&v| v * T::lift(correction)).collect();
        (
            Tensor::from_vec(s, y).expect("bn shape"),
            BnCache::Train {
                xhat,
                inv_std,
                mean,
                unbiased_var,
            },
        )
    }

    pub(crate) fn forward_eval<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        buffers: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> (Tensor<T>, BnCache<T>) {
        let s = x.shape();
        let (p, c) = (s.plane(), s.c);
        let gamma = params.get(self.gamma);
        let beta = params.get(self.beta);
        let rm = buffers.get(self.running_mean);
        let rv = buffers.get(self.running_var);
        let eps = T::lift(self.eps);
        let scale: Vec<T> = (0..c).map(|ci| gamma[ci] / (rv[ci] + eps).sqrt()).collect();
        let mut y = x.data().to_vec();
        for ni in 0..s.n {
            for ci in 0..c {
                for v in &mut y[(ni * c + ci) * p..(ni * c + ci + 1) * p] {
                    *v = (*v - rm[ci]) * scale[ci] + beta[ci];
                }
            }
        }
        (Tensor::from_vec(s, y).expect("bn shape"), BnCache::Eval { scale })
    }

    pub(crate) fn backward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        cache: &BnCache<T>,
        grad_out: &Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Tensor<T> {
        let s = grad_out.shape();
        let (p, c) = (s.plane(), s.c);
        let gy = grad_out.data();
        let mut gx = vec![T::zero(); gy.len()];
        match cache {
            BnCache::Train { xhat, inv_std, .. } => {
                let gamma = params.get(self.gamma);
                let mut sum_dy = vec![T::zero(); c];
                let mut sum_dy_xhat = vec![T::zero(); c];
                for ni in 0..s.n {
                    for ci in 0..c {
                        let r = (ni * c + ci) * p..(ni * c + ci + 1) * p;
                        let (a, b) = gy[r.clone()]
                            .iter()
                            .zip(&xhat[r])
                            .fold((T::zero(), T::zero()), |(a, b), (&g, &h)| (a + g, b + g * h));
                        sum_dy[ci] = sum_dy[ci] + a;
                        sum_dy_xhat[ci] = sum_dy_xhat[ci] + b;
                    }
                }
                let m = T::lift((s.n * p) as f64);
                for ni in 0..s.n {
                    for ci in 0..c {
                        let k = gamma[ci] * inv_std[ci] / m;
                        for i in (ni * c + ci) * p..(ni * c + ci + 1) * p {
                            gx[i] = k * (m * gy[i] - sum_dy[ci] - xhat[i] * sum_dy_xhat[ci]);
                        }
                    }
                }
                let gg = grads.get_mut(self.gamma);
                for ci in 0..c {
                    gg[ci] = gg[ci] + sum_dy_xhat[ci];
                }
                let gb = grads.get_mut(self.beta);
                for ci in 0..c {
                    gb[ci] = gb[ci] + sum_dy[ci];
                }
            }
            BnCache::Eval { scale } => {
                // Running statistics are constants here; only the input
                // gradient is propagated.
                for ni in 0..s.n {
                    for ci in 0..c {
                        for i in (ni * c + ci) * p..(ni * c + ci + 1) * p {
                            gx[i] = gy[i] * scale[ci];
                        }
                    }
                }
            }
        }
        Tensor::from_vec(s, gx).expect("bn grad shape")
    }

    pub(crate) fn update_running<T: Scalar>(&self, buffers: &mut ParamStore<T>, cache: &BnCache<T>) {
        if let BnCache::Train { mean, unbiased_var, .. } = cache {
            let m = T::lift(self.momentum);
            let keep = T::one() - m;
            let rm = buffers.get_mut(self.running_mean);
            for (r, &b) in rm.iter_mut().zip(mean) {
                *r = keep * *r + m * b;
            }
            let rv = buffers.get_mut(self.running_var);
            for (r, &b) in rv.iter_mut().zip(unbiased_var) {
                *r = keep * *r + m * b;
            }
        }
    }
}
