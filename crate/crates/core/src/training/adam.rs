use alloc::format;

use num_traits::Float;

use super::config::AdamHyper;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;

/// First/second moment estimates and the update counter of one optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments<T> {
    pub first: ParamStore<T>,
    pub second: ParamStore<T>,
    pub steps: u64,
}

impl<T: Scalar> AdamMoments<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        Self {
            first: params.zeros_like(),
            second: params.zeros_like(),
            steps: 0,
        }
    }
}

/// One bias-corrected Adam step:
/// `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_update<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &ParamStore<T>,
    moments: &mut AdamMoments<T>,
    hyper: &AdamHyper,
) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&moments.first) {
        return Err(Error::Shape("optimizer arrays do not match parameters".into()));
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::Diverged {
            what: "gradient".into(),
            step: moments.steps,
            detail: format!("array `{name}`"),
        });
    }
    moments.steps += 1;
    let t = moments.steps as i32;
    let bc1 = T::lift(1.0 - Float::powi(hyper.beta1, t));
    let bc2 = T::lift(1.0 - Float::powi(hyper.beta2, t));
    let b1 = T::lift(hyper.beta1);
    let b2 = T::lift(hyper.beta2);
    let lr = T::lift(hyper.learning_rate);
    let eps = T::lift(hyper.eps);
    let one = T::one();
    let stores = params
        .iter_mut()
        .zip(grads.iter())
        .zip(moments.first.iter_mut().zip(moments.second.iter_mut()));
    for ((p, g), (m, v)) in stores {
        for (((pv, &gv), mv), vv) in p
            .data
            .iter_mut()
            .zip(&g.data)
            .zip(m.data.iter_mut())
            .zip(v.data.iter_mut())
        {
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn hyper() -> AdamHyper {
        AdamHyper {
            learning_rate: 0.0002,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.push("p", vec![1], vec![v]);
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar_store(0.3);
        let g = scalar_store(0.0);
        let mut m = AdamMoments::new(&p);
        adam_update(&mut p, &g, &mut m, &hyper()).unwrap();
        assert_eq!(p.get(crate::params::ParamId(0)), &[0.3]);
    }

    #[test]
    fn first_step_matches_closed_form() {
        let mut p = scalar_store(1.0);
        let g = scalar_store(1.0);
        let mut m = AdamMoments::new(&p);
        adam_update(&mut p, &g, &mut m, &hyper()).unwrap();
        let expected = 1.0 - 0.0002 / (1.0 + 1e-8);
        assert!((p.get(crate::params::ParamId(0))[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn identical_calls_give_identical_outputs() {
        let run = || {
            let mut p = scalar_store(0.7);
            let g = scalar_store(-0.25);
            let mut m = AdamMoments::new(&p);
            adam_update(&mut p, &g, &mut m, &hyper()).unwrap();
            adam_update(&mut p, &g, &mut m, &hyper()).unwrap();
            (p, m)
        };
        let (p1, m1) = run();
        let (p2, m2) = run();
        assert!(p1.bitwise_eq(&p2));
        assert_eq!(m1, m2);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = scalar_store(1.0);
        let g = scalar_store(f64::NAN);
        let mut m = AdamMoments::new(&p);
        assert!(matches!(
            adam_update(&mut p, &g, &mut m, &hyper()),
            Err(Error::Diverged { .. })
        ));
        assert_eq!(m.steps, 0);
    }
}
