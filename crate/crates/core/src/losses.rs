//! Scalar objectives as pure functions of network outputs, each paired with
//! the gradient the training steps backpropagate.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::AttributeVector;
use crate::error::{Error, Result};
use crate::models::{sigmoid, DiscCls};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probability clamp applied inside the binary cross entropy.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Reconstruction weight.
    pub lambda1: f64,
    /// Generator attribute-classification weight.
    pub lambda2: f64,
    /// Classifier weight on real images.
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 100.0,
            lambda2: 10.0,
            lambda3: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda1, self.lambda2, self.lambda3]
            .iter()
            .any(|l| !(*l >= 0.0) || !l.is_finite())
        {
            return Err(Error::Config(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// The loss terms of one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rec: f64,
    pub cls_g: f64,
    pub cls_c: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub total_g: f64,
    pub total_dc: f64,
}

impl LossReport {
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

/// Adversarial objective family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AdversarialLoss {
    /// Logistic loss; non-saturating for the generator.
    #[default]
    Vanilla,
    /// Critic difference plus a gradient penalty on interpolates.
    WassersteinGp { penalty_weight: f64 },
}

/// Mean absolute difference over every element.
pub fn reconstruction_loss<T: Scalar>(x: &Tensor<T>, x_rec: &Tensor<T>) -> Result<T> {
    if x.shape() != x_rec.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", x.shape(), x_rec.shape())));
    }
    let sum: T = x.data().iter().zip(x_rec.data()).map(|(&a, &b)| (a - b).abs()).sum();
    Ok(sum / T::lift(x.data().len() as f64))
}

/// d rec / d x_rec.
pub(crate) fn reconstruction_grad<T: Scalar>(x: &Tensor<T>, x_rec: &Tensor<T>, scale: T) -> Tensor<T> {
    let k = scale / T::lift(x.data().len() as f64);
    let mut g = Tensor::zeros(x.shape());
    for ((d, &a), &b) in g.data_mut().iter_mut().zip(x.data()).zip(x_rec.data()) {
        *d = if b > a {
            k
        } else if b < a {
            -k
        } else {
            T::zero()
        };
    }
    g
}

fn check_targets<T: Scalar>(probs: &Tensor<T>, targets: &[AttributeVector]) -> Result<usize> {
    let s = probs.shape();
    let n_attr = s.item_len();
    if targets.len() != s.n {
        return Err(Error::Shape(format!(
            "{} target vectors for {} predictions",
            targets.len(),
            s.n
        )));
    }
    for t in targets {
        if t.len() != n_attr {
            return Err(Error::Arity {
                expected: n_attr,
                actual: t.len(),
            });
        }
    }
    Ok(n_attr)
}

/// Binary cross entropy summed over attributes and averaged over the batch.
/// `probs` is `(n, n_attributes)`.
pub fn attribute_bce<T: Scalar>(probs: &Tensor<T>, targets: &[AttributeVector]) -> Result<T> {
    let n_attr = check_targets(probs, targets)?;
    let eps = T::lift(BCE_EPS);
    let hi = T::one() - eps;
    let mut total = T::zero();
    for (row, t) in probs.data().chunks(n_attr).zip(targets) {
        let per_image: T = row
            .iter()
            .zip(t.bits())
            .map(|(&p, &b)| {
                let p = p.max(eps).min(hi);
                if b == 1 {
                    -p.ln()
                } else {
                    -(T::one() - p).ln()
                }
            })
            .sum();
        total = total + per_image;
    }
    Ok(total / T::lift(targets.len() as f64))
}

/// BCE from logits, with `scale * d bce / d logits`.
pub(crate) fn attribute_bce_with_grad<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[AttributeVector],
    scale: T,
) -> Result<(T, Tensor<T>)> {
    let probs = logits.map(sigmoid);
    let value = attribute_bce(&probs, targets)?;
    let n_attr = probs.shape().item_len();
    let eps = T::lift(BCE_EPS);
    let hi = T::one() - eps;
    let k = scale / T::lift(targets.len() as f64);
    let mut grad = Tensor::zeros(logits.shape());
    for ((g_row, p_row), t) in grad
        .data_mut()
        .chunks_mut(n_attr)
        .zip(probs.data().chunks(n_attr))
        .zip(targets)
    {
        for ((g, &p), &b) in g_row.iter_mut().zip(p_row).zip(t.bits()) {
            // the clamp is flat outside (eps, 1 - eps)
            *g = if p > eps && p < hi {
                k * (p - T::lift(b as f64))
            } else {
                T::zero()
            };
        }
    }
    Ok((value, grad))
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn check_pair<T>(d_real: &[T], d_fake: &[T]) -> Result<()> {
    if d_real.len() != d_fake.len() || d_real.is_empty() {
        return Err(Error::Shape(format!(
            "adversarial batches of {} real and {} fake scores",
            d_real.len(),
            d_fake.len()
        )));
    }
    Ok(())
}

fn mean<T: Scalar>(values: impl Iterator<Item = T>, n: usize) -> T {
    values.sum::<T>() / T::lift(n as f64)
}

/// `(adv_d, adv_g)` from realness logits:
/// `adv_d = mean softplus(-d_real) + mean softplus(d_fake)`,
/// `adv_g = mean softplus(-d_fake)`.
pub fn adversarial_losses<T: Scalar>(d_real: &[T], d_fake: &[T]) -> Result<(T, T)> {
    check_pair(d_real, d_fake)?;
    let n = d_real.len();
    let adv_d = mean(d_real.iter().map(|&d| softplus(-d)), n) + mean(d_fake.iter().map(|&d| softplus(d)), n);
    let adv_g = mean(d_fake.iter().map(|&d| softplus(-d)), n);
    Ok((adv_d, adv_g))
}

/// Wasserstein critic terms `(adv_d, adv_g)` without the penalty:
/// `adv_d = mean d_fake - mean d_real`, `adv_g = -mean d_fake`.
pub fn wasserstein_losses<T: Scalar>(d_real: &[T], d_fake: &[T]) -> Result<(T, T)> {
    check_pair(d_real, d_fake)?;
    let n = d_real.len();
    let real = mean(d_real.iter().copied(), n);
    let fake = mean(d_fake.iter().copied(), n);
    Ok((fake - real, -fake))
}

/// Discriminator-side adversarial value and `scale`-weighted logit gradients
/// `(value, d/d d_real, d/d d_fake)`.
pub(crate) fn adv_d_with_grad<T: Scalar>(
    kind: AdversarialLoss,
    d_real: &[T],
    d_fake: &[T],
    scale: T,
) -> Result<(T, Vec<T>, Vec<T>)> {
    let k = scale / T::lift(d_real.len() as f64);
    match kind {
        AdversarialLoss::Vanilla => {
            let (v, _) = adversarial_losses(d_real, d_fake)?;
            let gr = d_real.iter().map(|&d| -k * sigmoid(-d)).collect();
            let gf = d_fake.iter().map(|&d| k * sigmoid(d)).collect();
            Ok((v, gr, gf))
        }
        AdversarialLoss::WassersteinGp { .. } => {
            let (v, _) = wasserstein_losses(d_real, d_fake)?;
            Ok((v, alloc::vec![-k; d_real.len()], alloc::vec![k; d_fake.len()]))
        }
    }
}

/// Generator-side adversarial value and `scale`-weighted gradient w.r.t.
/// the fake logits.
pub(crate) fn adv_g_with_grad<T: Scalar>(kind: AdversarialLoss, d_fake: &[T], scale: T) -> Result<(T, Vec<T>)> {
    if d_fake.is_empty() {
        return Err(Error::Shape("empty fake batch".into()));
    }
    let n = d_fake.len();
    let k = scale / T::lift(n as f64);
    match kind {
        AdversarialLoss::Vanilla => Ok((
            mean(d_fake.iter().map(|&d| softplus(-d)), n),
            d_fake.iter().map(|&d| -k * sigmoid(-d)).collect(),
        )),
        AdversarialLoss::WassersteinGp { .. } => Ok((-mean(d_fake.iter().copied(), n), alloc::vec![-k; n])),
    }
}

/// `attribute_bce(classify(x_edited), b)`.
pub fn generator_classification_loss<T: Scalar>(
    cls: &DiscCls<T>,
    x_edited: &Tensor<T>,
    b: &[AttributeVector],
) -> Result<T> {
    attribute_bce(&cls.classify(x_edited)?, b)
}

/// `attribute_bce(classify(x), a)` on real images.
pub fn classifier_loss_real<T: Scalar>(cls: &DiscCls<T>, x: &Tensor<T>, a: &[AttributeVector]) -> Result<T> {
    attribute_bce(&cls.classify(x)?, a)
}

/// Joint generator objective `lambda1 * rec + lambda2 * cls_g + adv_g`.
pub fn attgan_generator_objective(terms: &LossReport, w: &LossWeights) -> f64 {
    w.lambda1 * terms.rec + w.lambda2 * terms.cls_g + terms.adv_g
}

/// `lambda3 * cls_c + adv_d`.
pub fn disc_cls_objective(terms: &LossReport, w: &LossWeights) -> f64 {
    w.lambda3 * terms.cls_c + terms.adv_d
}

/// The split generator objectives `(lambda1 * rec + adv_g, lambda2 * cls_g)`.
pub fn design_generator_objectives(terms: &LossReport, w: &LossWeights) -> (f64, f64) {
    (w.lambda1 * terms.rec + terms.adv_g, w.lambda2 * terms.cls_g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn vecs(bits: &[&[u8]]) -> Vec<AttributeVector> {
        bits.iter().map(|b| AttributeVector::new(b.to_vec()).unwrap()).collect()
    }

    #[test]
    fn reconstruction_identity_and_offset() {
        let x = Tensor::from_vec(Shape::new(1, 3, 2, 2), (0..12).map(|i| i as f64 / 12.0 - 0.5).collect()).unwrap();
        assert_eq!(reconstruction_loss(&x, &x).unwrap(), 0.0);
        let shifted = x.map(|v| v + 0.5);
        assert!((reconstruction_loss(&x, &shifted).unwrap() - 0.5).abs() < 1e-15);
        let other = Tensor::<f64>::zeros(Shape::new(1, 3, 2, 1));
        assert!(reconstruction_loss(&x, &other).is_err());
    }

    #[test]
    fn bce_half_is_n_ln2() {
        let probs = Tensor::full(Shape::flat(3, 22), 0.5f64);
        let targets: Vec<_> = (0..3)
            .map(|i| AttributeVector::new((0..22).map(|k| ((i + k) % 2) as u8).collect()).unwrap())
            .collect();
        let v = attribute_bce(&probs, &targets).unwrap();
        assert!((v - 22.0 * core::f64::consts::LN_2).abs() < 1e-12);
        assert!((v - 15.2492).abs() < 1e-4);
    }

    #[test]
    fn bce_of_exact_targets_is_bounded_by_clamp() {
        let targets = vecs(&[&[1, 0, 1], &[0, 0, 1]]);
        let probs = Tensor::from_vec(
            Shape::flat(2, 3),
            targets
                .iter()
                .flat_map(|t| t.bits().iter().map(|&b| b as f64))
                .collect(),
        )
        .unwrap();
        let v = attribute_bce(&probs, &targets).unwrap();
        assert!((0.0..=3.0 * 1.0001e-7).contains(&v), "{v}");
    }

    #[test]
    fn bce_rejects_arity_mismatch() {
        let probs = Tensor::full(Shape::flat(1, 3), 0.5f64);
        assert!(matches!(
            attribute_bce(&probs, &vecs(&[&[1, 0]])),
            Err(Error::Arity { .. })
        ));
    }

    #[test]
    fn adversarial_limits_and_closed_forms() {
        let (d, g) = adversarial_losses(&[0.0f64], &[0.0]).unwrap();
        assert!((g - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((d - 2.0 * core::f64::consts::LN_2).abs() < 1e-15);
        let (d, _) = adversarial_losses(&[800.0f64], &[-800.0]).unwrap();
        assert!(d < 1e-300);
        assert!(adversarial_losses(&[0.0f64], &[]).is_err());
    }

    #[test]
    fn objective_arithmetic() {
        let t = LossReport {
            rec: 0.2,
            cls_g: 0.3,
            adv_g: 0.4,
            ..Default::default()
        };
        let ones = LossWeights {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
        };
        assert!((attgan_generator_objective(&t, &ones) - 0.9).abs() < 1e-15);
        let zero = LossWeights {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
        };
        assert_eq!(attgan_generator_objective(&t, &zero), 0.4);

        let t = LossReport {
            rec: 0.01,
            cls_g: 0.1,
            adv_g: 0.5,
            cls_c: 0.7,
            adv_d: 1.1,
            ..Default::default()
        };
        let w = LossWeights::default();
        assert!((attgan_generator_objective(&t, &w) - 2.5).abs() < 1e-12);
        let (a, b) = design_generator_objectives(&t, &w);
        assert!((a - 1.5).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        assert!((disc_cls_objective(&t, &w) - 1.8).abs() < 1e-12);
        assert_eq!(disc_cls_objective(&t, &zero), 1.1);
        let no_cls = LossWeights { lambda2: 0.0, ..w };
        assert_eq!(design_generator_objectives(&t, &no_cls).1, 0.0);
    }
}
