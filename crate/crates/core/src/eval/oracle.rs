use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{BatchSampler, Dataset};
use crate::error::{Error, Result};
use crate::losses::attribute_bce_with_grad;
use crate::models::{DiscCls, DiscConfig};
use crate::rng::{stream, Domain};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::training::{adam_update, AdamHyper, AdamMoments};

/// Architecture and budget of the judging classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub blocks: usize,
    pub base_channels: usize,
    pub head_hidden: usize,
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Part of the fitting data held out for the accuracy check.
    pub holdout_fraction: f64,
    /// Minimum per-attribute accuracy on real held-out images.
    pub required_accuracy: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            blocks: 3,
            base_channels: 8,
            head_hidden: 32,
            steps: 600,
            batch_size: 32,
            learning_rate: 1e-3,
            holdout_fraction: 0.2,
            required_accuracy: 0.95,
        }
    }
}

/// Frozen attribute classifier used to judge edits.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleClassifier {
    pub model: DiscCls<f32>,
    pub names: Vec<String>,
    pub required_accuracy: f64,
    /// Per-attribute accuracy measured on the held-out part of the fitting
    /// data.
    pub holdout_accuracy: Vec<f64>,
}

impl OracleClassifier {
    /// Hard predictions (`p > 0.5`) for a batch of images.
    pub fn predict(&self, x: &Tensor<f32>) -> Result<Vec<Vec<bool>>> {
        let logits = self.model.classify_logits(x)?;
        let n = self.names.len();
        Ok(logits
            .data()
            .chunks(n)
            .map(|row| row.iter().map(|&l| l > 0.0).collect())
            .collect())
    }

    /// Per-attribute accuracy against the annotations of `data`.
    pub fn accuracy(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.schema().names() != self.names.as_slice() {
            return Err(Error::Schema("oracle and dataset schemas differ".into()));
        }
        let mut correct = alloc::vec![0usize; self.names.len()];
        for chunk in index_chunks(data.len()) {
            let (x, attrs) = data.batch::<f32>(&chunk);
            for (pred, a) in self.predict(&x)?.iter().zip(&attrs) {
                for (j, &p) in pred.iter().enumerate() {
                    correct[j] += (p == a.get(j)) as usize;
                }
            }
        }
        Ok(correct.iter().map(|&c| c as f64 / data.len() as f64).collect())
    }

    /// Fails with [`Error::OracleUnderTrained`] unless every attribute meets
    /// the accuracy bar on `data`.
    pub fn certify(&self, data: &Dataset) -> Result<Vec<f64>> {
        let acc = self.accuracy(data)?;
        check_accuracy(&self.names, &acc, self.required_accuracy)?;
        Ok(acc)
    }
}

fn check_accuracy(names: &[String], acc: &[f64], required: f64) -> Result<()> {
    for (name, &a) in names.iter().zip(acc) {
        if a < required {
            return Err(Error::OracleUnderTrained {
                name: name.clone(),
                accuracy: a,
                required,
            });
        }
    }
    Ok(())
}

pub(crate) fn index_chunks(len: usize) -> impl Iterator<Item = Vec<usize>> {
    const CHUNK: usize = 64;
    (0..len.div_ceil(CHUNK)).map(move |c| (c * CHUNK..((c + 1) * CHUNK).min(len)).collect())
}

/// Fits a classifier on `data` (which must be disjoint from any set later
/// judged) and checks it on a seeded held-out part of `data`.
pub fn train_oracle(data: &Dataset, config: &OracleConfig, seed: u64) -> Result<OracleClassifier> {
    let names = data.schema().names().to_vec();
    for (name, f) in names.iter().zip(data.attribute_frequencies()) {
        if f == 0.0 || f == 1.0 {
            return Err(Error::DegenerateAttribute(name.clone()));
        }
    }
    if config.steps == 0 || config.batch_size == 0 {
        return Err(Error::Config(
            "oracle needs at least one step and one image per batch".into(),
        ));
    }
    let (fit, holdout) = data.split(config.holdout_fraction, seed)?;
    let (h, _) = data.image_size();
    let disc = DiscConfig {
        image_size: h,
        blocks: config.blocks,
        base_channels: config.base_channels,
        head_hidden: config.head_hidden,
        n_attributes: names.len(),
        init_std: 0.02,
    };
    let mut model = DiscCls::<f32>::new(disc, &mut stream(seed, Domain::Oracle, 0))?;
    let mut moments = AdamMoments::new(&model.params);
    let hyper = AdamHyper {
        learning_rate: config.learning_rate,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
    let mut sampler = BatchSampler::new(seed, fit.len(), config.batch_size);
    for step in 0..config.steps {
        let (x, a) = fit.batch::<f32>(&sampler.indices(step));
        let (out, tape) = model.forward_taped(&x)?;
        let (loss, g) = attribute_bce_with_grad(&out.cls, &a, 1.0)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                what: "oracle loss".into(),
                step,
                detail: format!("value {}", loss.as_f64()),
            });
        }
        let mut grads = model.params.zeros_like();
        model.backward(&tape, None, Some(g), &mut grads);
        adam_update(&mut model.params, &grads, &mut moments, &hyper)?;
    }
    let mut oracle = OracleClassifier {
        model,
        names,
        required_accuracy: config.required_accuracy,
        holdout_accuracy: Vec::new(),
    };
    oracle.holdout_accuracy = oracle.accuracy(&holdout)?;
    check_accuracy(&oracle.names, &oracle.holdout_accuracy, oracle.required_accuracy)?;
    Ok(oracle)
}
