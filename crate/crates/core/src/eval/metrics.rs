use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::oracle::{index_chunks, OracleClassifier};
use crate::data::{AttributeVector, Dataset};
use crate::error::{Error, Result};
use crate::losses::reconstruction_loss;
use crate::models::Generator;
use crate::nn::Mode;

fn non_empty(testset: &Dataset) -> Result<()> {
    if testset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

fn check_index(testset: &Dataset, attr: usize) -> Result<()> {
    if attr >= testset.schema().len() {
        return Err(Error::Arity {
            expected: testset.schema().len(),
            actual: attr + 1,
        });
    }
    Ok(())
}

/// Fraction of test images whose single edit `attr := value` is judged by
/// the oracle to carry `value`. The oracle is certified on `testset` first.
pub fn edit_success_rate(
    generator: &Generator<f32>,
    oracle: &OracleClassifier,
    testset: &Dataset,
    attr: usize,
    value: bool,
) -> Result<f64> {
    non_empty(testset)?;
    check_index(testset, attr)?;
    oracle.certify(testset)?;
    let schema = testset.schema();
    let mut hits = 0usize;
    for chunk in index_chunks(testset.len()) {
        let (x, a) = testset.batch::<f32>(&chunk);
        let b: Vec<_> = a.iter().map(|v| v.with_single_edit(schema, attr, value)).collect();
        let edited = generator.edit(&x, &b, Mode::Eval)?;
        hits += oracle.predict(&edited)?.iter().filter(|p| p[attr] == value).count();
    }
    Ok(hits as f64 / testset.len() as f64)
}

/// Attributes other than `attr` that the edit `a -> b` leaves untouched.
fn kept(a: &AttributeVector, b: &AttributeVector, attr: usize) -> Vec<usize> {
    (0..a.len()).filter(|&j| j != attr && a.get(j) == b.get(j)).collect()
}

fn preserved_fraction(before: &[bool], after: &[bool], idx: &[usize]) -> f64 {
    idx.iter().filter(|&&j| before[j] == after[j]).count() as f64 / idx.len() as f64
}

/// Flips `attr` on every test image and measures, per image, the fraction of
/// the attributes the target keeps from the source whose oracle prediction
/// is the same on the original and the edited image; returns the mean over
/// images. Images whose edit changes every other attribute are skipped.
pub fn preservation_rate(
    generator: &Generator<f32>,
    oracle: &OracleClassifier,
    testset: &Dataset,
    attr: usize,
) -> Result<f64> {
    non_empty(testset)?;
    check_index(testset, attr)?;
    let schema = testset.schema();
    if schema.len() < 2 {
        return Err(Error::Schema("preservation needs at least two attributes".into()));
    }
    oracle.certify(testset)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for chunk in index_chunks(testset.len()) {
        let (x, a) = testset.batch::<f32>(&chunk);
        let b: Vec<_> = a
            .iter()
            .map(|v| v.with_single_edit(schema, attr, !v.get(attr)))
            .collect();
        let edited = generator.edit(&x, &b, Mode::Eval)?;
        let before = oracle.predict(&x)?;
        let after = oracle.predict(&edited)?;
        for i in 0..a.len() {
            let idx = kept(&a[i], &b[i], attr);
            if !idx.is_empty() {
                sum += preserved_fraction(&before[i], &after[i], &idx);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Schema(
            "no test image has an attribute left unchanged by the edit".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// Mean over test images of the reconstruction L1 with the source
/// attributes.
pub fn reconstruction_metrics(generator: &Generator<f32>, testset: &Dataset) -> Result<f64> {
    non_empty(testset)?;
    let mut sum = 0.0;
    for chunk in index_chunks(testset.len()) {
        let (x, a) = testset.batch::<f32>(&chunk);
        let rec = generator.edit(&x, &a, Mode::Eval)?;
        for i in 0..a.len() {
            let xi = x.slice_items(i, i + 1);
            let ri = rec.slice_items(i, i + 1);
            sum += reconstruction_loss(&xi, &ri)? as f64;
        }
    }
    Ok(sum / testset.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeEval {
    pub name: String,
    /// Edit success with target value 1.
    pub success_to_one: f64,
    /// Edit success with target value 0.
    pub success_to_zero: f64,
    /// Preservation when this attribute is flipped.
    pub preservation: f64,
}

impl AttributeEval {
    /// Mean of both target values.
    pub fn success(&self) -> f64 {
        0.5 * (self.success_to_one + self.success_to_zero)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub attributes: Vec<AttributeEval>,
    pub reconstruction_l1: f64,
    pub test_count: usize,
    /// Per-attribute oracle accuracy on the real test images.
    pub oracle_accuracy: Vec<f64>,
    pub config_digest: String,
}

impl EvalReport {
    pub fn attribute(&self, name: &str) -> Result<&AttributeEval> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAttribute(name.into()))
    }

    /// Mean edit success towards 1 over `names`.
    pub fn mean_success_to_one(&self, names: &[String]) -> Result<f64> {
        self.mean_of(names, |a| a.success_to_one)
    }

    pub fn mean_preservation(&self, names: &[String]) -> Result<f64> {
        self.mean_of(names, |a| a.preservation)
    }

    fn mean_of(&self, names: &[String], f: impl Fn(&AttributeEval) -> f64) -> Result<f64> {
        if names.is_empty() {
            return Err(Error::Config("no attributes to average".into()));
        }
        let mut sum = 0.0;
        for n in names {
            sum += f(self.attribute(n)?);
        }
        Ok(sum / names.len() as f64)
    }
}

/// All metrics in one pass over the test set (each image is encoded once).
/// Gives the same numbers as the individual metric functions.
pub fn evaluate(
    generator: &Generator<f32>,
    oracle: &OracleClassifier,
    testset: &Dataset,
    config_digest: String,
) -> Result<EvalReport> {
    non_empty(testset)?;
    let schema = testset.schema();
    let n_attr = schema.len();
    if n_attr < 2 {
        return Err(Error::Schema("preservation needs at least two attributes".into()));
    }
    let oracle_accuracy = oracle.certify(testset)?;
    let mut hits = alloc::vec![[0usize; 2]; n_attr];
    let mut pres = alloc::vec![(0.0f64, 0usize); n_attr];
    let mut rec_sum = 0.0;
    for chunk in index_chunks(testset.len()) {
        let (x, a) = testset.batch::<f32>(&chunk);
        let z = generator.encode(&x, Mode::Eval)?;
        let rec = generator.decode(&z, &a, Mode::Eval)?;
        for i in 0..a.len() {
            rec_sum += reconstruction_loss(&x.slice_items(i, i + 1), &rec.slice_items(i, i + 1))? as f64;
        }
        let before = oracle.predict(&x)?;
        for attr in 0..n_attr {
            for value in [false, true] {
                let b: Vec<_> = a.iter().map(|v| v.with_single_edit(schema, attr, value)).collect();
                let after = oracle.predict(&generator.decode(&z, &b, Mode::Eval)?)?;
                for i in 0..a.len() {
                    hits[attr][value as usize] += (after[i][attr] == value) as usize;
                    if a[i].get(attr) != value {
                        let idx = kept(&a[i], &b[i], attr);
                        if !idx.is_empty() {
                            pres[attr].0 += preserved_fraction(&before[i], &after[i], &idx);
                            pres[attr].1 += 1;
                        }
                    }
                }
            }
        }
    }
    let n = testset.len() as f64;
    let attributes = schema
        .names()
        .iter()
        .enumerate()
        .map(|(j, name)| AttributeEval {
            name: name.clone(),
            success_to_one: hits[j][1] as f64 / n,
            success_to_zero: hits[j][0] as f64 / n,
            preservation: if pres[j].1 == 0 {
                1.0
            } else {
                pres[j].0 / pres[j].1 as f64
            },
        })
        .collect();
    Ok(EvalReport {
        attributes,
        reconstruction_l1: rec_sum / n,
        test_count: testset.len(),
        oracle_accuracy,
        config_digest,
    })
}
