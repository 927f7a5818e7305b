use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// A named, shaped, flat array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered collection of named arrays. Networks refer to their weights by
/// [`ParamId`]; gradients and optimizer moments reuse the same layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) -> ParamId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.params.push(Param {
            name: name.into(),
            shape,
            data,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn push_filled(&mut self, name: impl Into<String>, shape: Vec<usize>, value: T) -> ParamId {
        let len = shape.iter().product();
        self.push(name, shape, vec![value; len])
    }

    /// Zero-mean Gaussian initialisation.
    pub fn push_gaussian<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        std: f64,
        rng: &mut R,
    ) -> ParamId {
        let len: usize = shape.iter().product();
        let data = (0..len)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                T::lift(z * std)
            })
            .collect();
        self.push(name, shape, data)
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.params[id.0].data
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].data
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn find_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Same names and shapes, every element zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: vec![T::zero(); p.data.len()],
                })
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for p in &mut self.params {
            p.data.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn scale(&mut self, factor: T) {
        for p in &mut self.params {
            p.data.iter_mut().for_each(|v| *v = *v * factor);
        }
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Name of the first array holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.params
            .iter()
            .find(|p| p.data.iter().any(|v| !v.is_finite()))
            .map(|p| p.name.as_str())
    }

    /// Same names, shapes and layout order.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    /// Bitwise equality of every element.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.same_layout(other)
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.data
                    .iter()
                    .zip(&b.data)
                    .all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
            })
    }

    /// Flat view of all elements in layout order.
    pub fn flat_values(&self) -> Vec<T> {
        self.params.iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    pub fn flat_get(&self, mut index: usize) -> T {
        for p in &self.params {
            if index < p.data.len() {
                return p.data[index];
            }
            index -= p.data.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn flat_set(&mut self, mut index: usize, value: T) {
        for p in &mut self.params {
            if index < p.data.len() {
                p.data[index] = value;
                return;
            }
            index -= p.data.len();
        }
        panic!("flat parameter index out of range");
    }

    /// Name of the array holding flat element `index`, with the offset
    /// inside it.
    pub fn locate(&self, mut index: usize) -> Option<(&str, usize)> {
        for p in &self.params {
            if index < p.data.len() {
                return Some((&p.name, index));
            }
            index -= p.data.len();
        }
        None
    }
}
