use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Batch layout `(n, c, h, w)`. Flat feature vectors use `h = w = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn flat(n: usize, features: usize) -> Self {
        Self::new(n, features, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per batch item.
    pub const fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }
}

/// Dense row-major NCHW tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape(format!("{} elements do not fill {:?}", data.len(), shape)));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Same data, reinterpreted as `(n, c*h*w, 1, 1)`.
    pub fn flatten(self) -> Self {
        let s = self.shape;
        Self {
            shape: Shape::flat(s.n, s.item_len()),
            data: self.data,
        }
    }

    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn item(&self, i: usize) -> &[T] {
        let len = self.shape.item_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [T] {
        let len = self.shape.item_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    /// Gather items `[start, end)` into a new tensor.
    pub fn slice_items(&self, start: usize, end: usize) -> Self {
        let len = self.shape.item_len();
        Self {
            shape: Shape {
                n: end - start,
                ..self.shape
            },
            data: self.data[start * len..end * len].to_vec(),
        }
    }

    /// Concatenate along the batch axis.
    pub fn concat_items(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
        let mut shape = first.shape;
        shape.n = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.shape.item_len() != first.shape.item_len() || p.shape.c != first.shape.c {
                return Err(Error::Shape(format!(
                    "cannot concat {:?} with {:?}",
                    p.shape, first.shape
                )));
            }
            shape.n += p.shape.n;
            data.extend_from_slice(&p.data);
        }
        Ok(Self { shape, data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_max(&self) -> (T, T) {
        self.data
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::lift(v.as_f64())).collect(),
        }
    }

    pub fn expect_shape(&self, expected: Shape, what: &str) -> Result<()> {
        if self.shape != expected {
            return Err(Error::Shape(format!(
                "{what}: expected {:?}, got {:?}",
                expected, self.shape
            )));
        }
        Ok(())
    }
}
