//! Dense row-major tensors and the small set of kernels the rest of the
//! crate is built on.
//!
//! A [`Tensor`] owns a contiguous buffer plus a shape. There is no
//! broadcasting and no striding: reshapes only rewrite the shape, so a
//! `K x H x W x C` clip can be viewed as a `K x (H*W*C)` matrix for free.

mod io;
mod linalg;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

pub use io::{read_tensor, read_tensor_from, write_tensor, write_tensor_to, AnyTensor, MAGIC};
pub use linalg::{matmul, matmul_nt, matmul_tn, solve_spd, transpose, Cholesky};

/// Real scalar type a tensor can hold. Implemented for `f32` (training) and
/// `f64` (oracles and gradient checks).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Precision tag written to tensor files: the byte width of the scalar.
    const TAG: u8;
    const NAME: &'static str;

    fn of(x: f64) -> Self;
    fn to_f64_lossy(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const TAG: u8 = 4;
    const NAME: &'static str = "f32";

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const TAG: u8 = 8;
    const NAME: &'static str = "f64";

    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = check_shape(shape).expect("zeros: dimensions must be >= 1");
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = check_shape(shape).expect("from_fn: dimensions must be >= 1");
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// Rank-2 tensor from nested rows. Panics on ragged input; meant for
    /// literals in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().map(|&x| T::of(x))).collect();
        Self::new(vec![rows.len(), cols], data).expect("from_rows")
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn eye_scaled(n: usize, s: T) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = s;
        }
        t
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Shape(format!("expected a matrix, got shape {:?}", self.shape))),
        }
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        self.clone().reshape(shape)
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {index:?} out of bounds for {:?}", self.shape);
            acc * d + i
        })
    }

    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "elementwise op on {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "axpy on {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn sq_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::of(x.to_f64_lossy())).collect(),
        }
    }

    /// Arithmetic mean over `axes`; the reduced axes are dropped from the
    /// output shape. Reducing every axis yields a one-element tensor of
    /// shape `[1]`.
    pub fn reduce_mean(&self, axes: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut reduce = vec![false; rank];
        for &a in axes {
            if a >= rank {
                return Err(Error::Shape(format!("axis {a} out of range for rank {rank}")));
            }
            if reduce[a] {
                return Err(Error::Shape(format!("axis {a} repeated")));
            }
            reduce[a] = true;
        }
        let mut out_shape: Vec<usize> = (0..rank)
            .filter(|&i| !reduce[i])
            .map(|i| self.shape[i])
            .collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let count: usize = (0..rank).filter(|&i| reduce[i]).map(|i| self.shape[i]).product();
        let mut sums = vec![T::zero(); out_shape.iter().product()];

        // Walk the input in order with an odometer over the full index.
        let mut idx = vec![0usize; rank];
        for &x in &self.data {
            let mut o = 0;
            for i in 0..rank {
                if !reduce[i] {
                    o = o * self.shape[i] + idx[i];
                }
            }
            sums[o] = sums[o] + x;
            for i in (0..rank).rev() {
                idx[i] += 1;
                if idx[i] < self.shape[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        let inv = T::one() / T::of(count as f64);
        for s in &mut sums {
            *s = *s * inv;
        }
        Tensor::new(out_shape, sums)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::<f64>::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f64>::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn reshape_keeps_data() {
        let t = Tensor::<f64>::from_fn(&[2, 3, 4], |i| i as f64);
        let m = t.reshaped(&[2, 12]).unwrap();
        assert_eq!(m.data(), t.data());
        assert!(t.reshaped(&[5, 5]).is_err());
    }

    #[test]
    fn mean_of_constant_is_constant() {
        let t = Tensor::<f64>::full(&[3, 2, 5], 1.75);
        for axes in [&[0][..], &[1, 2], &[0, 1, 2], &[2, 0]] {
            let m = t.reduce_mean(axes).unwrap();
            assert!(m.data().iter().all(|&x| (x - 1.75).abs() < 1e-15));
        }
    }

    #[test]
    fn mean_hand_value() {
        let t = Tensor::<f64>::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = t.reduce_mean(&[0]).unwrap();
        assert_eq!(m.shape(), &[1]);
        assert_eq!(m.data()[0], 2.5);
    }

    #[test]
    fn mean_rejects_bad_axes() {
        let t = Tensor::<f64>::zeros(&[2, 2]);
        assert!(matches!(t.reduce_mean(&[2]), Err(Error::Shape(_))));
        assert!(matches!(t.reduce_mean(&[1, 1]), Err(Error::Shape(_))));
    }

    #[test]
    fn mean_matches_scalar_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let t = Tensor::<f64>::from_fn(&[3, 4, 5], |_| rng.random_range(-1.0..1.0));
        let m = t.reduce_mean(&[1, 2]).unwrap();
        assert_eq!(m.shape(), &[3]);
        for i in 0..3 {
            let mut s = 0.0;
            for j in 0..4 {
                for k in 0..5 {
                    s += t.at(&[i, j, k]);
                }
            }
            assert!((m.data()[i] - s / 20.0).abs() < 1e-12);
        }
        let mid = t.reduce_mean(&[1]).unwrap();
        assert_eq!(mid.shape(), &[3, 5]);
        for i in 0..3 {
            for k in 0..5 {
                let s: f64 = (0..4).map(|j| t.at(&[i, j, k])).sum();
                assert!((mid.at(&[i, k]) - s / 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_over_all_axes_is_sum_over_count() {
        let t = Tensor::<f64>::from_fn(&[2, 3, 7], |i| (i as f64).sin());
        let m = t.reduce_mean(&[0, 1, 2]).unwrap();
        assert!((m.data()[0] - t.sum() / 42.0).abs() < 1e-12);
    }
}
