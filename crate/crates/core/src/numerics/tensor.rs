use std::fmt;

use super::real::{gemm, Real};
use crate::error::{Error, Result};

/// Dense row-major tensor; the last axis varies fastest.
#[derive(Clone, PartialEq)]
pub struct Tensor<F = f32> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor<{}>{:?}", F::NAME, self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<F>) -> Result<Self> {
        let shape = shape.into();
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        if numel(&shape) != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {} values, got {}",
                numel(&shape),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// Like [`Tensor::new`] but panics on inconsistent input; for literals.
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Self {
        Self::new(shape, data.into_iter().map(F::cast).collect()).expect("valid tensor literal")
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = numel(&shape);
        Self {
            shape,
            data: vec![F::zero(); n],
        }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: F) -> Self {
        let shape = shape.into();
        let n = numel(&shape);
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: F) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> F) -> Self {
        let shape = shape.into();
        let data = (0..numel(&shape)).map(&mut f).collect();
        Self { shape, data }
    }

    pub fn eye(n: usize) -> Self {
        Self::from_fn([n, n], |i| if i / n == i % n { F::one() } else { F::zero() })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Extent of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("tensor has at least one axis")
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn at(&self, index: &[usize]) -> F {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: F) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if numel(&shape) != self.data.len() || shape.contains(&0) {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(F, F) -> F) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "elementwise",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, factor: F) -> Self {
        self.map(|v| v * factor)
    }

    pub fn sum(&self) -> F {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff: shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::cast(v.as_f64())).collect(),
        }
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![F::zero(); m * n];
        gemm(m, k, n, &self.data, false, &other.data, false, &mut out, false);
        Self::new([m, n], out)
    }

    /// Reorders axes so that output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Shape(format!(
                "permute: {perm:?} is not a permutation of {rank} axes"
            )));
        }
        let shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let mut out = vec![F::zero(); self.data.len()];
        permute_into(&self.data, &self.shape, perm, &mut out, false);
        Ok(Self { shape, data: out })
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Writes (or, with `accumulate`, adds) `src` permuted by `perm` into `dst`.
pub(crate) fn permute_into<F: Real>(
    src: &[F],
    src_shape: &[usize],
    perm: &[usize],
    dst: &mut [F],
    accumulate: bool,
) {
    let rank = src_shape.len();
    let src_strides = strides(src_shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| src_shape[p]).collect();
    // stride in `src` of each output axis
    let walk: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
    let inner = out_shape[rank - 1];
    let inner_stride = walk[rank - 1];
    let mut counter = vec![0usize; rank];
    let mut base = 0usize;
    let mut o = 0usize;
    while o < dst.len() {
        let mut s = base;
        let row = &mut dst[o..o + inner];
        if accumulate {
            for d in row.iter_mut() {
                *d = *d + src[s];
                s += inner_stride;
            }
        } else {
            for d in row.iter_mut() {
                *d = src[s];
                s += inner_stride;
            }
        }
        o += inner;
        // advance the outer counters
        let mut ax = rank - 1;
        while ax > 0 {
            ax -= 1;
            counter[ax] += 1;
            base += walk[ax];
            if counter[ax] < out_shape[ax] {
                break;
            }
            base -= walk[ax] * out_shape[ax];
            counter[ax] = 0;
        }
    }
}

/// Maps every flat index of `out_shape` to the flat index of `src_shape`
/// it reads under broadcasting (each source extent equals the output
/// extent or is 1).
pub(crate) fn broadcast_index(src_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let src_strides = strides(src_shape);
    let rank = out_shape.len();
    let n = numel(out_shape);
    let mut idx = Vec::with_capacity(n);
    let mut counter = vec![0usize; rank];
    for _ in 0..n {
        let mut s = 0;
        for ax in 0..rank {
            if src_shape[ax] != 1 {
                s += counter[ax] * src_strides[ax];
            }
        }
        idx.push(s);
        for ax in (0..rank).rev() {
            counter[ax] += 1;
            if counter[ax] < out_shape[ax] {
                break;
            }
            counter[ax] = 0;
        }
    }
    idx
}

/// Softmax along the last axis with max subtraction.
pub fn softmax<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let n = x.last_dim();
    let mut out = x.clone();
    for row in out.data.chunks_mut(n) {
        softmax_row(row);
    }
    out
}

fn softmax_row<F: Real>(row: &mut [F]) {
    let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    let mut total = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    let inv = total.recip();
    for v in row.iter_mut() {
        *v = *v * inv;
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Layer normalisation over the last axis followed by `gamma·x̂ + beta`.
pub fn layer_norm<F: Real>(x: &Tensor<F>, gamma: &Tensor<F>, beta: &Tensor<F>) -> Result<Tensor<F>> {
    let n = x.last_dim();
    if gamma.shape() != [n] || beta.shape() != [n] {
        return Err(Error::ShapeMismatch {
            op: "layer_norm",
            left: x.shape.clone(),
            right: gamma.shape.clone(),
        });
    }
    let mut out = x.clone();
    for row in out.data.chunks_mut(n) {
        normalize_row(row);
        for ((v, &g), &b) in row.iter_mut().zip(&gamma.data).zip(&beta.data) {
            *v = *v * g + b;
        }
    }
    Ok(out)
}

/// Normalises `row` in place to zero mean, unit (population) variance.
/// Returns `(mean, 1/sqrt(var + eps))`.
pub(crate) fn normalize_row<F: Real>(row: &mut [F]) -> (F, F) {
    let n = F::cast(row.len() as f64);
    let mean = row.iter().copied().sum::<F>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
    let rstd = (var + F::cast(LAYER_NORM_EPS)).sqrt().recip();
    for v in row.iter_mut() {
        *v = (*v - mean) * rstd;
    }
    (mean, rstd)
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Standard normal CDF.
pub(crate) fn normal_cdf<F: Real>(x: F) -> F {
    F::cast(0.5) * (F::one() + (x * F::cast(FRAC_1_SQRT_2)).erf())
}

pub(crate) fn normal_pdf<F: Real>(x: F) -> F {
    F::cast(0.398_942_280_401_432_7) * (F::cast(-0.5) * x * x).exp()
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    x.map(|v| v * normal_cdf(v))
}
