//! Dense tensors of order 1 to 4 and the multilinear primitives used by the
//! Tucker solvers: matricization, folding, mode-n products, vectorization,
//! inner products and Frobenius norms.
//!
//! Storage is canonical column-major: the first index varies fastest and the
//! last slowest. Mode-`n` unfoldings follow the Kolda-Bader convention, so
//! column `j` of `X(n)` enumerates the remaining indices with the
//! lowest-numbered remaining mode cycling fastest.
//!
//! Modes are zero-based throughout this crate (`0` is the first mode).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Column-major dense matrix.
pub type Matrix = DMatrix<f64>;

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.len() > MAX_ORDER {
        return Err(Error::UnsupportedOrder(dims.len()));
    }
    if dims.contains(&0) {
        return Err(Error::ShapeMismatch(format!("zero extent in dims {dims:?}")));
    }
    Ok(())
}

impl DenseTensor {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        let len = dims.iter().product();
        Ok(Self { dims: dims.to_vec(), data: vec![0.0; len] })
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "data length {} does not match dims {dims:?} (expected {len})",
                data.len()
            )));
        }
        Ok(Self { dims: dims.to_vec(), data })
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        let mut idx = vec![0usize; dims.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            for (k, i) in idx.iter_mut().enumerate() {
                *i += 1;
                if *i < dims[k] {
                    break;
                }
                *i = 0;
            }
        }
        Ok(t)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut lin = 0;
        let mut stride = 1;
        for (i, d) in idx.iter().zip(&self.dims) {
            debug_assert!(i < d);
            lin += i * stride;
            stride *= d;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let lin = self.linear_index(idx);
        self.data[lin] = value;
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange { mode, order: self.order() });
        }
        Ok(())
    }

    /// Products of the extents before and after `mode`.
    fn split(&self, mode: usize) -> (usize, usize, usize) {
        let left = self.dims[..mode].iter().product();
        let right = self.dims[mode + 1..].iter().product();
        (left, self.dims[mode], right)
    }

    /// Mode-`mode` matricization `X(mode)`.
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        self.check_mode(mode)?;
        let (left, n, right) = self.split(mode);
        let mut m = Matrix::zeros(n, left * right);
        for r in 0..right {
            for i in 0..n {
                let src = &self.data[left * (i + n * r)..left * (i + n * r + 1)];
                for (l, v) in src.iter().enumerate() {
                    m[(i, l + left * r)] = *v;
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(m: &Matrix, mode: usize, dims: &[usize]) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        t.check_mode(mode)?;
        let (left, n, right) = t.split(mode);
        if m.nrows() != n || m.ncols() != left * right {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} matrix cannot fold into mode {mode} of {dims:?}",
                m.nrows(),
                m.ncols()
            )));
        }
        for r in 0..right {
            for i in 0..n {
                let dst = &mut t.data[left * (i + n * r)..left * (i + n * r + 1)];
                for (l, v) in dst.iter_mut().enumerate() {
                    *v = m[(i, l + left * r)];
                }
            }
        }
        Ok(t)
    }

    /// Mode-`mode` product `X ×_mode U`, with `U` of shape `J × I_mode`.
    pub fn mode_mul(&self, u: &Matrix, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        if u.ncols() != self.dims[mode] {
            return Err(Error::ShapeMismatch(format!(
                "factor has {} columns but mode {mode} has extent {}",
                u.ncols(),
                self.dims[mode]
            )));
        }
        Ok(self.contract(mode, u.nrows(), |j, i| u[(j, i)]))
    }

    /// Mode-`mode` product with the transpose, `X ×_mode Uᵀ`, for `U` of
    /// shape `I_mode × r`. Avoids materializing `Uᵀ`.
    pub fn mode_mul_t(&self, u: &Matrix, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        if u.nrows() != self.dims[mode] {
            return Err(Error::ShapeMismatch(format!(
                "factor has {} rows but mode {mode} has extent {}",
                u.nrows(),
                self.dims[mode]
            )));
        }
        Ok(self.contract(mode, u.ncols(), |j, i| u[(i, j)]))
    }

    fn contract(&self, mode: usize, out_n: usize, coef: impl Fn(usize, usize) -> f64) -> Self {
        let (left, n, right) = self.split(mode);
        let mut dims = self.dims.clone();
        dims[mode] = out_n;
        let mut out = vec![0.0; left * out_n * right];
        for r in 0..right {
            for i in 0..n {
                let src = &self.data[left * (i + n * r)..left * (i + n * r + 1)];
                for j in 0..out_n {
                    let c = coef(j, i);
                    if c == 0.0 {
                        continue;
                    }
                    let dst = &mut out[left * (j + out_n * r)..left * (j + out_n * r + 1)];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += c * s;
                    }
                }
            }
        }
        Self { dims, data: out }
    }

    /// Applies `X ×_m U_mᵀ` for every `(m, U_m)` pair.
    ///
    /// Products along distinct modes commute, so they are applied in the order
    /// that shrinks the tensor fastest. The order is a pure function of the
    /// shapes, which keeps results reproducible.
    pub fn project(&self, factors: &[(usize, &Matrix)]) -> Result<Self> {
        let mut order: Vec<&(usize, &Matrix)> = factors.iter().collect();
        order.sort_by(|a, b| {
            let ra = a.1.ncols() as f64 / a.1.nrows() as f64;
            let rb = b.1.ncols() as f64 / b.1.nrows() as f64;
            ra.total_cmp(&rb).then(a.0.cmp(&b.0))
        });
        let mut iter = order.into_iter();
        let Some(&(m, u)) = iter.next() else {
            return Ok(self.clone());
        };
        let mut t = self.mode_mul_t(u, m)?;
        for &(m, u) in iter {
            t = t.mode_mul_t(u, m)?;
        }
        Ok(t)
    }

    /// Applies `G ×_m U_m` for every `(m, U_m)` pair, expanding the tensor.
    /// Products that grow the tensor least are applied first.
    pub fn expand(&self, factors: &[(usize, &Matrix)]) -> Result<Self> {
        let mut order: Vec<&(usize, &Matrix)> = factors.iter().collect();
        order.sort_by(|a, b| {
            let ra = a.1.nrows() as f64 / a.1.ncols() as f64;
            let rb = b.1.nrows() as f64 / b.1.ncols() as f64;
            ra.total_cmp(&rb).then(a.0.cmp(&b.0))
        });
        let mut t = self.clone();
        for &(m, u) in order {
            t = t.mode_mul(u, m)?;
        }
        Ok(t)
    }

    /// Canonical-layout vectorization.
    pub fn vec(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Inverse of [`DenseTensor::vec`].
    pub fn ten(v: &[f64], dims: &[usize]) -> Result<Self> {
        Self::from_vec(dims, v.to_vec())
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!(
                "inner product of {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(dot(&self.data, &other.data))
    }

    pub fn fro_norm(&self) -> f64 {
        norm(&self.data)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `‖a − b‖₂`.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
