//! Anisotropic 3D total variation with circular boundaries.
//!
//! Differences are forward and wrap in all three directions: horizontal
//! (columns), vertical (rows) and temporal (frames). Under circular
//! boundaries `D*D` is block circulant, so the foreground update
//! `(β_x0·I + β_f·D*D)·x = c` is solved exactly with one forward and one
//! inverse 3D FFT.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::{dot, DenseTensor};

pub type VideoVolume = DenseTensor;

/// Three directional differences of a volume, each shaped like the volume.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffField {
    pub horizontal: Vec<f64>,
    pub vertical: Vec<f64>,
    pub temporal: Vec<f64>,
    pub dims: [usize; 3],
}

impl DiffField {
    pub fn zeros(dims: [usize; 3]) -> Self {
        let n = dims.iter().product();
        Self { horizontal: vec![0.0; n], vertical: vec![0.0; n], temporal: vec![0.0; n], dims }
    }

    pub fn parts(&self) -> [&[f64]; 3] {
        [&self.horizontal, &self.vertical, &self.temporal]
    }

    pub fn parts_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.horizontal, &mut self.vertical, &mut self.temporal]
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.parts().iter().zip(other.parts()).map(|(a, b)| dot(a, b)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn l1(&self) -> f64 {
        self.parts().iter().flat_map(|p| p.iter()).map(|v| v.abs()).sum()
    }

    /// `self + alpha * other`, elementwise.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.parts_mut().into_iter().zip(other.parts()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.parts().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

fn volume_dims(x: &VideoVolume) -> Result<[usize; 3]> {
    match *x.dims() {
        [h, w, d] => Ok([h, w, d]),
        _ => Err(Error::ShapeMismatch(format!("expected an H×W×D volume, got {:?}", x.dims()))),
    }
}

/// Circular forward differences of `x`.
pub fn diff(x: &VideoVolume) -> Result<DiffField> {
    let dims = volume_dims(x)?;
    Ok(diff_raw(x.data(), dims))
}

pub(crate) fn diff_raw(x: &[f64], [h, w, d]: [usize; 3]) -> DiffField {
    let mut out = DiffField::zeros([h, w, d]);
    for k in 0..d {
        let kn = (k + 1) % d;
        for j in 0..w {
            let jn = (j + 1) % w;
            for i in 0..h {
                let in_ = (i + 1) % h;
                let at = i + h * (j + w * k);
                let v = x[at];
                out.horizontal[at] = x[i + h * (jn + w * k)] - v;
                out.vertical[at] = x[in_ + h * (j + w * k)] - v;
                out.temporal[at] = x[i + h * (j + w * kn)] - v;
            }
        }
    }
    out
}

/// Adjoint of [`diff`].
pub fn diff_adjoint(g: &DiffField) -> Result<VideoVolume> {
    let n: usize = g.dims.iter().product();
    if g.parts().iter().any(|p| p.len() != n) {
        return Err(Error::ShapeMismatch("difference field parts disagree with its dims".into()));
    }
    DenseTensor::from_vec(&g.dims, diff_adjoint_raw(g))
}

pub(crate) fn diff_adjoint_raw(g: &DiffField) -> Vec<f64> {
    let [h, w, d] = g.dims;
    let mut out = vec![0.0; h * w * d];
    for k in 0..d {
        let kp = (k + d - 1) % d;
        for j in 0..w {
            let jp = (j + w - 1) % w;
            for i in 0..h {
                let ip = (i + h - 1) % h;
                let at = i + h * (j + w * k);
                out[at] = g.horizontal[i + h * (jp + w * k)] - g.horizontal[at]
                    + g.vertical[ip + h * (j + w * k)]
                    - g.vertical[at]
                    + g.temporal[i + h * (j + w * kp)]
                    - g.temporal[at];
            }
        }
    }
    out
}

/// Anisotropic 3D TV: sum of absolute circular differences in all directions.
pub fn tv_norm(x: &VideoVolume) -> Result<f64> {
    Ok(tv_norm_raw(x.data(), volume_dims(x)?))
}

pub(crate) fn tv_norm_raw(x: &[f64], [h, w, d]: [usize; 3]) -> f64 {
    let mut total = 0.0;
    for k in 0..d {
        for j in 0..w {
            for i in 0..h {
                let v = x[i + h * (j + w * k)];
                total += (x[i + h * ((j + 1) % w + w * k)] - v).abs()
                    + (x[(i + 1) % h + h * (j + w * k)] - v).abs()
                    + (x[i + h * (j + w * ((k + 1) % d))] - v).abs();
            }
        }
    }
    total
}

/// `sgn(a)·max(|a| − τ, 0)`.
#[inline]
pub fn soft(a: f64, tau: f64) -> f64 {
    if a > tau {
        a - tau
    } else if a < -tau {
        a + tau
    } else {
        0.0
    }
}

pub fn soft_shrink(v: &[f64], tau: f64) -> Vec<f64> {
    v.iter().map(|&a| soft(a, tau)).collect()
}

pub fn soft_shrink_field(v: &DiffField, tau: f64) -> DiffField {
    DiffField {
        horizontal: soft_shrink(&v.horizontal, tau),
        vertical: soft_shrink(&v.vertical, tau),
        temporal: soft_shrink(&v.temporal, tau),
        dims: v.dims,
    }
}

/// Eigenvalues of `D*D` on the 3D DFT grid, i.e. the sum of
/// `|fft(kernel)|²` over the three difference kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct TvSpectrum {
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

impl TvSpectrum {
    pub fn new([h, w, d]: [usize; 3]) -> Self {
        // |e^{2πiq/n} − 1|² = 4 sin²(πq/n)
        let axis = |n: usize| -> Vec<f64> { (0..n).map(|q| 4.0 * (PI * q as f64 / n as f64).sin().powi(2)).collect() };
        let (sh, sw, sd) = (axis(h), axis(w), axis(d));
        let mut values = Vec::with_capacity(h * w * d);
        for s in &sd {
            for q in &sw {
                for p in &sh {
                    values.push(p + q + s);
                }
            }
        }
        Self { dims: [h, w, d], values }
    }
}

/// Cached 3D FFT plans and the TV spectrum for one volume shape.
///
/// Plans are immutable and `Send + Sync`; every solve allocates its own
/// buffers, so a solver can be shared across threads.
pub struct TvSolver {
    spectrum: TvSpectrum,
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for TvSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TvSolver").field("dims", &self.spectrum.dims).finish()
    }
}

impl TvSolver {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = dims.map(|n| planner.plan_fft_forward(n));
        let inverse = dims.map(|n| planner.plan_fft_inverse(n));
        Self { spectrum: TvSpectrum::new(dims), forward, inverse }
    }

    pub fn spectrum(&self) -> &TvSpectrum {
        &self.spectrum
    }

    pub fn dims(&self) -> [usize; 3] {
        self.spectrum.dims
    }

    fn fft3(&self, buf: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [h, w, d] = self.spectrum.dims;
        // rows are contiguous
        plans[0].process(buf);
        let mut line = vec![Complex64::default(); w.max(d)];
        for k in 0..d {
            for i in 0..h {
                let line = &mut line[..w];
                for j in 0..w {
                    line[j] = buf[i + h * (j + w * k)];
                }
                plans[1].process(line);
                for j in 0..w {
                    buf[i + h * (j + w * k)] = line[j];
                }
            }
        }
        for j in 0..w {
            for i in 0..h {
                let line = &mut line[..d];
                for k in 0..d {
                    line[k] = buf[i + h * (j + w * k)];
                }
                plans[2].process(line);
                for k in 0..d {
                    buf[i + h * (j + w * k)] = line[k];
                }
            }
        }
    }

    /// Solves `(β_x0·I + β_f·D*D)·x = c` and returns `x` together with the
    /// norm of the imaginary part discarded after the inverse transform.
    pub fn solve_detailed(&self, c: &[f64], beta_x0: f64, beta_f: f64) -> Result<(Vec<f64>, f64)> {
        if !(beta_x0 > 0.0) {
            return Err(Error::InvalidParameter(format!("beta_x0 must be positive, got {beta_x0}")));
        }
        if beta_f < 0.0 {
            return Err(Error::InvalidParameter(format!("beta_f must be non-negative, got {beta_f}")));
        }
        let n = self.spectrum.values.len();
        if c.len() != n {
            return Err(Error::ShapeMismatch(format!("right-hand side has {} entries, expected {n}", c.len())));
        }
        let mut buf: Vec<Complex64> = c.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft3(&mut buf, &self.forward);
        for (z, s) in buf.iter_mut().zip(&self.spectrum.values) {
            *z /= beta_x0 + beta_f * s;
        }
        self.fft3(&mut buf, &self.inverse);
        let scale = 1.0 / n as f64;
        let mut imag = 0.0;
        let out: Vec<f64> = buf
            .iter()
            .map(|z| {
                imag += (z.im * scale).powi(2);
                z.re * scale
            })
            .collect();
        let imag = imag.sqrt();
        debug_assert!(imag <= 1e-9 * crate::tensor::norm(&out).max(1.0), "imaginary residue {imag}");
        Ok((out, imag))
    }

    pub fn solve(&self, c: &[f64], beta_x0: f64, beta_f: f64) -> Result<Vec<f64>> {
        self.solve_detailed(c, beta_x0, beta_f).map(|(x, _)| x)
    }
}

/// One-shot foreground solve for a volume-shaped right-hand side.
pub fn solve_x2(c: &VideoVolume, beta_x0: f64, beta_f: f64, solver: &TvSolver) -> Result<VideoVolume> {
    let dims = volume_dims(c)?;
    if dims != solver.dims() {
        return Err(Error::ShapeMismatch(format!("volume {dims:?} does not match solver {:?}", solver.dims())));
    }
    DenseTensor::from_vec(c.dims(), solver.solve(c.data(), beta_x0, beta_f)?)
}
