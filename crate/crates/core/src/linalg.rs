//! Truncated spectral factorizations and Tucker fitting.
//!
//! [`hooi3`] is classic higher-order orthogonal iteration for a single
//! 3-order tensor. [`joint_hooi`] fits many 4-order patch-group tensors at
//! once with per-group spatial and group factors and one temporal factor
//! shared by every group.
//!
//! Both start from a truncated HOSVD and report the objective after every
//! sweep. Each factor update is the exact maximizer of the projected energy
//! with the other factors held fixed, so the objective can only decrease.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix};

/// Flips each column so that its largest-magnitude entry is non-negative.
fn fix_signs(m: &mut Matrix) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0f64;
        let mut best_abs = -1.0f64;
        for &v in col.iter() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = v;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// Indices of `values` sorted descending; ties keep ascending index order.
fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

fn check_rank(r: usize, max: usize) -> Result<()> {
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    Ok(())
}

/// Leading `r` left singular vectors of `m` as a column-orthonormal matrix.
///
/// Wide matrices go through the eigendecomposition of the Gram matrix `m mᵀ`;
/// tall ones through a thin SVD.
pub fn top_singular_vectors(m: &Matrix, r: usize) -> Result<Matrix> {
    let (rows, cols) = m.shape();
    check_rank(r, rows.min(cols))?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if rows <= cols {
        let gram = m * m.transpose();
        return leading_eigenvectors(gram, r);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let order = descending_order(svd.singular_values.as_slice());
    let mut out = Matrix::zeros(rows, r);
    for (k, &i) in order.iter().take(r).enumerate() {
        out.set_column(k, &u.column(i));
    }
    fix_signs(&mut out);
    Ok(out)
}

/// Leading `r` eigenvectors of a symmetric matrix.
pub fn top_eigenvectors(m: &Matrix, r: usize) -> Result<Matrix> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::ShapeMismatch(format!("eigenvectors of non-square {rows}x{cols} matrix")));
    }
    check_rank(r, rows)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    leading_eigenvectors(m.clone(), r)
}

fn leading_eigenvectors(sym: Matrix, r: usize) -> Result<Matrix> {
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let order = descending_order(eig.eigenvalues.as_slice());
    let mut out = Matrix::zeros(n, r);
    for (k, &i) in order.iter().take(r).enumerate() {
        out.set_column(k, &eig.eigenvectors.column(i));
    }
    fix_signs(&mut out);
    Ok(out)
}

/// Caps each rank at the product of the others, the largest multilinear rank
/// a Tucker core of those dimensions can realize.
fn realizable_ranks(ranks: &mut [usize]) {
    loop {
        let mut changed = false;
        for i in 0..ranks.len() {
            let others: usize = ranks.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, r)| *r).product();
            if ranks[i] > others {
                ranks[i] = others;
                changed = true;
            }
        }
        if !changed {
            return;
        }
    }
}

fn validate_ranks(dims: &[usize], ranks: &[usize]) -> Result<Vec<usize>> {
    if dims.len() != ranks.len() {
        return Err(Error::ShapeMismatch(format!("{} ranks for order-{} tensor", ranks.len(), dims.len())));
    }
    for (&r, &d) in ranks.iter().zip(dims) {
        check_rank(r, d)?;
    }
    let mut ranks = ranks.to_vec();
    realizable_ranks(&mut ranks);
    Ok(ranks)
}

/// Iteration controls for a Tucker fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepControl {
    pub sweeps: usize,
    /// Stop once the objective changes by less than `tol · ‖t‖²`.
    pub tol: f64,
}

impl SweepControl {
    /// Settings for a standalone fit.
    pub const STANDALONE: Self = Self { sweeps: 20, tol: 1e-8 };
    /// Settings used inside each ADMM iteration, where the background only
    /// needs to be improved.
    pub const INNER: Self = Self { sweeps: 2, tol: 0.0 };
}

/// Holistic Tucker model `core ×₁ U₁ ×₂ U₂ ×₃ U₃`.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerFactors {
    pub core: DenseTensor,
    pub factors: Vec<Matrix>,
}

impl TuckerFactors {
    pub fn reconstruct(&self) -> DenseTensor {
        let pairs: Vec<(usize, &Matrix)> = self.factors.iter().enumerate().collect();
        self.core.expand(&pairs).expect("factor shapes match core by construction")
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.factors.iter().map(|u| u.ncols()).collect()
    }
}

/// A fitted model plus the objective recorded after each sweep
/// (`objectives[0]` is the value at the HOSVD initialization).
#[derive(Debug, Clone)]
pub struct TuckerFit<M> {
    pub model: M,
    pub objectives: Vec<f64>,
}

/// All factors except `skip`, as `(mode, factor)` pairs.
fn others(factors: &[Matrix], skip: usize) -> Vec<(usize, &Matrix)> {
    factors.iter().enumerate().filter(|(m, _)| *m != skip).collect()
}

fn all_modes(factors: &[Matrix]) -> Vec<(usize, &Matrix)> {
    factors.iter().enumerate().collect()
}

fn hosvd_factors(t: &DenseTensor, ranks: &[usize]) -> Result<Vec<Matrix>> {
    ranks.iter().enumerate().map(|(m, &r)| top_singular_vectors(&t.unfold(m)?, r)).collect()
}

/// Classic HOOI for an order-3 tensor.
///
/// The objective tracked is `‖t − reconstruction‖_F`.
pub fn hooi3(t: &DenseTensor, ranks: [usize; 3], control: SweepControl) -> Result<TuckerFit<TuckerFactors>> {
    if t.order() != 3 {
        return Err(Error::ShapeMismatch(format!("hooi3 needs an order-3 tensor, got order {}", t.order())));
    }
    let ranks = validate_ranks(t.dims(), &ranks)?;
    let total = t.fro_norm().powi(2);
    let residual = |core: &DenseTensor| (total - core.fro_norm().powi(2)).max(0.0).sqrt();

    let mut factors = hosvd_factors(t, &ranks)?;
    let mut core = t.project(&all_modes(&factors))?;
    let mut objectives = vec![residual(&core)];
    for _ in 0..control.sweeps {
        for mode in 0..3 {
            let partial = t.project(&others(&factors, mode))?;
            factors[mode] = top_singular_vectors(&partial.unfold(mode)?, ranks[mode])?;
        }
        core = t.project(&all_modes(&factors))?;
        let obj = residual(&core);
        let prev = *objectives.last().expect("initial objective recorded");
        objectives.push(obj);
        if (prev - obj).abs() < control.tol * total.sqrt() {
            break;
        }
    }
    Ok(TuckerFit { model: TuckerFactors { core, factors }, objectives })
}

/// Ranks for the patch-group model. `group` is capped at each cluster's
/// patch count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupRanks {
    pub rows: usize,
    pub cols: usize,
    pub temporal: usize,
    pub group: usize,
}

impl GroupRanks {
    pub fn as_array(&self) -> [usize; 4] {
        [self.rows, self.cols, self.temporal, self.group]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterFactors {
    pub core: DenseTensor,
    pub rows: Matrix,
    pub cols: Matrix,
    pub group: Matrix,
}

/// Per-cluster cores and factors with a single shared temporal factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTuckerFactors {
    pub clusters: Vec<ClusterFactors>,
    pub temporal: Matrix,
}

impl GroupTuckerFactors {
    pub fn reconstruct(&self, p: usize) -> DenseTensor {
        let c = &self.clusters[p];
        c.core
            .expand(&[(0, &c.rows), (1, &c.cols), (2, &self.temporal), (3, &c.group)])
            .expect("factor shapes match core by construction")
    }

    pub fn reconstruct_all(&self) -> Vec<DenseTensor> {
        (0..self.clusters.len()).into_par_iter().map(|p| self.reconstruct(p)).collect()
    }
}

/// Sums matrices in slice order so the result does not depend on how the
/// terms were produced.
fn ordered_sum(terms: Vec<Matrix>, n: usize) -> Matrix {
    terms.into_iter().fold(Matrix::zeros(n, n), |acc, m| acc + m)
}

/// Joint HOOI over patch-group tensors of shape `w × w × D × N_p`.
///
/// Each sweep updates, per cluster, the row, column and group factors from
/// the projected tensors, then the shared temporal factor from the leading
/// eigenvectors of `Σₚ ZₚZₚᵀ`, and finally the cores. The tracked objective
/// is `Σₚ ½‖ℛₚ − reconstructionₚ‖²_F`. Per-cluster work runs in parallel;
/// the temporal Gram reduction is summed in ascending cluster order.
pub fn joint_hooi(
    clusters: &[DenseTensor],
    ranks: GroupRanks,
    control: SweepControl,
) -> Result<TuckerFit<GroupTuckerFactors>> {
    let first = clusters
        .first()
        .ok_or_else(|| Error::InvalidParameter("joint_hooi needs at least one cluster".into()))?;
    if clusters.iter().any(|c| c.order() != 4) {
        return Err(Error::ShapeMismatch("joint_hooi clusters must be order-4 tensors".into()));
    }
    let frames = first.dims()[2];
    if let Some(bad) = clusters.iter().find(|c| c.dims()[2] != frames) {
        return Err(Error::ShapeMismatch(format!(
            "inconsistent temporal extents {} and {}",
            frames,
            bad.dims()[2]
        )));
    }
    if ranks.group == 0 {
        return Err(Error::RankOutOfRange { rank: 0, max: first.dims()[3] });
    }
    let per_cluster: Vec<Vec<usize>> = clusters
        .iter()
        .map(|c| {
            let mut r = ranks.as_array();
            r[3] = r[3].min(c.dims()[3]);
            validate_ranks(c.dims(), &r)
        })
        .collect::<Result<_>>()?;
    // the temporal rank must be realizable in every cluster
    let r3 = per_cluster.iter().map(|r| r[2]).min().expect("non-empty");
    let per_cluster: Vec<Vec<usize>> = per_cluster
        .into_iter()
        .map(|mut r| {
            r[2] = r3;
            realizable_ranks(&mut r);
            r
        })
        .collect();
    let r3 = per_cluster.iter().map(|r| r[2]).min().expect("non-empty");

    let norms: Vec<f64> = clusters.iter().map(|c| c.fro_norm().powi(2)).collect();
    let total: f64 = norms.iter().sum();

    // HOSVD start; the shared factor comes from the concatenated mode-3 unfoldings.
    let mut local: Vec<[Matrix; 3]> = clusters
        .par_iter()
        .zip(per_cluster.par_iter())
        .map(|(c, r)| -> Result<[Matrix; 3]> {
            Ok([
                top_singular_vectors(&c.unfold(0)?, r[0])?,
                top_singular_vectors(&c.unfold(1)?, r[1])?,
                top_singular_vectors(&c.unfold(3)?, r[3])?,
            ])
        })
        .collect::<Result<_>>()?;
    let grams: Vec<Matrix> = clusters
        .par_iter()
        .map(|c| -> Result<Matrix> {
            let m = c.unfold(2)?;
            Ok(&m * m.transpose())
        })
        .collect::<Result<_>>()?;
    let mut temporal = top_eigenvectors(&ordered_sum(grams, frames), r3)?;

    let cores_and_objective = |local: &[[Matrix; 3]], temporal: &Matrix| -> Result<(Vec<DenseTensor>, f64)> {
        let cores: Vec<DenseTensor> = clusters
            .par_iter()
            .zip(local.par_iter())
            .map(|(c, [u1, u2, u4])| c.project(&[(0, u1), (1, u2), (2, temporal), (3, u4)]))
            .collect::<Result<_>>()?;
        let captured: f64 = cores.iter().map(|g| g.fro_norm().powi(2)).sum();
        Ok((cores, 0.5 * (total - captured).max(0.0)))
    };

    let (mut cores, obj0) = cores_and_objective(&local, &temporal)?;
    let mut objectives = vec![obj0];
    for _ in 0..control.sweeps {
        let updated: Vec<([Matrix; 3], Matrix)> = clusters
            .par_iter()
            .zip(local.par_iter())
            .zip(per_cluster.par_iter())
            .map(|((c, [_, u2, u4]), r)| -> Result<([Matrix; 3], Matrix)> {
                let u1 = top_singular_vectors(&c.project(&[(1, u2), (2, &temporal), (3, u4)])?.unfold(0)?, r[0])?;
                let u2 = top_singular_vectors(&c.project(&[(0, &u1), (2, &temporal), (3, u4)])?.unfold(1)?, r[1])?;
                let u4 = top_singular_vectors(&c.project(&[(0, &u1), (1, &u2), (2, &temporal)])?.unfold(3)?, r[3])?;
                let z = c.project(&[(0, &u1), (1, &u2), (3, &u4)])?.unfold(2)?;
                let gram = &z * z.transpose();
                Ok(([u1, u2, u4], gram))
            })
            .collect::<Result<_>>()?;
        let mut grams = Vec::with_capacity(updated.len());
        local.clear();
        for (f, g) in updated {
            local.push(f);
            grams.push(g);
        }
        temporal = top_eigenvectors(&ordered_sum(grams, frames), r3)?;
        let (c, obj) = cores_and_objective(&local, &temporal)?;
        cores = c;
        let prev = *objectives.last().expect("initial objective recorded");
        objectives.push(obj);
        if (prev - obj).abs() < control.tol * total {
            break;
        }
    }

    let clusters = cores
        .into_iter()
        .zip(local)
        .map(|(core, [rows, cols, group])| ClusterFactors { core, rows, cols, group })
        .collect();
    Ok(TuckerFit { model: GroupTuckerFactors { clusters, temporal }, objectives })
}
