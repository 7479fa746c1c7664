//! Nonlocal patch groups.
//!
//! A patch is a `w × w` spatial window spanning every frame. Patch origins
//! form a grid with step `d`, plus flush origins at the far edges so the
//! frame is fully covered. Each origin seeds one cluster of its `N` nearest
//! neighbours (squared Euclidean distance on raw intensities) among the
//! origins inside an `S × S` window centred on the seed. Origins are
//! zero-based `(row, col)` pairs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;
use crate::tv::VideoVolume;

pub type Origin = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    /// Patch side `w`.
    pub patch: usize,
    /// Sliding step `d`.
    pub step: usize,
    /// Search window side `S`.
    pub window: usize,
    /// Patches per cluster `N`.
    pub group: usize,
}

impl Default for PatchGeometry {
    fn default() -> Self {
        Self { patch: 8, step: 7, window: 36, group: 45 }
    }
}

impl PatchGeometry {
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.patch == 0 || self.patch > height.min(width) {
            return Err(Error::InvalidParameter(format!(
                "patch side {} must be in 1..={}",
                self.patch,
                height.min(width)
            )));
        }
        if self.step == 0 || self.group == 0 {
            return Err(Error::InvalidParameter("patch step and group size must be positive".into()));
        }
        if self.step > self.patch {
            return Err(Error::InvalidParameter(format!(
                "step {} larger than patch {} leaves uncovered voxels",
                self.step, self.patch
            )));
        }
        if self.window < self.patch {
            return Err(Error::InvalidParameter(format!(
                "search window {} smaller than patch {}",
                self.window, self.patch
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchClustering {
    pub geometry: PatchGeometry,
    pub dims: [usize; 3],
    /// The index set of patch origins.
    pub origins: Vec<Origin>,
    /// One cluster per origin; the seed is always first.
    pub clusters: Vec<Vec<Origin>>,
    /// Per-cluster count of neighbours missing because the window held
    /// fewer than `N` origins.
    pub shortfall: Vec<usize>,
    /// Number of cluster memberships covering each voxel.
    pub weights: Vec<f64>,
}

fn axis_origins(extent: usize, patch: usize, step: usize) -> Vec<usize> {
    let last = extent - patch;
    let mut out: Vec<usize> = (0..=last).step_by(step).collect();
    if *out.last().expect("origin 0 always present") != last {
        out.push(last);
    }
    out
}

/// Grid origins covering an `H × W` frame.
pub fn extract_origins(dims: [usize; 3], geom: &PatchGeometry) -> Result<Vec<Origin>> {
    let [h, w, _] = dims;
    geom.validate(h, w)?;
    let rows = axis_origins(h, geom.patch, geom.step);
    let cols = axis_origins(w, geom.patch, geom.step);
    Ok(rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect())
}

fn volume_dims(x: &VideoVolume) -> Result<[usize; 3]> {
    match *x.dims() {
        [h, w, d] => Ok([h, w, d]),
        _ => Err(Error::ShapeMismatch(format!("expected an H×W×D volume, got {:?}", x.dims()))),
    }
}

fn check_origin(o: Origin, dims: [usize; 3], patch: usize) -> Result<()> {
    if o.0 + patch > dims[0] || o.1 + patch > dims[1] {
        return Err(Error::InvalidClustering(format!("origin {o:?} puts a {patch}-patch outside {dims:?}")));
    }
    Ok(())
}

fn patch_vector(x: &[f64], dims: [usize; 3], o: Origin, patch: usize) -> Vec<f64> {
    let [h, w, d] = dims;
    let mut out = Vec::with_capacity(patch * patch * d);
    for k in 0..d {
        for b in 0..patch {
            let base = o.0 + h * (o.1 + b + w * k);
            out.extend_from_slice(&x[base..base + patch]);
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Groups similar patches of `background` into one cluster per origin.
pub fn knn_cluster(background: &VideoVolume, origins: &[Origin], geom: &PatchGeometry) -> Result<PatchClustering> {
    let dims = volume_dims(background)?;
    geom.validate(dims[0], dims[1])?;
    if background.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    for &o in origins {
        check_origin(o, dims, geom.patch)?;
    }
    let vectors: Vec<Vec<f64>> =
        origins.par_iter().map(|&o| patch_vector(background.data(), dims, o, geom.patch)).collect();
    let half = geom.window / 2;
    let ranked: Vec<(Vec<Origin>, usize)> = (0..origins.len())
        .into_par_iter()
        .map(|s| {
            let seed = origins[s];
            let mut cands: Vec<(f64, Origin)> = origins
                .iter()
                .zip(&vectors)
                .filter(|(o, _)| o.0.abs_diff(seed.0) <= half && o.1.abs_diff(seed.1) <= half)
                .map(|(&o, v)| (if o == seed { 0.0 } else { sq_dist(&vectors[s], v) }, o))
                .collect();
            // the seed sorts first among zero-distance ties only if it is lexicographically first,
            // so pull it to the front explicitly
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let pos = cands.iter().position(|c| c.1 == seed).expect("seed lies in its own window");
            let seed_entry = cands.remove(pos);
            cands.insert(0, seed_entry);
            let take = geom.group.min(cands.len());
            let shortfall = geom.group - take;
            (cands[..take].iter().map(|c| c.1).collect(), shortfall)
        })
        .collect();
    let (clusters, shortfall): (Vec<_>, Vec<_>) = ranked.into_iter().unzip();
    let weights = coverage(&clusters, dims, geom.patch);
    Ok(PatchClustering { geometry: *geom, dims, origins: origins.to_vec(), clusters, shortfall, weights })
}

fn coverage(clusters: &[Vec<Origin>], dims: [usize; 3], patch: usize) -> Vec<f64> {
    let [h, w, d] = dims;
    let mut frame = vec![0.0; h * w];
    for &(r, c) in clusters.iter().flatten() {
        for b in 0..patch {
            for a in 0..patch {
                frame[r + a + h * (c + b)] += 1.0;
            }
        }
    }
    let mut out = Vec::with_capacity(h * w * d);
    for _ in 0..d {
        out.extend_from_slice(&frame);
    }
    out
}

/// Stacks the patches of one cluster into a `w × w × D × n` tensor.
pub fn gather(x: &VideoVolume, cluster: &[Origin], patch: usize) -> Result<DenseTensor> {
    let dims = volume_dims(x)?;
    if cluster.is_empty() {
        return Err(Error::InvalidClustering("empty cluster".into()));
    }
    let mut data = Vec::with_capacity(patch * patch * dims[2] * cluster.len());
    for &o in cluster {
        check_origin(o, dims, patch)?;
        data.extend(patch_vector(x.data(), dims, o, patch));
    }
    DenseTensor::from_vec(&[patch, patch, dims[2], cluster.len()], data)
}

/// Gathers every cluster of `clustering` from `x`.
pub fn gather_all(x: &VideoVolume, clustering: &PatchClustering) -> Result<Vec<DenseTensor>> {
    clustering.clusters.par_iter().map(|c| gather(x, c, clustering.geometry.patch)).collect()
}

/// `Σₚ Rₚᵀ vec(ℒₚ)`: adds each cluster's patches back into a volume, in
/// ascending cluster order.
pub fn scatter_add(tensors: &[DenseTensor], clustering: &PatchClustering) -> Result<Vec<f64>> {
    let [h, w, d] = clustering.dims;
    let patch = clustering.geometry.patch;
    if tensors.len() != clustering.clusters.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} cluster tensors for {} clusters",
            tensors.len(),
            clustering.clusters.len()
        )));
    }
    let mut acc = vec![0.0; h * w * d];
    for (t, cluster) in tensors.iter().zip(&clustering.clusters) {
        if t.dims() != [patch, patch, d, cluster.len()] {
            return Err(Error::ShapeMismatch(format!(
                "cluster tensor {:?} does not match {} patches of side {patch}",
                t.dims(),
                cluster.len()
            )));
        }
        let mut src = t.data().chunks_exact(patch);
        for &(r, c) in cluster {
            for k in 0..d {
                for b in 0..patch {
                    let base = r + h * (c + b + w * k);
                    let line = src.next().expect("length checked above");
                    for (dst, v) in acc[base..base + patch].iter_mut().zip(line) {
                        *dst += v;
                    }
                }
            }
        }
    }
    Ok(acc)
}

/// `(Σₚ RₚᵀRₚ)⁻¹ Σₚ Rₚᵀ vec(ℒₚ)`: scatter followed by voxel-wise averaging.
pub fn scatter_average(tensors: &[DenseTensor], clustering: &PatchClustering) -> Result<VideoVolume> {
    let mut acc = scatter_add(tensors, clustering)?;
    for (i, (v, wt)) in acc.iter_mut().zip(&clustering.weights).enumerate() {
        if *wt == 0.0 {
            return Err(Error::InvalidClustering(format!("voxel {i} is not covered by any cluster")));
        }
        *v /= wt;
    }
    DenseTensor::from_vec(&clustering.dims, acc)
}
