//! ADMM solvers for the holistic and patch-group background models.
//!
//! Both solvers minimise `λ·‖f‖₁ + ½‖e‖²` subject to `y = A(x₀)`,
//! `x₀ = x₁ + x₂ + e`, `f = D(x₂)` with the background `x₁` restricted to a
//! Tucker model, cycling through the x₀, background, e, x₂ and f
//! sub-problems followed by multiplier ascent and penalty adaptation.

use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::compressive::{CompressiveOperator, MeasurementSet};
use crate::error::{Error, Result};
use crate::linalg::{hooi3, joint_hooi, GroupRanks, GroupTuckerFactors, SweepControl, TuckerFactors};
use crate::patch::{extract_origins, gather_all, knn_cluster, scatter_average, Origin, PatchClustering, PatchGeometry};
use crate::tensor::{dist, dot, norm, DenseTensor};
use crate::tv::{diff, diff_adjoint, soft_shrink_field, tv_norm, DiffField, TvSolver};

const DIVERGENCE_NORM: f64 = 1e12;
const CG_TOL: f64 = 1e-8;
const CG_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// TV weight.
    pub lambda: f64,
    /// Holistic Tucker ranks; `None` selects `(⌈0.65H⌉, ⌈0.65W⌉, 1)`.
    pub ranks: Option<[usize; 3]>,
    /// Patch-group ranks (rows, cols, temporal, group).
    pub patch_ranks: [usize; 4],
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    /// Initial penalties; `None` derives them from the measurements.
    pub beta_y: Option<f64>,
    pub beta_x0: Option<f64>,
    pub beta_f: Option<f64>,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub recluster_period: usize,
    pub geometry: PatchGeometry,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            ranks: None,
            patch_ranks: [8, 8, 1, 21],
            gamma: 1.1,
            c1: 1.15,
            c2: 0.95,
            beta_y: None,
            beta_x0: None,
            beta_f: None,
            max_iter: 200,
            rel_tol: 1e-5,
            recluster_period: 8,
            geometry: PatchGeometry::default(),
        }
    }
}

fn positive(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(b) if !(b > 0.0 && b.is_finite()) => {
            Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {b}")))
        }
        _ => Ok(()),
    }
}

impl SolverParams {
    /// Ranks used for an `H × W × D` volume.
    pub fn holistic_ranks(&self, [h, w, _]: [usize; 3]) -> [usize; 3] {
        self.ranks.unwrap_or([(0.65 * h as f64).ceil() as usize, (0.65 * w as f64).ceil() as usize, 1])
    }

    pub fn group_ranks(&self) -> GroupRanks {
        let [rows, cols, temporal, group] = self.patch_ranks;
        GroupRanks { rows, cols, temporal, group }
    }

    pub fn validate(&self, dims: [usize; 3]) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be at least 1, got {}", self.gamma));
        }
        if !(self.c1 > 1.0 && self.c1.is_finite()) {
            return bad(format!("c1 must exceed 1, got {}", self.c1));
        }
        if !(self.c2 > 0.0 && self.c2 < 1.0) {
            return bad(format!("c2 must lie in (0, 1), got {}", self.c2));
        }
        if !(self.rel_tol >= 0.0) {
            return bad(format!("rel_tol must be non-negative, got {}", self.rel_tol));
        }
        if self.max_iter == 0 || self.recluster_period == 0 {
            return bad("max_iter and recluster_period must be positive".into());
        }
        positive("beta_y", self.beta_y)?;
        positive("beta_x0", self.beta_x0)?;
        positive("beta_f", self.beta_f)?;
        for (&r, &d) in self.holistic_ranks(dims).iter().zip(&dims) {
            if r == 0 || r > d {
                return Err(Error::RankOutOfRange { rank: r, max: d });
            }
        }
        Ok(())
    }

    /// Extra checks for the patch-group model.
    pub fn validate_patch(&self, dims: [usize; 3]) -> Result<()> {
        self.validate(dims)?;
        self.geometry.validate(dims[0], dims[1])?;
        let w = self.geometry.patch;
        let [r1, r2, r3, r4] = self.patch_ranks;
        for (r, max) in [(r1, w), (r2, w), (r3, dims[2]), (r4, self.geometry.group)] {
            if r == 0 || r > max {
                return Err(Error::RankOutOfRange { rank: r, max });
            }
        }
        Ok(())
    }
}

/// Fitted background model of the final iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum BackgroundModel {
    Holistic(TuckerFactors),
    PatchGroup { factors: GroupTuckerFactors, clustering: PatchClustering },
}

/// Full iterate of the solver; enough to resume a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub dims: [usize; 3],
    pub x0: Vec<f64>,
    /// Background `Vec(ℒ)`.
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub e: Vec<f64>,
    pub f: DiffField,
    pub lambda_f: DiffField,
    pub lambda_x0: Vec<f64>,
    pub lambda_y: Vec<f64>,
    pub beta_f: f64,
    pub beta_x0: f64,
    pub beta_y: f64,
    /// Residual norms of the previous iteration, ordered y, x0, f.
    pub prev_residuals: [f64; 3],
    pub iteration: usize,
    pub background: Option<BackgroundModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub rel_chg_x0: f64,
    pub rel_chg_x2: f64,
    pub n_res_y: f64,
    pub n_res_x0: f64,
    pub n_res_f: f64,
    pub beta_y: f64,
    pub objective: f64,
}

pub const DIAGNOSTICS_HEADER: &str = "iter,relChg_x0,relChg_x2,nRes_y,nRes_x0,nRes_f,beta_y,objective";

pub fn write_diagnostics(records: &[IterationRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{DIAGNOSTICS_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.iter, r.rel_chg_x0, r.rel_chg_x2, r.n_res_y, r.n_res_x0, r.n_res_f, r.beta_y, r.objective
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Reconstruction.
    pub x0: DenseTensor,
    /// Background.
    pub x1: DenseTensor,
    /// Foreground.
    pub x2: DenseTensor,
    /// Disturbance.
    pub e: DenseTensor,
    pub diagnostics: Vec<IterationRecord>,
    pub converged: bool,
    /// `‖x₀ − x₁ − x₂ − e‖` at termination.
    pub primal_residual: f64,
    /// `‖y − A(x₀)‖` at initialization and at termination.
    pub initial_measurement_residual: f64,
    pub final_measurement_residual: f64,
    pub wall_time: Duration,
    pub state: AdmmState,
}

fn rel_chg(new: &[f64], old: &[f64]) -> f64 {
    dist(new, old) / norm(old).max(1.0)
}

fn guard(v: &[f64], iteration: usize, step: &'static str) -> Result<()> {
    let n = norm(v);
    if !n.is_finite() || n > DIVERGENCE_NORM {
        return Err(Error::Diverged { iteration, step });
    }
    Ok(())
}

fn mean_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

fn default_beta(v: &[f64]) -> f64 {
    let m = mean_abs(v);
    if m > 0.0 {
        1e-5 / m
    } else {
        1e-5
    }
}

fn volume(dims: [usize; 3], v: Vec<f64>) -> DenseTensor {
    DenseTensor::from_vec(&dims, v).expect("length tracks dims")
}

fn check_inputs(y: &MeasurementSet, op: &CompressiveOperator) -> Result<[usize; 3]> {
    if y.descriptor != *op.descriptor() {
        return Err(Error::ShapeMismatch("measurements were taken with a different operator".into()));
    }
    if y.values.len() != op.measurements() {
        return Err(Error::ShapeMismatch(format!(
            "{} measurements for an operator producing {}",
            y.values.len(),
            op.measurements()
        )));
    }
    if y.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(op.descriptor().dims)
}

/// Starting point: Tucker fit of `A*(y)` as background, the remainder as
/// foreground, everything else zero.
pub fn initial_state(y: &MeasurementSet, op: &CompressiveOperator, params: &SolverParams) -> Result<AdmmState> {
    let dims = check_inputs(y, op)?;
    params.validate(dims)?;
    let aty = op.adjoint(y)?;
    let fit = hooi3(&volume(dims, aty.clone()), params.holistic_ranks(dims), SweepControl::STANDALONE)?;
    let x1 = fit.model.reconstruct().into_data();
    let x2: Vec<f64> = aty.iter().zip(&x1).map(|(a, l)| a - l).collect();
    let n = aty.len();
    Ok(AdmmState {
        dims,
        x0: vec![0.0; n],
        x1,
        x2,
        e: vec![0.0; n],
        f: DiffField::zeros(dims),
        lambda_f: DiffField::zeros(dims),
        lambda_x0: vec![0.0; n],
        lambda_y: vec![0.0; y.values.len()],
        beta_f: params.beta_f.unwrap_or_else(|| default_beta(&aty)),
        beta_x0: params.beta_x0.unwrap_or_else(|| default_beta(&aty)),
        beta_y: params.beta_y.unwrap_or_else(|| default_beta(&y.values)),
        prev_residuals: [f64::INFINITY; 3],
        iteration: 0,
        background: Some(BackgroundModel::Holistic(fit.model)),
    })
}

/// Background sub-problem: best model fit of the target volume.
trait BackgroundStep {
    fn fit(&mut self, target: &DenseTensor, current: &DenseTensor, iteration: usize) -> Result<DenseTensor>;
    fn model(&self) -> Option<BackgroundModel>;
}

struct Holistic {
    ranks: [usize; 3],
    last: Option<TuckerFactors>,
}

impl BackgroundStep for Holistic {
    fn fit(&mut self, target: &DenseTensor, _current: &DenseTensor, _iteration: usize) -> Result<DenseTensor> {
        let fit = hooi3(target, self.ranks, SweepControl::INNER)?;
        let out = fit.model.reconstruct();
        self.last = Some(fit.model);
        Ok(out)
    }

    fn model(&self) -> Option<BackgroundModel> {
        self.last.clone().map(BackgroundModel::Holistic)
    }
}

struct PatchGroup {
    geometry: PatchGeometry,
    ranks: GroupRanks,
    period: usize,
    origins: Vec<Origin>,
    clustering: PatchClustering,
    last: Option<GroupTuckerFactors>,
}

impl BackgroundStep for PatchGroup {
    fn fit(&mut self, target: &DenseTensor, current: &DenseTensor, iteration: usize) -> Result<DenseTensor> {
        // the clustering built at construction serves iteration 1
        if iteration > 1 && (iteration - 1).is_multiple_of(self.period) {
            self.clustering = knn_cluster(current, &self.origins, &self.geometry)?;
        }
        let groups = gather_all(target, &self.clustering)?;
        let fit = joint_hooi(&groups, self.ranks, SweepControl::INNER)?;
        let out = scatter_average(&fit.model.reconstruct_all(), &self.clustering)?;
        self.last = Some(fit.model);
        Ok(out)
    }

    fn model(&self) -> Option<BackgroundModel> {
        self.last
            .clone()
            .map(|factors| BackgroundModel::PatchGroup { factors, clustering: self.clustering.clone() })
    }
}

/// Solves `(β_x0·I + β_y·A*A)·x = c` by conjugate gradients from `x`.
fn cg_normal(op: &CompressiveOperator, beta_x0: f64, beta_y: f64, c: &[f64], x: &mut [f64]) -> Result<()> {
    let apply = |v: &[f64]| -> Result<Vec<f64>> {
        let n = op.normal(v)?;
        Ok(v.iter().zip(&n).map(|(a, b)| beta_x0 * a + beta_y * b).collect())
    };
    let ax = apply(x)?;
    let mut r: Vec<f64> = c.iter().zip(&ax).map(|(a, b)| a - b).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = CG_TOL * norm(c).max(f64::MIN_POSITIVE);
    for _ in 0..CG_MAX_ITER {
        if rr.sqrt() <= stop {
            break;
        }
        let ap = apply(&p)?;
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Ok(())
}

fn run(
    y: &MeasurementSet,
    op: &CompressiveOperator,
    params: &SolverParams,
    mut s: AdmmState,
    step: &mut dyn BackgroundStep,
) -> Result<SolveResult> {
    let start = Instant::now();
    let dims = s.dims;
    let tv = TvSolver::new(dims);
    let closed_form = op.is_row_orthonormal();
    let residual_y = |x0: &[f64]| -> Result<f64> { Ok(dist(&y.values, &op.apply(x0)?.values)) };
    let initial_measurement_residual = residual_y(&s.x0)?;
    let mut diagnostics = Vec::new();
    let mut converged = false;
    let mut primal_residual = dist(&s.x0, &s.x1.iter().zip(&s.x2).zip(&s.e).map(|((a, b), c)| a + b + c).collect::<Vec<_>>());
    let first = s.iteration + 1;

    for it in first..first + params.max_iter {
        s.iteration = it;
        let (bx0, by, bf) = (s.beta_x0, s.beta_y, s.beta_f);

        // x0
        let mut rhs_y: Vec<f64> = y.values.iter().zip(&s.lambda_y).map(|(v, l)| by * v - l).collect();
        let at_rhs = op.adjoint_values(&rhs_y)?;
        let c: Vec<f64> = (0..s.x0.len())
            .map(|i| s.lambda_x0[i] + bx0 * (s.x2[i] + s.e[i] + s.x1[i]) + at_rhs[i])
            .collect();
        let x0_prev = s.x0.clone();
        if closed_form {
            let ac = op.normal(&c)?;
            let k = by / (bx0 + by);
            s.x0 = c.iter().zip(&ac).map(|(ci, ai)| (ci - k * ai) / bx0).collect();
        } else {
            cg_normal(op, bx0, by, &c, &mut s.x0)?;
        }
        guard(&s.x0, it, "x0")?;

        // background
        let target: Vec<f64> =
            (0..s.x0.len()).map(|i| s.x0[i] - s.x2[i] - s.e[i] - s.lambda_x0[i] / bx0).collect();
        let current = volume(dims, std::mem::take(&mut s.x1));
        s.x1 = step.fit(&volume(dims, target), &current, it)?.into_data();
        guard(&s.x1, it, "background")?;

        // e
        let scale = bx0 / (1.0 + bx0);
        s.e = (0..s.x0.len())
            .map(|i| scale * (s.x0[i] - s.x2[i] - s.x1[i] - s.lambda_x0[i] / bx0))
            .collect();
        guard(&s.e, it, "e")?;

        // x2
        let mut g = s.f.clone();
        for (gp, lp) in g.parts_mut().into_iter().zip(s.lambda_f.parts()) {
            for (a, l) in gp.iter_mut().zip(lp) {
                *a = bf * *a - l;
            }
        }
        let dg = diff_adjoint(&g)?;
        let cb: Vec<f64> = (0..s.x0.len())
            .map(|i| bx0 * (s.x0[i] - s.x1[i] - s.e[i]) - s.lambda_x0[i] + dg.data()[i])
            .collect();
        let x2_prev = std::mem::take(&mut s.x2);
        s.x2 = tv.solve(&cb, bx0, bf)?;
        guard(&s.x2, it, "x2")?;

        // f
        let dx2 = diff(&volume(dims, s.x2.clone()))?;
        let mut shifted = dx2.clone();
        shifted.axpy(1.0 / bf, &s.lambda_f);
        s.f = soft_shrink_field(&shifted, params.lambda / bf);
        if !s.f.is_finite() || s.f.norm() > DIVERGENCE_NORM {
            return Err(Error::Diverged { iteration: it, step: "f" });
        }

        // multipliers
        let mut res_f = s.f.clone();
        res_f.axpy(-1.0, &dx2);
        s.lambda_f.axpy(-params.gamma * bf, &res_f);
        let res_x0: Vec<f64> = (0..s.x0.len()).map(|i| s.x0[i] - s.x1[i] - s.x2[i] - s.e[i]).collect();
        for (l, r) in s.lambda_x0.iter_mut().zip(&res_x0) {
            *l -= params.gamma * bx0 * r;
        }
        let ax0 = op.apply(&s.x0)?;
        rhs_y.clear();
        rhs_y.extend(y.values.iter().zip(&ax0.values).map(|(a, b)| a - b));
        for (l, r) in s.lambda_y.iter_mut().zip(&rhs_y) {
            *l -= params.gamma * by * r;
        }

        // penalties
        let residuals = [norm(&rhs_y), norm(&res_x0), res_f.norm()];
        for (k, beta) in [&mut s.beta_y, &mut s.beta_x0, &mut s.beta_f].into_iter().enumerate() {
            if residuals[k] > params.c2 * s.prev_residuals[k] {
                *beta *= params.c1;
            }
        }
        s.prev_residuals = residuals;
        primal_residual = residuals[1];

        let rel_chg_x0 = rel_chg(&s.x0, &x0_prev);
        let objective = params.lambda * tv_norm(&volume(dims, s.x2.clone()))? + 0.5 * dot(&s.e, &s.e);
        diagnostics.push(IterationRecord {
            iter: it,
            rel_chg_x0,
            rel_chg_x2: rel_chg(&s.x2, &x2_prev),
            n_res_y: residuals[0],
            n_res_x0: residuals[1],
            n_res_f: residuals[2],
            beta_y: s.beta_y,
            objective,
        });
        if rel_chg_x0 < params.rel_tol {
            converged = true;
            break;
        }
    }
    if let Some(m) = step.model() {
        s.background = Some(m);
    }
    let final_measurement_residual = residual_y(&s.x0)?;
    Ok(SolveResult {
        x0: volume(dims, s.x0.clone()),
        x1: volume(dims, s.x1.clone()),
        x2: volume(dims, s.x2.clone()),
        e: volume(dims, s.e.clone()),
        diagnostics,
        converged,
        primal_residual,
        initial_measurement_residual,
        final_measurement_residual,
        wall_time: start.elapsed(),
        state: s,
    })
}

/// Holistic-model solve.
pub fn solve_h(y: &MeasurementSet, op: &CompressiveOperator, params: &SolverParams) -> Result<SolveResult> {
    let state = initial_state(y, op, params)?;
    let mut step = Holistic { ranks: params.holistic_ranks(state.dims), last: None };
    run(y, op, params, state, &mut step)
}

/// Patch-group solve, warm-started from a holistic result (computed here
/// when `init` is `None`). The warm start carries over every iterate,
/// multiplier and penalty; iteration numbering restarts at 1.
pub fn solve_pg(
    y: &MeasurementSet,
    op: &CompressiveOperator,
    params: &SolverParams,
    init: Option<&SolveResult>,
) -> Result<SolveResult> {
    let dims = check_inputs(y, op)?;
    params.validate_patch(dims)?;
    let owned;
    let init = match init {
        Some(r) => r,
        None => {
            owned = solve_h(y, op, params)?;
            &owned
        }
    };
    if init.state.dims != dims || init.state.lambda_y.len() != y.values.len() {
        return Err(Error::ShapeMismatch("warm start does not match the measurements".into()));
    }
    let mut state = init.state.clone();
    state.iteration = 0;
    let origins = extract_origins(dims, &params.geometry)?;
    let clustering = knn_cluster(&init.x1, &origins, &params.geometry)?;
    let mut step = PatchGroup {
        geometry: params.geometry,
        ranks: params.group_ranks(),
        period: params.recluster_period,
        origins,
        clustering,
        last: None,
    };
    run(y, op, params, state, &mut step)
}
