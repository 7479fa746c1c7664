//! Randomly permuted, subsampled Walsh-Hadamard sensing operators.
//!
//! Each block (one per frame in frame-wise mode, a single block for the whole
//! volume in holistic mode) is zero-padded to a power of two `n`, permuted,
//! transformed by the orthonormal Walsh-Hadamard transform and subsampled.
//!
//! # Reproducibility contract
//!
//! The operator is a pure function of `(mode, dims, ratio, seed)`:
//!
//! * Block `b` draws from ChaCha20 keyed with `seed` as little-endian bytes in
//!   the first 8 key bytes (the remaining 24 are zero), on stream `b`.
//! * Bounded integers in `[0, k)` use Lemire's unbiased multiply-and-reject
//!   method on successive `next_u64` outputs.
//! * The permutation is a descending Fisher-Yates shuffle of `0..n`;
//!   `perm[i]` is the padded-signal index that lands at position `i`.
//! * Row 0, the DC coefficient, is always selected. Continuing the same
//!   stream, the other `M_b − 1` rows are the first entries of an ascending
//!   partial Fisher-Yates shuffle of `1..n`. Rows are stored sorted.
//! * `M_b = max(1, round_half_up(ratio · L_b))` where `L_b` is the unpadded
//!   block length.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::dot;

/// In-place orthonormal fast Walsh-Hadamard transform. Self-inverse.
pub fn fwht_in_place(v: &mut [f64]) -> Result<()> {
    let n = v.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for i in start..start + h {
                let (a, b) = (v[i], v[i + h]);
                v[i] = a + b;
                v[i + h] = a - b;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / (n as f64).sqrt();
    v.iter_mut().for_each(|x| *x *= scale);
    Ok(())
}

pub fn fwht(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    fwht_in_place(&mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingMode {
    FrameWise,
    Holistic,
}

impl SensingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SensingMode::FrameWise => "frame_wise",
            SensingMode::Holistic => "holistic",
        }
    }
}

/// Everything needed to rebuild an operator bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorDescriptor {
    pub mode: SensingMode,
    pub dims: [usize; 3],
    pub ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    len: usize,
    padded: usize,
    perm: Vec<usize>,
    rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressiveOperator {
    descriptor: OperatorDescriptor,
    blocks: Vec<Block>,
    offsets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub values: Vec<f64>,
    pub descriptor: OperatorDescriptor,
}

fn block_rng(seed: u64, block: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(block);
    rng
}

/// Unbiased integer in `[0, bound)`.
fn bounded(rng: &mut impl RngCore, bound: usize) -> usize {
    let bound = bound as u64;
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let m = rng.next_u64() as u128 * bound as u128;
        if (m as u64) >= threshold {
            return (m >> 64) as usize;
        }
    }
}

/// `max(1, round_half_up(ratio · len))`.
pub fn measurement_count(ratio: f64, len: usize) -> usize {
    ((ratio * len as f64 + 0.5).floor() as usize).clamp(1, len)
}

impl Block {
    fn build(len: usize, ratio: f64, rng: &mut ChaCha20Rng) -> Self {
        let padded = len.next_power_of_two();
        let mut perm: Vec<usize> = (0..padded).collect();
        for i in (1..padded).rev() {
            let j = bounded(rng, i + 1);
            perm.swap(i, j);
        }
        let m = measurement_count(ratio, len);
        // row 0 (the block sum) is always kept
        let mut pool: Vec<usize> = (1..padded).collect();
        for i in 0..m - 1 {
            let j = i + bounded(rng, pool.len() - i);
            pool.swap(i, j);
        }
        let mut rows = vec![0];
        rows.extend_from_slice(&pool[..m - 1]);
        rows.sort_unstable();
        Self { len, padded, perm, rows }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut z = vec![0.0; self.padded];
        for (zi, &src) in z.iter_mut().zip(&self.perm) {
            if src < self.len {
                *zi = x[src];
            }
        }
        fwht_in_place(&mut z).expect("padded length is a power of two");
        for (o, &r) in out.iter_mut().zip(&self.rows) {
            *o = z[r];
        }
    }

    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        let mut z = vec![0.0; self.padded];
        for (&v, &r) in y.iter().zip(&self.rows) {
            z[r] = v;
        }
        fwht_in_place(&mut z).expect("padded length is a power of two");
        for (zi, &dst) in z.iter().zip(&self.perm) {
            if dst < self.len {
                out[dst] = *zi;
            }
        }
    }
}

impl CompressiveOperator {
    pub fn new(mode: SensingMode, dims: [usize; 3], ratio: f64, seed: u64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::InvalidParameter(format!("sampling ratio must be in (0, 1], got {ratio}")));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidParameter(format!("dims must be positive, got {dims:?}")));
        }
        let [h, w, d] = dims;
        let (count, len) = match mode {
            SensingMode::FrameWise => (d, h * w),
            SensingMode::Holistic => (1, h * w * d),
        };
        let blocks: Vec<Block> = (0..count)
            .into_par_iter()
            .map(|b| Block::build(len, ratio, &mut block_rng(seed, b as u64)))
            .collect();
        let mut offsets = Vec::with_capacity(count + 1);
        offsets.push(0);
        for b in &blocks {
            offsets.push(offsets.last().unwrap() + b.rows.len());
        }
        Ok(Self { descriptor: OperatorDescriptor { mode, dims, ratio, seed }, blocks, offsets })
    }

    pub fn from_descriptor(d: &OperatorDescriptor) -> Result<Self> {
        Self::new(d.mode, d.dims, d.ratio, d.seed)
    }

    pub fn descriptor(&self) -> &OperatorDescriptor {
        &self.descriptor
    }

    /// Total number of measurements `M`.
    pub fn measurements(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn signal_len(&self) -> usize {
        self.descriptor.dims.iter().product()
    }

    pub fn block_measurements(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.rows.len()).collect()
    }

    /// True when no block needs padding, in which case `A A* = I` exactly.
    pub fn is_row_orthonormal(&self) -> bool {
        self.blocks.iter().all(|b| b.len == b.padded)
    }

    pub fn apply(&self, x: &[f64]) -> Result<MeasurementSet> {
        if x.len() != self.signal_len() {
            return Err(Error::ShapeMismatch(format!(
                "signal has {} entries, operator expects {}",
                x.len(),
                self.signal_len()
            )));
        }
        let mut values = vec![0.0; self.measurements()];
        let len = self.blocks[0].len;
        let mut chunks: Vec<&mut [f64]> = Vec::with_capacity(self.blocks.len());
        let mut rest = values.as_mut_slice();
        for b in &self.blocks {
            let (head, tail) = rest.split_at_mut(b.rows.len());
            chunks.push(head);
            rest = tail;
        }
        chunks
            .into_par_iter()
            .zip(self.blocks.par_iter())
            .enumerate()
            .for_each(|(i, (out, b))| b.apply(&x[i * len..(i + 1) * len], out));
        Ok(MeasurementSet { values, descriptor: self.descriptor })
    }

    pub fn adjoint(&self, y: &MeasurementSet) -> Result<Vec<f64>> {
        if y.descriptor != self.descriptor {
            return Err(Error::ShapeMismatch("measurements were taken with a different operator".into()));
        }
        self.adjoint_values(&y.values)
    }

    pub fn adjoint_values(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.measurements() {
            return Err(Error::ShapeMismatch(format!(
                "{} measurements supplied, operator produces {}",
                y.len(),
                self.measurements()
            )));
        }
        let len = self.blocks[0].len;
        let mut out = vec![0.0; self.signal_len()];
        out.par_chunks_mut(len)
            .zip(self.blocks.par_iter())
            .enumerate()
            .for_each(|(i, (chunk, b))| b.adjoint(&y[self.offsets[i]..self.offsets[i + 1]], chunk));
        Ok(out)
    }

    /// `A*(A(x))`.
    pub fn normal(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.apply(x)?;
        self.adjoint_values(&y.values)
    }
}

impl MeasurementSet {
    pub fn inner(&self, other: &[f64]) -> f64 {
        dot(&self.values, other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::norm;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5).collect()
    }

    #[test]
    fn fwht_of_delta_is_flat() {
        assert_eq!(fwht(&[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![0.5; 4]);
        assert!(matches!(fwht(&[1.0, 2.0, 3.0]), Err(Error::NotPowerOfTwo(3))));
    }

    #[test]
    fn fwht_is_an_orthonormal_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random(&mut rng, 64);
        let w = fwht(&v).unwrap();
        assert!((norm(&w) - norm(&v)).abs() < 1e-12);
        let back = fwht(&w).unwrap();
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fwht_matches_explicit_hadamard() {
        // H_4 / 2 in natural (Sylvester) ordering
        let h = [[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0], [1.0, -1.0, -1.0, 1.0]];
        let v = [0.3, -1.2, 2.0, 0.7];
        let got = fwht(&v).unwrap();
        for (row, g) in h.iter().zip(&got) {
            let e: f64 = row.iter().zip(&v).map(|(a, b)| a * b / 2.0).sum();
            assert!((e - g).abs() < 1e-15);
        }
    }

    #[test]
    fn measurement_counts() {
        let op = CompressiveOperator::new(SensingMode::FrameWise, [64, 64, 3], 0.2, 9).unwrap();
        assert_eq!(op.block_measurements(), vec![819; 3]);
        assert_eq!(measurement_count(1.0 / 30.0, 4), 1);
        assert_eq!(measurement_count(0.5, 5), 3); // 2.5 rounds up
        let op = CompressiveOperator::new(SensingMode::Holistic, [4, 4, 2], 0.25, 9).unwrap();
        assert_eq!(op.measurements(), 8);
    }

    #[test]
    fn every_block_keeps_the_dc_row() {
        for (mode, ratio) in [(SensingMode::FrameWise, 0.01), (SensingMode::FrameWise, 0.3), (SensingMode::Holistic, 0.05)] {
            let op = CompressiveOperator::new(mode, [8, 6, 5], ratio, 9).unwrap();
            for b in &op.blocks {
                assert_eq!(b.rows[0], 0);
                assert!(b.rows.windows(2).all(|w| w[0] < w[1]));
                assert!(*b.rows.last().unwrap() < b.padded);
            }
        }
        // a constant signal is measured in every frame
        let op = CompressiveOperator::new(SensingMode::FrameWise, [4, 4, 3], 1.0 / 16.0, 2).unwrap();
        let y = op.apply(&vec![2.0; 48]).unwrap();
        assert_eq!(y.values, vec![8.0; 3]);
    }

    #[test]
    fn rejects_invalid_ratio() {
        for r in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(CompressiveOperator::new(SensingMode::FrameWise, [4, 4, 2], r, 1).is_err());
        }
    }

    #[test]
    fn construction_is_deterministic_and_seed_dependent() {
        let a = CompressiveOperator::new(SensingMode::FrameWise, [8, 8, 4], 0.3, 42).unwrap();
        let b = CompressiveOperator::new(SensingMode::FrameWise, [8, 8, 4], 0.3, 42).unwrap();
        let c = CompressiveOperator::new(SensingMode::FrameWise, [8, 8, 4], 0.3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.blocks, c.blocks);
        // distinct frames use distinct streams
        assert_ne!(a.blocks[0].perm, a.blocks[1].perm);
        for blk in &a.blocks {
            let mut p = blk.perm.clone();
            p.sort_unstable();
            assert_eq!(p, (0..blk.padded).collect::<Vec<_>>());
        }
    }

    #[test]
    fn full_sampling_is_orthogonal() {
        let op = CompressiveOperator::new(SensingMode::FrameWise, [4, 4, 3], 1.0, 5).unwrap();
        assert_eq!(op.measurements(), 48);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, 48);
        let back = op.adjoint(&op.apply(&x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_and_linearity() {
        let op = CompressiveOperator::new(SensingMode::Holistic, [3, 5, 2], 0.4, 8).unwrap();
        assert!(op.apply(&[0.0; 30]).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(op.adjoint_values(&vec![0.0; op.measurements()]).unwrap().iter().all(|&v| v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, z) = (random(&mut rng, 30), random(&mut rng, 30));
        let sum: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
        let (ax, az, asum) = (op.apply(&x).unwrap(), op.apply(&z).unwrap(), op.apply(&sum).unwrap());
        for i in 0..asum.values.len() {
            assert!((asum.values[i] - ax.values[i] - az.values[i]).abs() < 1e-12);
        }
        assert!(op.apply(&x[..29]).is_err());
        assert!(op.adjoint_values(&[1.0]).is_err());
    }

    #[test]
    fn tiny_operator_matches_materialized_matrix() {
        let op = CompressiveOperator::new(SensingMode::FrameWise, [2, 2, 1], 1.0, 77).unwrap();
        // columns of the materialized matrix from basis vectors
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                let mut e = vec![0.0; 4];
                e[i] = 1.0;
                op.apply(&e).unwrap().values
            })
            .collect();
        // independent construction: S · H · P from the block's own tables
        let blk = &op.blocks[0];
        let h = |r: usize, c: usize| if (r & c).count_ones() % 2 == 0 { 0.5 } else { -0.5 };
        for (i, col) in cols.iter().enumerate() {
            for (k, &row) in blk.rows.iter().enumerate() {
                let pos = blk.perm.iter().position(|&p| p == i).unwrap();
                assert!((col[k] - h(row, pos)).abs() < 1e-15);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random(&mut rng, 4);
        let y = op.apply(&x).unwrap();
        for k in 0..4 {
            let e: f64 = (0..4).map(|i| cols[i][k] * x[i]).sum();
            assert!((e - y.values[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn padded_blocks_keep_exact_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for (mode, dims) in [(SensingMode::FrameWise, [3, 5, 2]), (SensingMode::Holistic, [3, 3, 3])] {
            let op = CompressiveOperator::new(mode, dims, 0.5, 3).unwrap();
            assert!(!op.is_row_orthonormal());
            let x = random(&mut rng, op.signal_len());
            let y = random(&mut rng, op.measurements());
            let lhs = dot(&op.apply(&x).unwrap().values, &y);
            let rhs = dot(&x, &op.adjoint_values(&y).unwrap());
            assert!((lhs - rhs).abs() < 1e-12);
            assert!(norm(&op.apply(&x).unwrap().values) <= norm(&x) + 1e-12);
        }
    }
}
