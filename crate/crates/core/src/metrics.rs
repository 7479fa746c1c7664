//! Reconstruction and detection quality measures.
//!
//! PSNR by default uses the summed squared error over the frame in the
//! denominator, `10·log10(255² / Σ(I − Î)²)`. [`PsnrMode::Mean`] switches to
//! the usual per-pixel MSE form; the two differ by `10·log10(H·W)` dB.
//!
//! SSIM uses the constants `K1 = 0.01`, `K2 = 0.03`, `L = 255` and an 8×8
//! uniform window evaluated at every position (stride 1) with population
//! statistics; the score is the mean over windows.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix};

pub const PEAK: f64 = 255.0;
pub const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
const SSIM_C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsnrMode {
    #[default]
    Summed,
    Mean,
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("frames of {} and {} pixels", a.len(), b.len())));
    }
    Ok(())
}

/// PSNR of one frame in dB; `+∞` for identical frames.
pub fn psnr(reference: &[f64], test: &[f64], mode: PsnrMode) -> Result<f64> {
    same_len(reference, test)?;
    let sse: f64 = reference.iter().zip(test).map(|(a, b)| (a - b) * (a - b)).sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let denom = match mode {
        PsnrMode::Summed => sse,
        PsnrMode::Mean => sse / reference.len() as f64,
    };
    Ok(10.0 * (PEAK * PEAK / denom).log10())
}

/// Summed-area table with a zero first row and column.
fn integral(img: &[f64], height: usize, width: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let (h1, w1) = (height + 1, width + 1);
    let mut s = vec![0.0; h1 * w1];
    for j in 0..width {
        for i in 0..height {
            let at = i + height * j;
            debug_assert!(at < img.len());
            s[(i + 1) + h1 * (j + 1)] = f(at) + s[i + h1 * (j + 1)] + s[(i + 1) + h1 * j] - s[i + h1 * j];
        }
    }
    s
}

fn box_sum(s: &[f64], height: usize, i: usize, j: usize, n: usize) -> f64 {
    let h1 = height + 1;
    s[(i + n) + h1 * (j + n)] - s[i + h1 * (j + n)] - s[(i + n) + h1 * j] + s[i + h1 * j]
}

/// Mean SSIM of two `height × width` column-major frames.
pub fn ssim(reference: &[f64], test: &[f64], height: usize, width: usize) -> Result<f64> {
    same_len(reference, test)?;
    if reference.len() != height * width {
        return Err(Error::ShapeMismatch(format!("{} pixels for a {height}x{width} frame", reference.len())));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::ShapeMismatch(format!(
            "{height}x{width} frame is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let sa = integral(reference, height, width, |k| reference[k]);
    let sb = integral(test, height, width, |k| test[k]);
    let saa = integral(reference, height, width, |k| reference[k] * reference[k]);
    let sbb = integral(test, height, width, |k| test[k] * test[k]);
    let sab = integral(reference, height, width, |k| reference[k] * test[k]);
    let n = SSIM_WINDOW;
    let count = (n * n) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for j in 0..=width - n {
        for i in 0..=height - n {
            let ma = box_sum(&sa, height, i, j, n) / count;
            let mb = box_sum(&sb, height, i, j, n) / count;
            let va = (box_sum(&saa, height, i, j, n) / count - ma * ma).max(0.0);
            let vb = (box_sum(&sbb, height, i, j, n) / count - mb * mb).max(0.0);
            let cov = box_sum(&sab, height, i, j, n) / count - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundMask {
    pub dims: [usize; 3],
    pub data: Vec<bool>,
}

impl ForegroundMask {
    pub fn empty(dims: [usize; 3]) -> Self {
        Self { dims, data: vec![false; dims.iter().product()] }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn frame(&self, k: usize) -> &[bool] {
        let n = self.dims[0] * self.dims[1];
        &self.data[k * n..(k + 1) * n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Binarization {
    /// `|x| > tau · max_frame |x|`.
    Relative { tau: f64 },
    /// Otsu's threshold on `|x|` over a 256-bin histogram per frame.
    Otsu,
}

impl Default for Binarization {
    fn default() -> Self {
        Binarization::Relative { tau: 0.1 }
    }
}

fn otsu_threshold(values: &[f64], max: f64) -> f64 {
    const BINS: usize = 256;
    let mut hist = [0usize; BINS];
    for &v in values {
        let b = ((v / max) * (BINS - 1) as f64).round() as usize;
        hist[b.min(BINS - 1)] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_t) = (-1.0, 0usize);
    for (t, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_t = t;
        }
    }
    // upper edge of the winning bin
    (best_t as f64 + 0.5) / (BINS - 1) as f64 * max
}

/// Turns a continuous foreground estimate into a detection mask, frame by frame.
pub fn binarize(x2: &DenseTensor, method: Binarization) -> Result<ForegroundMask> {
    let dims: [usize; 3] = match *x2.dims() {
        [h, w, d] => [h, w, d],
        _ => return Err(Error::ShapeMismatch("foreground must be an H×W×D volume".into())),
    };
    if let Binarization::Relative { tau } = method {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidParameter(format!("relative threshold must be in (0, 1), got {tau}")));
        }
    }
    let n = dims[0] * dims[1];
    let mut data = Vec::with_capacity(x2.len());
    for frame in x2.data().chunks_exact(n) {
        let abs: Vec<f64> = frame.iter().map(|v| v.abs()).collect();
        let max = abs.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            data.extend(std::iter::repeat_n(false, n));
            continue;
        }
        let threshold = match method {
            Binarization::Relative { tau } => tau * max,
            Binarization::Otsu => otsu_threshold(&abs, max),
        };
        data.extend(abs.iter().map(|&v| v > threshold));
    }
    Ok(ForegroundMask { dims, data })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetection {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

fn frame_f_measure(mask: &[bool], gt: &[bool]) -> FrameDetection {
    let tp = mask.iter().zip(gt).filter(|(m, g)| **m && **g).count() as f64;
    let detected = mask.iter().filter(|&&m| m).count() as f64;
    let truth = gt.iter().filter(|&&g| g).count() as f64;
    if truth == 0.0 {
        let f = if detected == 0.0 { 1.0 } else { 0.0 };
        return FrameDetection { precision: f, recall: f, f_measure: f };
    }
    let recall = tp / truth;
    let precision = if detected == 0.0 { 0.0 } else { tp / detected };
    let f_measure = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    FrameDetection { precision, recall, f_measure }
}

/// Per-frame F-measures and their mean.
pub fn f_measure(mask: &ForegroundMask, gt: &ForegroundMask) -> Result<(Vec<FrameDetection>, f64)> {
    if mask.dims != gt.dims {
        return Err(Error::ShapeMismatch(format!("mask {:?} vs ground truth {:?}", mask.dims, gt.dims)));
    }
    let per: Vec<FrameDetection> = (0..mask.dims[2]).map(|k| frame_f_measure(mask.frame(k), gt.frame(k))).collect();
    let mean = per.iter().map(|f| f.f_measure).sum::<f64>() / per.len() as f64;
    Ok((per, mean))
}

/// Share of the singular-value mass captured by the leading `k` values.
pub fn acc_energy_ratio(m: &Matrix, k: usize) -> Result<f64> {
    let max = m.nrows().min(m.ncols());
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { rank: k, max });
    }
    let mut sv: Vec<f64> = DMatrix::singular_values(m).iter().cloned().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sv.iter().sum();
    if total == 0.0 {
        return Err(Error::InvalidParameter("energy ratio of a zero matrix".into()));
    }
    Ok(sv[..k].iter().sum::<f64>() / total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
    pub f_measure: Vec<f64>,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub f_measure_mean: f64,
    /// Background PSNR per frame, when a ground-truth background is supplied.
    pub background_psnr: Option<Vec<f64>>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvalConfig {
    pub psnr_mode: PsnrMode,
    pub binarization: Binarization,
}

/// Scores a reconstruction and foreground estimate against ground truth.
pub fn evaluate(
    recon: &DenseTensor,
    foreground: &DenseTensor,
    truth: &DenseTensor,
    gt_mask: &ForegroundMask,
    background: Option<(&DenseTensor, &DenseTensor)>,
    config: EvalConfig,
) -> Result<MetricsReport> {
    if recon.dims() != truth.dims() || foreground.dims() != truth.dims() || truth.dims() != gt_mask.dims {
        return Err(Error::ShapeMismatch("evaluation volumes disagree in shape".into()));
    }
    let [h, w, _] = gt_mask.dims;
    let n = h * w;
    let frames = |t: &DenseTensor| t.data().chunks_exact(n).map(<[f64]>::to_vec).collect::<Vec<_>>();
    let (rf, tf) = (frames(recon), frames(truth));
    let psnr_v = rf.iter().zip(&tf).map(|(r, t)| psnr(t, r, config.psnr_mode)).collect::<Result<Vec<_>>>()?;
    let ssim_v = rf.iter().zip(&tf).map(|(r, t)| ssim(t, r, h, w)).collect::<Result<Vec<_>>>()?;
    let mask = binarize(foreground, config.binarization)?;
    let (det, f_mean) = f_measure(&mask, gt_mask)?;
    let background_psnr = match background {
        Some((est, gt)) => {
            if est.dims() != gt.dims() || gt.dims() != truth.dims() {
                return Err(Error::ShapeMismatch("background volumes disagree in shape".into()));
            }
            let (ef, gf) = (frames(est), frames(gt));
            Some(ef.iter().zip(&gf).map(|(e, g)| psnr(g, e, config.psnr_mode)).collect::<Result<Vec<_>>>()?)
        }
        None => None,
    };
    Ok(MetricsReport {
        psnr_mean: mean(&psnr_v),
        ssim_mean: mean(&ssim_v),
        f_measure_mean: f_mean,
        psnr: psnr_v,
        ssim: ssim_v,
        f_measure: det.into_iter().map(|d| d.f_measure).collect(),
        background_psnr,
    })
}

fn json_number(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map(serde_json::Value::Number).unwrap_or_else(|| {
        serde_json::Value::String(if v > 0.0 { "inf".into() } else if v < 0.0 { "-inf".into() } else { "nan".into() })
    })
}

impl MetricsReport {
    /// One row per frame followed by a `mean` summary row.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let bg = self.background_psnr.as_ref();
        write!(out, "frame,psnr,ssim,f_measure")?;
        if bg.is_some() {
            write!(out, ",background_psnr")?;
        }
        writeln!(out)?;
        for k in 0..self.psnr.len() {
            write!(out, "{},{},{},{}", k, self.psnr[k], self.ssim[k], self.f_measure[k])?;
            if let Some(b) = bg {
                write!(out, ",{}", b[k])?;
            }
            writeln!(out)?;
        }
        write!(out, "mean,{},{},{}", self.psnr_mean, self.ssim_mean, self.f_measure_mean)?;
        if let Some(b) = bg {
            write!(out, ",{}", mean(b))?;
        }
        writeln!(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let arr = |v: &[f64]| serde_json::Value::Array(v.iter().map(|&x| json_number(x)).collect());
        let mut obj = serde_json::json!({
            "psnr_mean": json_number(self.psnr_mean),
            "ssim_mean": json_number(self.ssim_mean),
            "f_measure_mean": json_number(self.f_measure_mean),
            "psnr": arr(&self.psnr),
            "ssim": arr(&self.ssim),
            "f_measure": arr(&self.f_measure),
        });
        if let Some(b) = &self.background_psnr {
            obj["background_psnr"] = arr(b);
        }
        obj
    }
}
