//! `.tvol` volume and `.tcm` measurement containers.
//!
//! Both start with a single-line JSON header terminated by `\n`, followed by
//! the little-endian payload. Volumes store `H·W·D` values in canonical
//! tensor layout (row index fastest, then column, then frame); masks use the
//! same header with `dtype: "u8"` and one byte (0 or 1) per voxel.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compressive::{MeasurementSet, OperatorDescriptor, SensingMode};
use crate::error::{Error, Result};
use crate::metrics::ForegroundMask;
use crate::tensor::DenseTensor;

pub const FORMAT_VERSION: u32 = 1;
const MAX_HEADER: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "f64le")]
    F64Le,
    #[serde(rename = "u8")]
    U8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub format_version: u32,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "D")]
    pub frames: usize,
    pub dtype: Dtype,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl VolumeHeader {
    pub fn dims(&self) -> [usize; 3] {
        [self.height, self.width, self.frames]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementHeader {
    pub format_version: u32,
    pub mode: SensingMode,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "D")]
    pub frames: usize,
    pub ratio: f64,
    pub seed: u64,
    #[serde(rename = "M")]
    pub measurements: usize,
}

fn read_header<T: for<'de> Deserialize<'de>>(r: &mut impl BufRead) -> Result<T> {
    let mut line = Vec::new();
    r.take(MAX_HEADER).read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing or oversized header line".into()));
    }
    line.pop();
    serde_json::from_slice(&line).map_err(|e| Error::Format(format!("bad header: {e}")))
}

fn write_header(w: &mut impl Write, header: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *w, header)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format_version {v} (expected {FORMAT_VERSION})")));
    }
    Ok(())
}

fn read_payload(r: &mut impl Read, bytes: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(bytes);
    r.take(bytes as u64 + 1).read_to_end(&mut buf)?;
    if buf.len() < bytes {
        return Err(Error::Format(format!("truncated payload: {} of {bytes} bytes", buf.len())));
    }
    if buf.len() > bytes {
        return Err(Error::Format("trailing data after payload".into()));
    }
    Ok(buf)
}

fn decode_f64(buf: &[u8]) -> Vec<f64> {
    buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect()
}

fn encode_f64(w: &mut impl Write, data: &[f64]) -> Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn volume_header(r: &mut impl BufRead, dtype: Dtype) -> Result<VolumeHeader> {
    let h: VolumeHeader = read_header(r)?;
    check_version(h.format_version)?;
    if h.dtype != dtype {
        return Err(Error::Format(format!("dtype {:?} where {:?} was expected", h.dtype, dtype)));
    }
    if h.height == 0 || h.width == 0 || h.frames == 0 {
        return Err(Error::Format("volume dimensions must be positive".into()));
    }
    Ok(h)
}

fn voxel_count(h: &VolumeHeader) -> Result<usize> {
    h.height
        .checked_mul(h.width)
        .and_then(|n| n.checked_mul(h.frames))
        .ok_or_else(|| Error::Format("volume dimensions overflow".into()))
}

pub fn write_volume(mut w: impl Write, x: &DenseTensor, seed: Option<u64>) -> Result<()> {
    let [height, width, frames] = volume_dims(x)?;
    write_header(&mut w, &VolumeHeader { format_version: FORMAT_VERSION, height, width, frames, dtype: Dtype::F64Le, seed })?;
    encode_f64(&mut w, x.data())
}

pub fn read_volume(r: impl Read) -> Result<(DenseTensor, VolumeHeader)> {
    let mut r = BufReader::new(r);
    let h = volume_header(&mut r, Dtype::F64Le)?;
    let n = voxel_count(&h)?;
    let buf = read_payload(&mut r, n.checked_mul(8).ok_or_else(|| Error::Format("payload size overflow".into()))?)?;
    Ok((DenseTensor::from_vec(&h.dims(), decode_f64(&buf))?, h))
}

pub fn write_mask(mut w: impl Write, m: &ForegroundMask, seed: Option<u64>) -> Result<()> {
    let [height, width, frames] = m.dims;
    write_header(&mut w, &VolumeHeader { format_version: FORMAT_VERSION, height, width, frames, dtype: Dtype::U8, seed })?;
    let bytes: Vec<u8> = m.data.iter().map(|&b| b as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_mask(r: impl Read) -> Result<(ForegroundMask, VolumeHeader)> {
    let mut r = BufReader::new(r);
    let h = volume_header(&mut r, Dtype::U8)?;
    let buf = read_payload(&mut r, voxel_count(&h)?)?;
    let data = buf
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Format(format!("mask byte {other} is not 0 or 1"))),
        })
        .collect::<Result<_>>()?;
    Ok((ForegroundMask { dims: h.dims(), data }, h))
}

pub fn write_meas(mut w: impl Write, y: &MeasurementSet) -> Result<()> {
    let d = &y.descriptor;
    let [height, width, frames] = d.dims;
    let header = MeasurementHeader {
        format_version: FORMAT_VERSION,
        mode: d.mode,
        height,
        width,
        frames,
        ratio: d.ratio,
        seed: d.seed,
        measurements: y.values.len(),
    };
    write_header(&mut w, &header)?;
    encode_f64(&mut w, &y.values)
}

pub fn read_meas(r: impl Read) -> Result<MeasurementSet> {
    let mut r = BufReader::new(r);
    let h: MeasurementHeader = read_header(&mut r)?;
    check_version(h.format_version)?;
    if h.measurements == 0 {
        return Err(Error::Format("measurement file declares M = 0".into()));
    }
    let bytes = h.measurements.checked_mul(8).ok_or_else(|| Error::Format("payload size overflow".into()))?;
    let buf = read_payload(&mut r, bytes)?;
    let descriptor = OperatorDescriptor { mode: h.mode, dims: [h.height, h.width, h.frames], ratio: h.ratio, seed: h.seed };
    Ok(MeasurementSet { values: decode_f64(&buf), descriptor })
}

fn volume_dims(x: &DenseTensor) -> Result<[usize; 3]> {
    match *x.dims() {
        [h, w, d] => Ok([h, w, d]),
        _ => Err(Error::ShapeMismatch(format!("expected an H×W×D volume, got {:?}", x.dims()))),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn finish(mut w: BufWriter<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

pub fn save_volume(path: impl AsRef<Path>, x: &DenseTensor, seed: Option<u64>) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_volume(&mut w, x, seed)?;
    finish(w)
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<(DenseTensor, VolumeHeader)> {
    read_volume(File::open(path)?)
}

pub fn save_mask(path: impl AsRef<Path>, m: &ForegroundMask, seed: Option<u64>) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_mask(&mut w, m, seed)?;
    finish(w)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<(ForegroundMask, VolumeHeader)> {
    read_mask(File::open(path)?)
}

pub fn save_meas(path: impl AsRef<Path>, y: &MeasurementSet) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_meas(&mut w, y)?;
    finish(w)
}

pub fn load_meas(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    read_meas(File::open(path)?)
}
