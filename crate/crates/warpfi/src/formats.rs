//! Binary matrix dumps (`WFMX`), network weight files (`WFNN`) and the JSON
//! detection listing.
//!
//! Both binary formats are little-endian. A matrix dump is
//!
//! ```text
//! "WFMX"  version:u16  precision:u8 (0 = fp16, 1 = fp32)  rows:u64  cols:u64
//! rows·cols row-major words (u16 for fp16, u32 for fp32)
//! ```
//!
//! and a weight file is
//!
//! ```text
//! "WFNN"  version:u16  channels:u32 height:u32 width:u32  layers:u32
//! per layer: kind:u8, then
//!   0 conv        out:u32 kh:u32 kw:u32 stride:u32 count:u64 f32 × count
//!   1 dense       out:u32 count:u64 f32 × count
//!   2 activation  slope:f32
//!   3 head        grid:u32 boxes:u32 classes:u32
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;
use warpfi_core::nn::{Detection, HeadConfig, Layer, NetworkSpec, Tensor};
use warpfi_core::numerics::Precision;
use warpfi_core::simt::Matrix;

use crate::error::{Error, Result};

pub const MATRIX_MAGIC: [u8; 4] = *b"WFMX";
pub const NETWORK_MAGIC: [u8; 4] = *b"WFNN";
pub const FORMAT_VERSION: u16 = 1;

/// Refuse absurd headers before allocating.
const MAX_WORDS: u64 = 1 << 28;

struct Reader<R> {
    inner: R,
    what: &'static str,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::format(self.what, "truncated"),
            _ => Error::format(self.what, e.to_string()),
        })?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn usize32(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn header(&mut self, magic: [u8; 4]) -> Result<()> {
        if self.bytes::<4>()? != magic {
            return Err(Error::format(self.what, "bad magic"));
        }
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(self.what, format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn count(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > MAX_WORDS {
            return Err(Error::format(self.what, format!("{n} words is too large")));
        }
        Ok(n as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        (0..n).map(|_| Ok(f32::from_bits(self.u32()?))).collect()
    }

    fn expect_end(&mut self) -> Result<()> {
        let mut rest = [0u8; 1];
        match self.inner.read(&mut rest) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::format(self.what, "trailing bytes")),
            Err(e) => Err(Error::format(self.what, e.to_string())),
        }
    }
}

fn precision_code(p: Precision) -> u8 {
    match p {
        Precision::Fp16 => 0,
        Precision::Fp32 => 1,
    }
}

pub fn write_matrix(w: &mut impl Write, m: &Matrix) -> io::Result<()> {
    w.write_all(&MATRIX_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[precision_code(m.precision)])?;
    w.write_all(&(m.rows as u64).to_le_bytes())?;
    w.write_all(&(m.cols as u64).to_le_bytes())?;
    for &word in &m.data {
        match m.precision {
            Precision::Fp16 => w.write_all(&(word as u16).to_le_bytes())?,
            Precision::Fp32 => w.write_all(&word.to_le_bytes())?,
        }
    }
    Ok(())
}

pub fn read_matrix(r: impl Read) -> Result<Matrix> {
    let mut r = Reader { inner: r, what: "matrix dump" };
    r.header(MATRIX_MAGIC)?;
    let precision = match r.u8()? {
        0 => Precision::Fp16,
        1 => Precision::Fp32,
        p => return Err(Error::format("matrix dump", format!("unknown precision code {p}"))),
    };
    let (rows, cols) = (r.u64()?, r.u64()?);
    let words = rows.checked_mul(cols).filter(|&n| n <= MAX_WORDS);
    let Some(words) = words else {
        return Err(Error::format("matrix dump", format!("{rows}x{cols} is too large")));
    };
    let data = (0..words)
        .map(|_| match precision {
            Precision::Fp16 => r.u16().map(u32::from),
            Precision::Fp32 => r.u32(),
        })
        .collect::<Result<Vec<u32>>>()?;
    r.expect_end()?;
    Ok(Matrix::from_words(rows as usize, cols as usize, precision, data)?)
}

pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_matrix(&mut w, m).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(BufReader::new(file))
}

/// Frames are stored as `(channels·height) × width` matrices.
pub fn load_frame(path: &Path, channels: usize) -> Result<Tensor> {
    let m = load_matrix(path)?;
    Ok(Tensor::from_matrix(&m, channels)?)
}

pub fn save_frame(path: &Path, frame: &Tensor) -> Result<()> {
    save_matrix(path, &frame.to_matrix())
}

fn put_u32(w: &mut impl Write, v: usize) -> io::Result<()> {
    let v = u32::try_from(v).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"))?;
    w.write_all(&v.to_le_bytes())
}

fn put_f32s(w: &mut impl Write, values: &[f32]) -> io::Result<()> {
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_bits().to_le_bytes())?;
    }
    Ok(())
}

pub fn write_network(w: &mut impl Write, spec: &NetworkSpec) -> io::Result<()> {
    w.write_all(&NETWORK_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let (c, h, wd) = spec.input;
    put_u32(w, c)?;
    put_u32(w, h)?;
    put_u32(w, wd)?;
    put_u32(w, spec.layers.len())?;
    for layer in &spec.layers {
        match layer {
            Layer::Conv { out_channels, kernel_h, kernel_w, stride, weights } => {
                w.write_all(&[0])?;
                for v in [*out_channels, *kernel_h, *kernel_w, *stride] {
                    put_u32(w, v)?;
                }
                put_f32s(w, weights)?;
            }
            Layer::Dense { out_features, weights } => {
                w.write_all(&[1])?;
                put_u32(w, *out_features)?;
                put_f32s(w, weights)?;
            }
            Layer::Activation { slope } => {
                w.write_all(&[2])?;
                w.write_all(&slope.to_bits().to_le_bytes())?;
            }
            Layer::DetectionHead(head) => {
                w.write_all(&[3])?;
                for v in [head.grid, head.boxes, head.classes] {
                    put_u32(w, v)?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_network(r: impl Read) -> Result<NetworkSpec> {
    let mut r = Reader { inner: r, what: "weight file" };
    r.header(NETWORK_MAGIC)?;
    let input = (r.usize32()?, r.usize32()?, r.usize32()?);
    let count = r.u32()?;
    let mut layers = Vec::new();
    for _ in 0..count {
        let layer = match r.u8()? {
            0 => {
                let (out_channels, kernel_h, kernel_w, stride) = (r.usize32()?, r.usize32()?, r.usize32()?, r.usize32()?);
                let n = r.count()?;
                Layer::Conv { out_channels, kernel_h, kernel_w, stride, weights: r.f32s(n)? }
            }
            1 => {
                let out_features = r.usize32()?;
                let n = r.count()?;
                Layer::Dense { out_features, weights: r.f32s(n)? }
            }
            2 => Layer::Activation { slope: f32::from_bits(r.u32()?) },
            3 => Layer::DetectionHead(HeadConfig { grid: r.usize32()?, boxes: r.usize32()?, classes: r.usize32()? }),
            k => return Err(Error::format("weight file", format!("unknown layer kind {k}"))),
        };
        layers.push(layer);
    }
    r.expect_end()?;
    let spec = NetworkSpec { input, layers };
    spec.shapes()?;
    Ok(spec)
}

pub fn save_network(path: &Path, spec: &NetworkSpec) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_network(&mut w, spec).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_network(path: &Path) -> Result<NetworkSpec> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_network(BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionRecord {
    pub class_id: usize,
    pub confidence: f64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        DetectionRecord { class_id: d.class_id, confidence: d.confidence, x: d.bbox.x, y: d.bbox.y, w: d.bbox.w, h: d.bbox.h }
    }
}

/// One JSON array of detections per frame.
pub fn detections_json(frames: &[Vec<Detection>]) -> serde_json::Value {
    let per_frame: Vec<Vec<DetectionRecord>> = frames.iter().map(|f| f.iter().map(DetectionRecord::from).collect()).collect();
    serde_json::to_value(per_frame).expect("detections serialize")
}
