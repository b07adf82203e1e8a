//! Binary checkpoint format.
//!
//! All integers and floats are little-endian. A file is
//!
//! ```text
//! magic    8 bytes   "MNNCKPT\0"
//! version  u32       currently 1
//! section* tag (4 ASCII bytes), length (u64, payload bytes), payload
//! ```
//!
//! Sections appear exactly once each, in this order:
//!
//! ```text
//! HEAD  input_sigma f64, layer_count u32
//! LAYR  per layer: in_dim u32, out_dim u32, kind u8, covariance_enabled u8,
//!       sigma f64, v_th f64, v_res f64, t_ref f64, leak f64      (42 bytes)
//!       kind: 0 readout, 1 heaviside, 2 relu, 3 lif; LIF fields are zero otherwise
//! WGHT  per layer: out_dim*in_dim f64, row-major
//! BIAS  per layer: out_dim f64
//! ```
//!
//! Nothing may follow the BIAS section.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::activation::{ActivationKind, LifParams};
use crate::error::{Error, Result};
use crate::network::{Layer, LayerSpec, MnnModel};

pub const MAGIC: &[u8; 8] = b"MNNCKPT\0";
pub const VERSION: u32 = 1;
const LAYER_RECORD: usize = 4 + 4 + 1 + 1 + 8 * 5;

pub fn save_model(model: &MnnModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MnnModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn encode(model: &MnnModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());

    let mut head = Vec::new();
    head.extend_from_slice(&model.input_sigma.to_le_bytes());
    head.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    push_section(&mut out, b"HEAD", &head);

    let mut layr = Vec::new();
    for layer in &model.layers {
        let s = layer.spec;
        layr.extend_from_slice(&(s.in_dim as u32).to_le_bytes());
        layr.extend_from_slice(&(s.out_dim as u32).to_le_bytes());
        let (tag, lif) = match s.kind {
            None => (0u8, None),
            Some(ActivationKind::Heaviside) => (1, None),
            Some(ActivationKind::Relu) => (2, None),
            Some(ActivationKind::Lif(p)) => (3, Some(p)),
        };
        layr.push(tag);
        layr.push(s.covariance_enabled as u8);
        layr.extend_from_slice(&s.sigma.to_le_bytes());
        let p = lif.map(|p| [p.v_th, p.v_res, p.t_ref, p.leak]).unwrap_or([0.0; 4]);
        for v in p {
            layr.extend_from_slice(&v.to_le_bytes());
        }
    }
    push_section(&mut out, b"LAYR", &layr);

    let mut wght = Vec::new();
    let mut bias = Vec::new();
    for layer in &model.layers {
        for i in 0..layer.weight.nrows() {
            for j in 0..layer.weight.ncols() {
                wght.extend_from_slice(&layer.weight[(i, j)].to_le_bytes());
            }
        }
        for v in layer.bias.iter() {
            bias.extend_from_slice(&v.to_le_bytes());
        }
    }
    push_section(&mut out, b"WGHT", &wght);
    push_section(&mut out, b"BIAS", &bias);
    out
}

fn push_section(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], section: &'static str) -> Self {
        Self { bytes, pos: 0, section }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::parse(
                self.section,
                format!(
                    "truncated: wanted {n} bytes at offset {}, have {}",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            )
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::parse(
                self.section,
                format!("{} unexpected trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn section<'a>(file: &mut Cursor<'a>, tag: &'static str) -> Result<Cursor<'a>> {
    let found = file.take(4).map_err(|_| Error::parse(tag, "section missing"))?;
    if found != tag.as_bytes() {
        return Err(Error::parse(
            tag,
            format!("expected section tag {tag}, found {:?}", String::from_utf8_lossy(found)),
        ));
    }
    let len = file.u64().map_err(|_| Error::parse(tag, "truncated section length"))?;
    let len = usize::try_from(len).map_err(|_| Error::parse(tag, "section length overflows"))?;
    let payload = file
        .take(len)
        .map_err(|_| Error::parse(tag, format!("section declares {len} bytes but the file ends early")))?;
    Ok(Cursor::new(payload, tag))
}

/// Parses a checkpoint from memory.
pub fn decode(bytes: &[u8]) -> Result<MnnModel> {
    let mut file = Cursor::new(bytes, "header");
    let magic = file.take(8)?;
    if magic != MAGIC {
        return Err(Error::parse("header", "bad magic, not a checkpoint file"));
    }
    let version = file.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion { found: version, supported: VERSION });
    }

    let mut head = section(&mut file, "HEAD")?;
    let input_sigma = head.f64()?;
    let count = head.u32()? as usize;
    head.finish()?;

    let mut layr = section(&mut file, "LAYR")?;
    if count.checked_mul(LAYER_RECORD) != Some(layr.bytes.len()) {
        return Err(Error::parse(
            "LAYR",
            format!("{} bytes do not hold {count} layer records", layr.bytes.len()),
        ));
    }
    let mut specs = Vec::with_capacity(count);
    for l in 0..count {
        let in_dim = layr.u32()? as usize;
        let out_dim = layr.u32()? as usize;
        let tag = layr.u8()?;
        let cov = layr.u8()?;
        let sigma = layr.f64()?;
        let lif = LifParams { v_th: layr.f64()?, v_res: layr.f64()?, t_ref: layr.f64()?, leak: layr.f64()? };
        let kind = match tag {
            0 => None,
            1 => Some(ActivationKind::Heaviside),
            2 => Some(ActivationKind::Relu),
            3 => Some(ActivationKind::Lif(lif)),
            t => return Err(Error::parse("LAYR", format!("layer {l}: unknown activation tag {t}"))),
        };
        let covariance_enabled = match cov {
            0 => false,
            1 => true,
            c => return Err(Error::parse("LAYR", format!("layer {l}: covariance flag {c} is not 0/1"))),
        };
        specs.push(LayerSpec { in_dim, out_dim, kind, sigma, covariance_enabled });
    }
    layr.finish()?;

    let mut wght = section(&mut file, "WGHT")?;
    let want: Option<usize> = specs
        .iter()
        .try_fold(0usize, |acc, s| s.in_dim.checked_mul(s.out_dim)?.checked_mul(8)?.checked_add(acc));
    if want != Some(wght.bytes.len()) {
        return Err(Error::parse("WGHT", "payload size does not match the layer table"));
    }
    let mut weights = Vec::with_capacity(count);
    for s in &specs {
        let mut data = Vec::with_capacity(s.in_dim * s.out_dim);
        for _ in 0..s.in_dim * s.out_dim {
            data.push(wght.f64()?);
        }
        weights.push(DMatrix::from_row_slice(s.out_dim, s.in_dim, &data));
    }
    wght.finish()?;

    let mut bias = section(&mut file, "BIAS")?;
    let want: Option<usize> =
        specs.iter().try_fold(0usize, |acc, s| s.out_dim.checked_mul(8)?.checked_add(acc));
    if want != Some(bias.bytes.len()) {
        return Err(Error::parse("BIAS", "payload size does not match the layer table"));
    }
    let mut biases = Vec::with_capacity(count);
    for s in &specs {
        let mut b = DVector::zeros(s.out_dim);
        for v in b.iter_mut() {
            *v = bias.f64()?;
        }
        biases.push(b);
    }
    bias.finish()?;
    file.finish()?;

    let layers = specs
        .into_iter()
        .zip(weights.into_iter().zip(biases))
        .map(|(spec, (weight, bias))| Layer { spec, weight, bias })
        .collect();
    MnnModel::new(input_sigma, layers).map_err(|e| Error::parse("LAYR", e.to_string()))
}
