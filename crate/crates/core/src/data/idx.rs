use std::path::Path;

use super::{Dataset, Targets};
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw contents of a 3-dimensional unsigned-byte IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize, field: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::parse(field, "file ends inside the header"))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::parse(
            "magic",
            format!("expected 0x{IMAGES_MAGIC:08x} for byte images, found 0x{magic:08x}"),
        ));
    }
    let count = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "rows")? as usize;
    let cols = be_u32(bytes, 12, "cols")? as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::parse("dimensions", "image dimensions overflow"))?;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(Error::parse(
            "pixels",
            format!("{count} images of {rows}x{cols} need {expected} bytes, found {}", payload.len()),
        ));
    }
    Ok(IdxImages { count, rows, cols, pixels: payload.to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::parse(
            "magic",
            format!("expected 0x{LABELS_MAGIC:08x} for labels, found 0x{magic:08x}"),
        ));
    }
    let count = be_u32(bytes, 4, "label count")? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::parse(
            "labels",
            format!("header declares {count} labels, found {}", payload.len()),
        ));
    }
    Ok(payload.to_vec())
}

/// Builds a labelled dataset from parsed images and labels, scaling pixels to `[0, 1]`.
pub(crate) fn dataset_from_idx(images: IdxImages, labels: Vec<u8>) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::parse(
            "label count",
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    let inputs = images.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let num_classes = labels.iter().max().map_or(1, |m| m + 1).max(10);
    Dataset::new(inputs, (images.rows * images.cols).max(1), Targets::Labels { labels, num_classes })
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = std::fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let labels = std::fs::read(lp).map_err(|e| Error::io(lp, e))?;
    let images = parse_idx_images(&images).map_err(|e| e.context(ip.display()))?;
    let labels = parse_idx_labels(&labels).map_err(|e| e.context(lp.display()))?;
    dataset_from_idx(images, labels)
}
