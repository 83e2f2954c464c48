//! IDX image and label files (the MNIST distribution format).

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Parse {
            offset: bytes.len(),
            msg: "IDX header truncated".into(),
        })
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != want {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("IDX magic {magic:#010x}, expected {want:#010x}"),
        });
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, expected: usize) -> Result<&[u8]> {
    let body = &bytes[header.min(bytes.len())..];
    if body.len() < expected {
        return Err(Error::Parse {
            offset: bytes.len(),
            msg: format!(
                "IDX data truncated: expected {expected} bytes, found {}",
                body.len()
            ),
        });
    }
    Ok(&body[..expected])
}

/// Decodes unsigned-byte images as `rows × cols × 1` tensors scaled to `[0, 1]`.
pub fn parse_idx_images<T: Element>(bytes: &[u8]) -> Result<Vec<Tensor<T>>> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Parse {
            offset: 8,
            msg: "IDX image dimensions must be positive".into(),
        });
    }
    let data = payload(bytes, 16, count * rows * cols)?;
    let scale = T::from_f64(1.0 / 255.0).unwrap();
    Ok(data
        .chunks_exact(rows * cols)
        .map(|img| {
            Tensor::from_parts(
                rows,
                cols,
                1,
                img.iter()
                    .map(|&b| T::from_u8(b).unwrap() * scale)
                    .collect(),
            )
        })
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, count)?.to_vec())
}

pub fn encode_idx_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    for field in [IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&field.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads paired image and label files, checking that the counts agree.
pub fn load_idx_dataset<T: Element>(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<Vec<(Tensor<T>, u8)>> {
    let imgs = parse_idx_images::<T>(&std::fs::read(images)?)?;
    let labs = parse_idx_labels(&std::fs::read(labels)?)?;
    if imgs.len() != labs.len() {
        return Err(Error::Parse {
            offset: 4,
            msg: format!("{} images but {} labels", imgs.len(), labs.len()),
        });
    }
    if let Some(bad) = labs.iter().find(|&&l| l > 9) {
        return Err(Error::Parse {
            offset: 8,
            msg: format!("label {bad} outside 0..=9"),
        });
    }
    Ok(imgs.into_iter().zip(labs).collect())
}
