//! IDX binary format: a 4-byte big-endian magic, big-endian u32 dimensions,
//! then raw unsigned bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

const MNIST_SIDE: usize = 28;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(Error::TruncatedFile { expected: (at + 4) as u64, found: bytes.len() as u64 })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, payload: usize) -> Result<()> {
    let expected = header + payload;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile { expected: expected as u64, found: bytes.len() as u64 });
    }
    if bytes.len() > expected {
        return Err(Error::DataLoad(format!("{} trailing bytes after IDX payload", bytes.len() - expected)));
    }
    Ok(())
}

pub fn read_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    check_payload(bytes, 16, count * rows * cols)?;
    Ok(IdxImages { count, rows, cols, pixels: bytes[16..].to_vec() })
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    check_payload(bytes, 8, count)?;
    Ok(bytes[8..].to_vec())
}

pub fn write_idx_images<W: Write>(mut w: W, images: &IdxImages) -> Result<()> {
    w.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    for dim in [images.count, images.rows, images.cols] {
        w.write_all(&(dim as u32).to_be_bytes())?;
    }
    w.write_all(&images.pixels)?;
    w.flush()?;
    Ok(())
}

pub fn write_idx_labels<W: Write>(mut w: W, labels: &[u8]) -> Result<()> {
    w.write_all(&LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)?;
    w.flush()?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::DataLoad(format!("{}: {e}", path.display())))
}

/// Loads an MNIST-style image/label pair with pixels scaled to `[0, 1]`.
/// Any sample count is accepted; images must be 28x28.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = read_idx_images(&read_file(images_path.as_ref())?)?;
    let labels = read_idx_labels(&read_file(labels_path.as_ref())?)?;
    if images.rows != MNIST_SIDE || images.cols != MNIST_SIDE {
        return Err(Error::DataLoad(format!("expected 28x28 images, found {}x{}", images.rows, images.cols)));
    }
    if images.count != labels.len() {
        return Err(Error::CountMismatch { images: images.count, labels: labels.len() });
    }
    let features = images.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels = labels.into_iter().map(usize::from).collect();
    Dataset::new(features, vec![images.rows, images.cols], labels, 10)
}
