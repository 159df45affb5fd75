//! IDX file parsing (the MNIST container format) and the MNIST loader.
//!
//! Headers are big-endian 32-bit words: magic 2051 for image files,
//! 2049 for label files. Parsing is strict: wrong magic, truncated
//! payloads, and trailing bytes are all rejected with the byte offset of
//! the defect, and no allocation happens before the declared size is
//! checked against the actual input length.

use std::path::Path;

use crate::datasets::Dataset;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

/// Parse failure in raw bytes, before any file name is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFormatError {
    pub offset: u64,
    pub msg: String,
}

impl RawFormatError {
    fn new(offset: u64, msg: impl Into<String>) -> Self {
        RawFormatError {
            offset,
            msg: msg.into(),
        }
    }

    /// Attaches the originating file.
    pub fn at(self, path: &Path) -> Error {
        Error::Format {
            path: path.display().to_string(),
            offset: self.offset,
            msg: self.msg,
        }
    }
}

/// Decoded image file: `count` images of `rows × cols` raw bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_be_u32(bytes: &[u8], offset: usize) -> std::result::Result<u32, RawFormatError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(RawFormatError::new(
            bytes.len() as u64,
            format!("truncated header: need {end} bytes"),
        ));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<IdxImages, RawFormatError> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(RawFormatError::new(
            0,
            format!("bad magic {magic:#010x}, expected {IMAGE_MAGIC} (images)"),
        ));
    }
    let count = read_be_u32(bytes, 4)? as u64;
    let rows = read_be_u32(bytes, 8)? as u64;
    let cols = read_be_u32(bytes, 12)? as u64;
    if rows == 0 || cols == 0 {
        return Err(RawFormatError::new(8, "zero image dimensions"));
    }
    let expected = 16u64 + count * rows * cols;
    if (bytes.len() as u64) < expected {
        return Err(RawFormatError::new(
            bytes.len() as u64,
            format!("truncated pixel data: header implies {expected} bytes"),
        ));
    }
    if (bytes.len() as u64) > expected {
        return Err(RawFormatError::new(
            expected,
            format!("{} trailing bytes after pixel data", bytes.len() as u64 - expected),
        ));
    }
    Ok(IdxImages {
        count: count as usize,
        rows: rows as usize,
        cols: cols as usize,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<Vec<u8>, RawFormatError> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(RawFormatError::new(
            0,
            format!("bad magic {magic:#010x}, expected {LABEL_MAGIC} (labels)"),
        ));
    }
    let count = read_be_u32(bytes, 4)? as u64;
    let expected = 8u64 + count;
    if (bytes.len() as u64) < expected {
        return Err(RawFormatError::new(
            bytes.len() as u64,
            format!("truncated label data: header implies {expected} bytes"),
        ));
    }
    if (bytes.len() as u64) > expected {
        return Err(RawFormatError::new(
            expected,
            format!("{} trailing bytes after label data", bytes.len() as u64 - expected),
        ));
    }
    Ok(bytes[8..].to_vec())
}

fn load_split(dir: &Path, image_file: &str, label_file: &str, name: &str) -> Result<Dataset> {
    let image_path = dir.join(image_file);
    let image_bytes = std::fs::read(&image_path).map_err(|source| Error::DatasetIo {
        path: image_path.display().to_string(),
        source,
    })?;
    let images = parse_idx_images(&image_bytes).map_err(|e| e.at(&image_path))?;

    let label_path = dir.join(label_file);
    let label_bytes = std::fs::read(&label_path).map_err(|source| Error::DatasetIo {
        path: label_path.display().to_string(),
        source,
    })?;
    let labels = parse_idx_labels(&label_bytes).map_err(|e| e.at(&label_path))?;

    if labels.len() != images.count {
        return Err(Error::Format {
            path: label_path.display().to_string(),
            offset: 4,
            msg: format!(
                "{} labels for {} images in {}",
                labels.len(),
                images.count,
                image_path.display()
            ),
        });
    }
    if let Some(pos) = labels.iter().position(|&l| l >= 10) {
        return Err(Error::Format {
            path: label_path.display().to_string(),
            offset: 8 + pos as u64,
            msg: format!("label byte {} outside 0..10", labels[pos]),
        });
    }
    let features: Vec<f32> = images.pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Dataset::new(
        name.to_string(),
        features,
        images.rows * images.cols,
        labels,
        10,
    )
}

/// Loads the four standard IDX files from `dir`:
/// `train-images-idx3-ubyte`, `train-labels-idx1-ubyte`,
/// `t10k-images-idx3-ubyte`, `t10k-labels-idx1-ubyte`.
/// Pixels are scaled to [0, 1] by dividing by 255.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_split(
        dir,
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "mnist-train",
    )?;
    let test = load_split(
        dir,
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
        "mnist-test",
    )?;
    Ok((train, test))
}
