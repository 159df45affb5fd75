//! CIFAR-10 binary batch parsing and loading.
//!
//! Each record is 3073 bytes: one label byte followed by a 32×32×3 image
//! stored plane-major (all red, all green, all blue). A batch file is a
//! whole number of records; anything else is rejected with the offset of
//! the defect.

use std::path::{Path, PathBuf};

use crate::datasets::idx::RawFormatError;
use crate::datasets::Dataset;
use crate::error::{Error, Result};

pub const CIFAR_RECORD_BYTES: usize = 3073;
pub const CIFAR_FEATURE_DIM: usize = 3072;
pub const CIFAR_CLASSES: usize = 10;

/// Splits a batch file into labels and raw pixel bytes.
pub fn parse_cifar_batch(bytes: &[u8]) -> std::result::Result<(Vec<u8>, Vec<u8>), RawFormatError> {
    if bytes.is_empty() {
        return Err(RawFormatError {
            offset: 0,
            msg: "empty batch file".into(),
        });
    }
    if bytes.len() % CIFAR_RECORD_BYTES != 0 {
        return Err(RawFormatError {
            offset: (bytes.len() - bytes.len() % CIFAR_RECORD_BYTES) as u64,
            msg: format!(
                "file size {} is not a multiple of {CIFAR_RECORD_BYTES}-byte records",
                bytes.len()
            ),
        });
    }
    let count = bytes.len() / CIFAR_RECORD_BYTES;
    let mut labels = Vec::with_capacity(count);
    let mut pixels = Vec::with_capacity(count * CIFAR_FEATURE_DIM);
    for (r, record) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        let label = record[0];
        if label as usize >= CIFAR_CLASSES {
            return Err(RawFormatError {
                offset: (r * CIFAR_RECORD_BYTES) as u64,
                msg: format!("label byte {label} outside 0..{CIFAR_CLASSES}"),
            });
        }
        labels.push(label);
        pixels.extend_from_slice(&record[1..]);
    }
    Ok((labels, pixels))
}

/// `data_batch_1.bin` style names, falling back to the bare stem.
fn resolve(dir: &Path, stem: &str) -> PathBuf {
    let with_ext = dir.join(format!("{stem}.bin"));
    if with_ext.exists() {
        return with_ext;
    }
    let bare = dir.join(stem);
    if bare.exists() {
        return bare;
    }
    with_ext
}

fn read_batch(path: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|source| Error::DatasetIo {
        path: path.display().to_string(),
        source,
    })?;
    parse_cifar_batch(&bytes).map_err(|e| e.at(path))
}

fn into_dataset(name: &str, labels: Vec<u8>, pixels: Vec<u8>) -> Result<Dataset> {
    let features: Vec<f32> = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Dataset::new(name.to_string(), features, CIFAR_FEATURE_DIM, labels, CIFAR_CLASSES)
}

/// Loads `data_batch_1..5` as the training set and `test_batch` as the
/// test set, with pixels scaled to [0, 1].
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut train_labels = Vec::new();
    let mut train_pixels = Vec::new();
    for i in 1..=5 {
        let path = resolve(dir, &format!("data_batch_{i}"));
        let (labels, pixels) = read_batch(&path)?;
        train_labels.extend(labels);
        train_pixels.extend(pixels);
    }
    let (test_labels, test_pixels) = read_batch(&resolve(dir, "test_batch"))?;
    Ok((
        into_dataset("cifar10-train", train_labels, train_pixels)?,
        into_dataset("cifar10-test", test_labels, test_pixels)?,
    ))
}
