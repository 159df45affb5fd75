//! Dataset loading, synthetic test data, and IID partitioning.
//!
//! Features are stored as `f32` scaled to [0, 1]; the learner widens to
//! `f64` when it gathers a batch. Loaders are pure functions of the file
//! bytes, and partitioning is a seeded shuffle dealt round-robin, so both
//! reproduce bit-identically for identical inputs.

mod cifar;
mod idx;

pub use cifar::{load_cifar10, parse_cifar_batch, CIFAR_CLASSES, CIFAR_FEATURE_DIM, CIFAR_RECORD_BYTES};
pub use idx::{parse_idx_images, parse_idx_labels, IdxImages, RawFormatError, IMAGE_MAGIC, LABEL_MAGIC};

use std::io::Write;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng, SeedStream};

pub fn load_mnist(dir: &std::path::Path) -> Result<(Dataset, Dataset)> {
    idx::load_mnist(dir)
}

/// A labeled feature matrix. `features` is row-major `len() × feature_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    features: Vec<f32>,
    feature_dim: usize,
    labels: Vec<u8>,
    classes: usize,
}

impl Dataset {
    /// Validates the invariants: matching lengths, labels below `classes`,
    /// every feature finite and inside [0, 1].
    pub fn new(
        name: String,
        features: Vec<f32>,
        feature_dim: usize,
        labels: Vec<u8>,
        classes: usize,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be positive".into()));
        }
        if classes == 0 || classes > 256 {
            return Err(Error::InvalidArgument("classes must be in 1..=256".into()));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(Error::InvalidArgument(format!(
                "{} feature values for {} rows of dim {}",
                features.len(),
                labels.len(),
                feature_dim
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside 0..{classes}"
            )));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "feature value {bad} outside [0, 1]"
            )));
        }
        Ok(Dataset {
            name,
            features,
            feature_dim,
            labels,
            classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Copies the selected rows into reusable batch buffers, widening
    /// features to `f64`.
    pub fn gather(
        &self,
        indices: &[usize],
        features_out: &mut Vec<f64>,
        labels_out: &mut Vec<usize>,
    ) -> Result<()> {
        features_out.clear();
        labels_out.clear();
        features_out.reserve(indices.len() * self.feature_dim);
        labels_out.reserve(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "row index {i} outside 0..{}",
                    self.len()
                )));
            }
            features_out.extend(self.row(i).iter().map(|&v| v as f64));
            labels_out.push(self.label(i));
        }
        Ok(())
    }

    /// Per-class label counts.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.classes];
        for &l in &self.labels {
            hist[l as usize] += 1;
        }
        hist
    }

    /// Writes the debugging CSV: header `label,f0,..,f{D-1}`, one row per
    /// sample, features printed in shortest round-trip form.
    pub fn to_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "label")?;
        for j in 0..self.feature_dim {
            write!(w, ",f{j}")?;
        }
        writeln!(w)?;
        for i in 0..self.len() {
            write!(w, "{}", self.labels[i])?;
            for v in self.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Parses the CSV written by [`Dataset::to_csv`]. The class count is
    /// inferred as the highest label plus one.
    pub fn from_csv(text: &str, name: &str) -> Result<Dataset> {
        let table_err = |line: usize, msg: String| Error::Table {
            path: name.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| table_err(1, "missing header".into()))?;
        let mut cols = header.split(',');
        if cols.next() != Some("label") {
            return Err(table_err(1, "header must start with 'label'".into()));
        }
        let mut dim = 0;
        for col in cols {
            if col != format!("f{dim}") {
                return Err(table_err(1, format!("unexpected header column '{col}'")));
            }
            dim += 1;
        }
        if dim == 0 {
            return Err(table_err(1, "header has no feature columns".into()));
        }
        let mut labels = Vec::new();
        let mut features = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let lineno = lineno + 2;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let label_text = fields.next().unwrap_or("");
            let label: u8 = label_text
                .parse()
                .map_err(|_| table_err(lineno, format!("bad label '{label_text}'")))?;
            labels.push(label);
            let mut count = 0;
            for field in fields {
                let v: f32 = field
                    .parse()
                    .map_err(|_| table_err(lineno, format!("bad feature value '{field}'")))?;
                features.push(v);
                count += 1;
            }
            if count != dim {
                return Err(table_err(lineno, format!("{count} features, expected {dim}")));
            }
        }
        let classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(1);
        Dataset::new(name.to_string(), features, dim, labels, classes)
            .map_err(|e| table_err(0, e.to_string()))
    }
}

/// Disjoint index lists into one dataset, one shard per client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    shards: Vec<Vec<usize>>,
}

impl Partition {
    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    pub fn shard(&self, k: usize) -> &[usize] {
        &self.shards[k]
    }

    pub fn client_count(&self) -> usize {
        self.shards.len()
    }
}

/// Gaussian class blobs on well-separated centers inside [0, 1]^dims.
/// Centers sit at least eight noise standard deviations apart, so the
/// classes are comfortably linearly separable. Labels are assigned
/// round-robin, which keeps class counts within one of each other.
pub fn synth_blobs(n: usize, dims: usize, classes: usize, seed: u64) -> Result<Dataset> {
    if dims == 0 {
        return Err(Error::InvalidArgument("dims must be positive".into()));
    }
    if classes < 2 {
        return Err(Error::InvalidArgument("classes must be at least 2".into()));
    }
    if n < classes {
        return Err(Error::InvalidArgument(format!(
            "n = {n} is smaller than classes = {classes}"
        )));
    }
    // Blob centers: class c perturbs coordinate (c % dims) away from 0.5,
    // alternating sign per level so centers stay inside the unit box.
    let levels_per_axis = classes.div_ceil(dims);
    let magnitudes = levels_per_axis.div_ceil(2);
    let spacing = 0.35 / magnitudes as f64;
    let sigma = spacing / 8.0;
    let mut centers = vec![vec![0.5; dims]; classes];
    for (c, center) in centers.iter_mut().enumerate() {
        let axis = c % dims;
        let level = c / dims;
        let magnitude = spacing * ((level / 2) + 1) as f64;
        let sign = if level % 2 == 0 { 1.0 } else { -1.0 };
        center[axis] = 0.5 + sign * magnitude;
    }

    let mut rng = seeded_rng(seed);
    let normal = StandardNormal;
    let mut features = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % classes;
        labels.push(label as u8);
        for j in 0..dims {
            let z: f64 = normal.sample(&mut rng);
            let v = (centers[label][j] + sigma * z).clamp(0.0, 1.0);
            features.push(v as f32);
        }
    }
    Dataset::new(format!("synth-{n}x{dims}x{classes}"), features, dims, labels, classes)
}

/// Equal-size IID split: a seeded shuffle of all indices dealt round-robin
/// into `k` shards. Shard sizes differ by at most one.
pub fn partition_iid(dataset: &Dataset, k: usize, seed: u64) -> Result<Partition> {
    if k == 0 {
        return Err(Error::InvalidArgument("client count must be positive".into()));
    }
    if k > dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} samples across {} clients",
            dataset.len(),
            k
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = seeded_rng(seed);
    order.shuffle(&mut rng);
    let mut shards = vec![Vec::with_capacity(dataset.len() / k + 1); k];
    for (pos, idx) in order.into_iter().enumerate() {
        shards[pos % k].push(idx);
    }
    Ok(Partition { shards })
}

/// Keeps a uniform fraction of every shard (at least one sample), for fast
/// desk-scale runs. Deterministic in the master seed; kept indices are
/// re-sorted ascending.
pub fn subsample_partition(partition: &Partition, fraction: f64, master_seed: u64) -> Result<Partition> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "subsample fraction {fraction} outside (0, 1]"
        )));
    }
    let mut shards = Vec::with_capacity(partition.client_count());
    for (k, shard) in partition.shards().iter().enumerate() {
        let keep = ((shard.len() as f64 * fraction).round() as usize)
            .clamp(1, shard.len());
        let mut pool = shard.clone();
        let mut rng = seeded_rng(derive_seed(master_seed, 0, k as u64, SeedStream::Subsample));
        pool.shuffle(&mut rng);
        pool.truncate(keep);
        pool.sort_unstable();
        shards.push(pool);
    }
    Ok(Partition { shards })
}
