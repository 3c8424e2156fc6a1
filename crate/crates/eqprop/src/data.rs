//! IDX dataset loading (MNIST / KMNIST / FMNIST), normalization, and
//! seeded mini-batch iteration.
//!
//! All three datasets ship as big-endian IDX files, usually gzipped; the
//! loader sniffs the gzip magic bytes and decompresses transparently.
//! Pixels are scaled by 1/255 into `[0, 1]` and nothing else is done to
//! them. The loader is non-lossy: [`serialize_images`] / [`serialize_labels`]
//! reproduce the original uncompressed bytes exactly.

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use eqprop_core::linalg::Matrix;
use eqprop_core::train::{epoch_permutation, DatasetView};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Loader errors; each corruption mode is distinct.
#[derive(Debug)]
pub enum DataError {
    Io(std::io::Error),
    /// Wrong magic number in a header.
    BadMagic { path: String, expected: u32, got: u32 },
    /// Image and label files disagree on the sample count.
    CountMismatch { images: usize, labels: usize },
    /// Payload shorter than the header promises.
    Truncated { path: String, expected: usize, got: usize },
    /// Images are not 28x28.
    BadDims { path: String, rows: usize, cols: usize },
    /// A label is outside 0..=9.
    BadLabel { index: usize, value: u8 },
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Io(e) => write!(f, "io: {e}"),
            DataError::BadMagic { path, expected, got } => {
                write!(f, "{path}: bad magic {got:#010x}, expected {expected:#010x}")
            }
            DataError::CountMismatch { images, labels } => {
                write!(f, "image/label count mismatch: {images} images vs {labels} labels")
            }
            DataError::Truncated { path, expected, got } => {
                write!(f, "{path}: truncated payload, expected {expected} bytes, got {got}")
            }
            DataError::BadDims { path, rows, cols } => {
                write!(f, "{path}: expected 28x28 images, got {rows}x{cols}")
            }
            DataError::BadLabel { index, value } => {
                write!(f, "label {index} out of range: {value}")
            }
        }
    }
}

impl std::error::Error for DataError {}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A loaded dataset: normalized pixels with one column per sample.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// (784, n) matrix with values in `[0, 1]`.
    pub images: Matrix,
    /// Class labels in `0..=9`.
    pub labels: Vec<u8>,
    pub name: String,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn view(&self) -> DatasetView<'_> {
        DatasetView {
            images: &self.images,
            labels: &self.labels,
        }
    }

    /// First `n` samples as an owned dataset (smoke-test subsets).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let dim = self.images.rows();
        let mut images = Matrix::zeros(dim, n);
        for r in 0..dim {
            images.row_mut(r).copy_from_slice(&self.images.row(r)[..n]);
        }
        Dataset {
            images,
            labels: self.labels[..n].to_vec(),
            name: self.name.clone(),
            split: self.split,
        }
    }
}

/// Reads a whole file, transparently gunzipping when the gzip magic bytes
/// (0x1f 0x8b) lead the stream.
fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn read_u32_be(buf: &[u8], off: usize, path: &Path) -> Result<u32, DataError> {
    if off + 4 > buf.len() {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            expected: off + 4,
            got: buf.len(),
        });
    }
    Ok(u32::from_be_bytes([buf[off], buf[off + 1], buf[off + 2], buf[off + 3]]))
}

/// Raw parse of an IDX image file: header validation plus the pixel bytes.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, Vec<u8>), DataError> {
    let magic = read_u32_be(bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            expected: IMAGE_MAGIC,
            got: magic,
        });
    }
    let n = read_u32_be(bytes, 4, path)? as usize;
    let rows = read_u32_be(bytes, 8, path)? as usize;
    let cols = read_u32_be(bytes, 12, path)? as usize;
    if rows != 28 || cols != 28 {
        return Err(DataError::BadDims {
            path: path.display().to_string(),
            rows,
            cols,
        });
    }
    let expected = 16 + n * rows * cols;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            expected,
            got: bytes.len(),
        });
    }
    Ok((n, bytes[16..expected].to_vec()))
}

/// Raw parse of an IDX label file.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>, DataError> {
    let magic = read_u32_be(bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            expected: LABEL_MAGIC,
            got: magic,
        });
    }
    let n = read_u32_be(bytes, 4, path)? as usize;
    let expected = 8 + n;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            expected,
            got: bytes.len(),
        });
    }
    Ok(bytes[8..expected].to_vec())
}

/// Loads one split from an IDX image/label file pair.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let image_bytes = read_maybe_gzip(images_path)?;
    let (n_images, pixels) = parse_idx_images(&image_bytes, images_path)?;
    let label_bytes = read_maybe_gzip(labels_path)?;
    let labels = parse_idx_labels(&label_bytes, labels_path)?;
    if n_images != labels.len() {
        return Err(DataError::CountMismatch {
            images: n_images,
            labels: labels.len(),
        });
    }
    for (i, &l) in labels.iter().enumerate() {
        if l > 9 {
            return Err(DataError::BadLabel { index: i, value: l });
        }
    }
    // (784, n): sample i is column i.
    let dim = 28 * 28;
    let mut images = Matrix::zeros(dim, n_images);
    for s in 0..n_images {
        let src = &pixels[s * dim..(s + 1) * dim];
        for (r, &p) in src.iter().enumerate() {
            images.set(r, s, p as f64 / 255.0);
        }
    }
    Ok(Dataset {
        images,
        labels,
        name: String::new(),
        split: Split::Train,
    })
}

/// Re-serializes a dataset to uncompressed IDX image bytes. Together with
/// [`serialize_labels`] this is the loader's round-trip oracle: the output
/// must equal the decompressed input bytes exactly.
pub fn serialize_images(ds: &Dataset) -> Vec<u8> {
    let n = ds.len();
    let mut out = Vec::with_capacity(16 + n * 784);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(n as u32).to_be_bytes());
    out.extend_from_slice(&28u32.to_be_bytes());
    out.extend_from_slice(&28u32.to_be_bytes());
    for s in 0..n {
        for r in 0..784 {
            // Exact inverse of p/255: the quotient is within half an ulp of
            // the rational, so rounding p*255 recovers the byte.
            out.push((ds.images.get(r, s) * 255.0).round() as u8);
        }
    }
    out
}

pub fn serialize_labels(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + ds.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    out.extend_from_slice(&ds.labels);
    out
}

/// One training mini-batch: clamped inputs and one-hot targets.
pub struct MiniBatch {
    pub input: Matrix,
    pub target: Matrix,
    pub indices: Vec<usize>,
}

/// Seeded shuffled mini-batches for one epoch. The permutation is keyed by
/// `(seed, epoch)` exactly as the trainers key theirs, the final short
/// batch is included, and targets are one-hot over 10 classes.
pub struct BatchIter<'a> {
    data: DatasetView<'a>,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl<'a> Iterator for BatchIter<'a> {
    type Item = MiniBatch;

    fn next(&mut self) -> Option<MiniBatch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let indices = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        let (input, target) = self.data.gather(&indices, 10);
        Some(MiniBatch {
            input,
            target,
            indices,
        })
    }
}

pub fn batches(dataset: &Dataset, batch_size: usize, seed: u64, epoch: usize) -> BatchIter<'_> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    assert!(!dataset.is_empty(), "cannot batch an empty dataset");
    BatchIter {
        data: dataset.view(),
        order: epoch_permutation(seed, epoch, dataset.len()),
        batch_size,
        cursor: 0,
    }
}
