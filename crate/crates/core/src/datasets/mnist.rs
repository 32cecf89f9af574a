//! MNIST in IDX format.
//!
//! Images: magic `0x00000803`, dims `n, 28, 28`, then `n·784` unsigned bytes.
//! Labels: magic `0x00000801`, dim `n`, then `n` bytes. All big-endian.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::nn::Sample;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const PIXELS: usize = 28 * 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistSet {
    /// Row-major 28×28 images scaled to `[0, 1]`.
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl MnistSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn samples(&self) -> Vec<Sample> {
        self.images
            .iter()
            .zip(&self.labels)
            .map(|(x, y)| Sample::new(x.clone(), *y))
            .collect()
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        offset,
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32, DatasetError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| {
            parse_err(
                bytes.len(),
                format!("header truncated, expected 4 bytes at offset {offset}"),
            )
        })
}

/// Parse an IDX image file into `(rows, cols, pixels)`, one byte vector per image.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<u8>>), DatasetError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(parse_err(
            0,
            format!("bad magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let need = 16 + n * size;
    if bytes.len() < need {
        let whole = (bytes.len() - 16) / size.max(1);
        return Err(parse_err(
            16 + whole * size,
            format!(
                "image data truncated: {n} images need {need} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    let images = bytes[16..need]
        .chunks_exact(size.max(1))
        .take(n)
        .map(<[u8]>::to_vec)
        .collect();
    Ok((rows, cols, images))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DatasetError> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(parse_err(
            0,
            format!("bad magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(bytes, 4)? as usize;
    if bytes.len() < 8 + n {
        return Err(parse_err(
            bytes.len(),
            format!(
                "label data truncated: {n} labels need {} bytes, file has {}",
                8 + n,
                bytes.len()
            ),
        ));
    }
    let labels = bytes[8..8 + n].to_vec();
    if let Some(i) = labels.iter().position(|&l| l > 9) {
        return Err(parse_err(8 + i, format!("label {} out of range", labels[i])));
    }
    Ok(labels)
}

pub fn encode_idx_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        assert_eq!(img.len(), rows * cols, "image size does not match header");
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read(path: &Path) -> Result<Vec<u8>, DatasetError> {
    std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Indices of a class-stratified subset, in ascending order.
///
/// Each class gets its proportional share (largest remainders break ties
/// toward lower class ids); members within a class are a seeded shuffle.
pub fn stratified_indices(labels: &[u8], size: usize, seed: u64) -> Vec<usize> {
    let n = labels.len();
    if size >= n {
        return (0..n).collect();
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); 10];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut quota: Vec<usize> = by_class.iter().map(|c| c.len() * size / n).collect();
    let mut rest: Vec<(usize, usize)> = by_class
        .iter()
        .enumerate()
        .map(|(k, c)| ((c.len() * size) % n, k))
        .collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = size - quota.iter().sum::<usize>();
    for &(_, k) in rest.iter().take(short) {
        quota[k] += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(size);
    for (members, q) in by_class.iter_mut().zip(quota) {
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..q]);
    }
    chosen.sort_unstable();
    chosen
}

/// Load an image/label file pair and keep a seeded stratified subset.
/// `subset_size` at or above the file size keeps everything.
pub fn load_mnist(
    images_path: &Path,
    labels_path: &Path,
    subset_size: usize,
    seed: u64,
) -> Result<MnistSet, DatasetError> {
    let (rows, cols, images) = parse_idx_images(&read(images_path)?)?;
    if rows * cols != PIXELS {
        return Err(parse_err(8, format!("expected 28×28 images, found {rows}×{cols}")));
    }
    let labels = parse_idx_labels(&read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(DatasetError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let keep = stratified_indices(&labels, subset_size, seed);
    Ok(MnistSet {
        images: keep
            .iter()
            .map(|&i| images[i].iter().map(|&p| p as f64 / 255.0).collect())
            .collect(),
        labels: keep.iter().map(|&i| labels[i] as usize).collect(),
    })
}
