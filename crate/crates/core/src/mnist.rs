//! Reader for the IDX byte format used by the MNIST distribution: a
//! big-endian magic/dimension header followed by raw uint8 payload. Files
//! may be raw or gzip-compressed (detected by the 0x1f8b magic).

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::bufread::GzDecoder;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Normalized pixel tensors, `[H][W][C]` with C = 1.
    pub images: Vec<Tensor>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Borrowing subset view is not needed; tests slice by cloning ranges.
    pub fn truncate(&mut self, n: usize) {
        self.images.truncate(n);
        self.labels.truncate(n);
    }
}

fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut reader = BufReader::new(file);
    let mut magic = [0u8; 2];
    let n = reader
        .read(&mut magic)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    // reopen to keep the reader simple
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader2 = BufReader::new(file);
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(GzDecoder::new(reader2)))
    } else {
        Ok(Box::new(reader2))
    }
}

fn read_u32_be(r: &mut dyn Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(u32::from_be_bytes(buf))
}

/// Reads an IDX image file into raw u8 pixel rows.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<(Vec<Vec<u8>>, usize, usize)> {
    let path = path.as_ref();
    let mut r = open_maybe_gz(path)?;
    let magic = read_u32_be(r.as_mut(), path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Schema(format!(
            "{}: image magic {magic}, expected {IMAGE_MAGIC}",
            path.display()
        )));
    }
    let count = read_u32_be(r.as_mut(), path)? as usize;
    let rows = read_u32_be(r.as_mut(), path)? as usize;
    let cols = read_u32_be(r.as_mut(), path)? as usize;
    let mut images = Vec::with_capacity(count);
    let mut buf = vec![0u8; rows * cols];
    for _ in 0..count {
        r.read_exact(&mut buf)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        images.push(buf.clone());
    }
    Ok((images, rows, cols))
}

/// Reads an IDX label file.
pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let mut r = open_maybe_gz(path)?;
    let magic = read_u32_be(r.as_mut(), path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Schema(format!(
            "{}: label magic {magic}, expected {LABEL_MAGIC}",
            path.display()
        )));
    }
    let count = read_u32_be(r.as_mut(), path)? as usize;
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(labels)
}

fn find_file(dir: &Path, stem: &str) -> Result<std::path::PathBuf> {
    let raw = dir.join(stem);
    if raw.exists() {
        return Ok(raw);
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::io(
        raw.display().to_string(),
        std::io::Error::new(std::io::ErrorKind::NotFound, "no such file (also tried .gz)"),
    ))
}

fn to_dataset(images: Vec<Vec<u8>>, labels: Vec<u8>, rows: usize, cols: usize) -> Result<Dataset> {
    if images.len() != labels.len() {
        return Err(Error::Validation(format!(
            "image count {} != label count {}",
            images.len(),
            labels.len()
        )));
    }
    let tensors = images
        .into_iter()
        .map(|img| {
            let data: Vec<f64> = img.iter().map(|&p| p as f64 / 255.0).collect();
            Tensor::from_vec(&[rows, cols, 1], data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        images: tensors,
        labels,
        rows,
        cols,
    })
}

/// Loads the standard four-file layout from `dir`:
/// `train-images-idx3-ubyte`, `train-labels-idx1-ubyte`,
/// `t10k-images-idx3-ubyte`, `t10k-labels-idx1-ubyte` (raw or `.gz`).
pub fn load_mnist(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let (train_imgs, rows, cols) = read_idx_images(find_file(dir, "train-images-idx3-ubyte")?)?;
    let train_labels = read_idx_labels(find_file(dir, "train-labels-idx1-ubyte")?)?;
    let (test_imgs, trows, tcols) = read_idx_images(find_file(dir, "t10k-images-idx3-ubyte")?)?;
    let test_labels = read_idx_labels(find_file(dir, "t10k-labels-idx1-ubyte")?)?;
    if (rows, cols) != (trows, tcols) {
        return Err(Error::Validation("train/test image sizes differ".into()));
    }
    Ok((
        to_dataset(train_imgs, train_labels, rows, cols)?,
        to_dataset(test_imgs, test_labels, trows, tcols)?,
    ))
}
