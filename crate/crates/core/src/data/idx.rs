//! IDX files, optionally gzip-compressed.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::Dataset;
use crate::linalg::Tensor;
use crate::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// An unsigned-byte IDX array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn data_error(path: &Path, msg: impl Into<String>) -> Error {
    Error::Data { path: path.to_path_buf(), msg: msg.into() }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| data_error(path, e.to_string()))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| data_error(path, format!("corrupt gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Reads an IDX file whose element type is unsigned byte.
pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = read_maybe_gz(path)?;
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
        return Err(data_error(path, "bad magic: not an unsigned-byte IDX file"));
    }
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(data_error(path, "truncated header"));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| data_error(path, "dimensions overflow"))?;
    let payload = &bytes[header..];
    if payload.len() < len {
        return Err(data_error(path, format!("truncated payload: {} of {len} bytes", payload.len())));
    }
    if payload.len() > len {
        return Err(data_error(path, format!("{} bytes after the payload", payload.len() - len)));
    }
    Ok(IdxArray { dims, data: payload.to_vec() })
}

/// Writes an uncompressed unsigned-byte IDX file.
pub fn write_idx(path: &Path, array: &IdxArray) -> Result<()> {
    let len: usize = array.dims.iter().product();
    if len != array.data.len() || array.dims.len() > 255 {
        return Err(Error::shape(format!("dims {:?} do not match {} bytes", array.dims, array.data.len())));
    }
    let mut out = vec![0, 0, 0x08, array.dims.len() as u8];
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    fs::write(path, out)?;
    Ok(())
}

fn magic(bytes: &IdxArray) -> u32 {
    0x0800 | bytes.dims.len() as u32
}

/// Loads an image/label IDX pair, scaling pixels by 1/255 into
/// `[count, rows, cols, 1]`.
pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = read_idx(images_path)?;
    if magic(&images) != IMAGES_MAGIC {
        return Err(data_error(images_path, "bad magic: expected a rank-3 image file"));
    }
    let labels = read_idx(labels_path)?;
    if magic(&labels) != LABELS_MAGIC {
        return Err(data_error(labels_path, "bad magic: expected a rank-1 label file"));
    }
    let (count, rows, cols) = (images.dims[0], images.dims[1], images.dims[2]);
    if labels.dims[0] != count {
        return Err(data_error(labels_path, format!("{} labels for {count} images", labels.dims[0])));
    }
    if count == 0 || rows == 0 || cols == 0 {
        return Err(data_error(images_path, "empty image file"));
    }
    if let Some(bad) = labels.data.iter().find(|&&l| l >= 10) {
        return Err(data_error(labels_path, format!("label {bad} outside 0..10")));
    }
    let inputs = Tensor::new(vec![count, rows, cols, 1], images.data.iter().map(|&b| f64::from(b) / 255.0).collect())?;
    Ok(Dataset {
        name: "mnist".into(),
        inputs,
        labels: labels.data.iter().map(|&l| l as usize).collect(),
        normalization: None,
        noncanonical_count: count != 60_000 && count != 10_000,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

/// Loads a split from a directory holding the canonical file names, with
/// or without a `.gz` suffix.
pub fn load_mnist_dir(dir: &Path, split: MnistSplit) -> Result<Dataset> {
    let prefix = match split {
        MnistSplit::Train => "train",
        MnistSplit::Test => "t10k",
    };
    let find = |stem: String| -> Result<PathBuf> {
        let plain = dir.join(&stem);
        let gz = dir.join(format!("{stem}.gz"));
        [plain.clone(), gz].into_iter().find(|p| p.is_file()).ok_or_else(|| data_error(&plain, "file not found"))
    };
    load_mnist(&find(format!("{prefix}-images-idx3-ubyte"))?, &find(format!("{prefix}-labels-idx1-ubyte"))?)
}

/// Writes `data` as an image/label IDX pair.
pub fn write_mnist(data: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let shape = data.inputs.shape();
    if shape.len() != 4 || shape[3] != 1 {
        return Err(Error::shape(format!("expected [count, rows, cols, 1], got {shape:?}")));
    }
    write_idx(images_path, &IdxArray { dims: shape[..3].to_vec(), data: data.pixel_bytes()? })?;
    let labels = data.labels.iter().map(|&l| u8::try_from(l)).collect::<std::result::Result<Vec<_>, _>>();
    let labels = labels.map_err(|_| Error::invalid("label does not fit in a byte"))?;
    write_idx(labels_path, &IdxArray { dims: vec![labels.len()], data: labels })
}
