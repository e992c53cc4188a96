//! CIFAR-10 binary batches: 1 label byte, then 1024 bytes per colour plane.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, Normalization};
use crate::linalg::Tensor;
use crate::{Error, Result};

pub const CIFAR_RECORD_LEN: usize = 3073;
const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;

fn read_raw(paths: &[PathBuf]) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::invalid("no CIFAR-10 batch files given"));
    }
    let (mut pixels, mut labels) = (Vec::new(), Vec::new());
    for path in paths {
        let bytes = fs::read(path).map_err(|e| Error::Data { path: path.clone(), msg: e.to_string() })?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD_LEN != 0 {
            return Err(Error::Data {
                path: path.clone(),
                msg: format!("length {} is not a positive multiple of {CIFAR_RECORD_LEN}", bytes.len()),
            });
        }
        for record in bytes.chunks_exact(CIFAR_RECORD_LEN) {
            if record[0] >= 10 {
                return Err(Error::Data { path: path.clone(), msg: format!("label {} outside 0..10", record[0]) });
            }
            labels.push(record[0] as usize);
            let planes = &record[1..];
            // planar RGB to interleaved HWC
            for at in 0..PLANE {
                for ch in 0..3 {
                    pixels.push(f64::from(planes[ch * PLANE + at]) / 255.0);
                }
            }
        }
    }
    let count = labels.len();
    Ok(Dataset {
        name: "cifar10".into(),
        inputs: Tensor::new(vec![count, SIDE, SIDE, 3], pixels)?,
        noncanonical_count: count != 50_000 && count != 10_000,
        labels,
        normalization: None,
    })
}

/// Loads and concatenates batches, then standardizes each channel with the
/// statistics of the loaded data (use for the training split).
pub fn load_cifar10(paths: &[PathBuf]) -> Result<Dataset> {
    let mut data = read_raw(paths)?;
    let stats = data.channel_stats();
    data.standardize(&stats)?;
    Ok(data)
}

/// Loads batches and standardizes them with given (training) statistics.
pub fn load_cifar10_with_stats(paths: &[PathBuf], stats: &Normalization) -> Result<Dataset> {
    let mut data = read_raw(paths)?;
    data.standardize(stats)?;
    Ok(data)
}

/// Writes `data` as one binary batch, undoing any standardization.
pub fn write_cifar10(data: &Dataset, path: &Path) -> Result<()> {
    if data.inputs.shape()[1..] != [SIDE, SIDE, 3] {
        return Err(Error::shape(format!("expected [count, 32, 32, 3], got {:?}", data.inputs.shape())));
    }
    let pixels = data.pixel_bytes()?;
    let mut out = Vec::with_capacity(data.len() * CIFAR_RECORD_LEN);
    for (label, image) in data.labels.iter().zip(pixels.chunks_exact(3 * PLANE)) {
        out.push(u8::try_from(*label).map_err(|_| Error::invalid("label does not fit in a byte"))?);
        for ch in 0..3 {
            out.extend((0..PLANE).map(|at| image[at * 3 + ch]));
        }
    }
    fs::write(path, out)?;
    Ok(())
}
