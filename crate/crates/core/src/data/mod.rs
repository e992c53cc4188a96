//! Dataset loaders and synthetic input generators.

mod cifar;
mod idx;
mod manifold;
mod synth;

use serde::{Deserialize, Serialize};

use crate::linalg::Tensor;
use crate::nn::{Examples, Targets};
use crate::{Error, Result};

pub use cifar::{load_cifar10, load_cifar10_with_stats, write_cifar10, CIFAR_RECORD_LEN};
pub use idx::{load_mnist, load_mnist_dir, read_idx, write_idx, write_mnist, IdxArray, MnistSplit};
pub use manifold::{sample_manifold, ManifoldKind, ManifoldSpec};
pub use synth::synth_sparse;

/// Per-channel standardization `(x − mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Labelled images `[count, side, side, channels]` with pixels in `[0, 1]`
/// unless `normalization` is set, in which case it has been applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub normalization: Option<Normalization>,
    /// Set when a loader saw a sample count other than the canonical one.
    pub noncanonical_count: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `count` samples.
    pub fn take(&self, count: usize) -> Dataset {
        let count = count.min(self.len());
        let per = self.inputs.len() / self.len();
        let mut shape = self.inputs.shape().to_vec();
        shape[0] = count;
        Dataset {
            name: self.name.clone(),
            inputs: Tensor::new(shape, self.inputs.data()[..count * per].to_vec()).expect("prefix shape"),
            labels: self.labels[..count].to_vec(),
            normalization: self.normalization.clone(),
            noncanonical_count: self.noncanonical_count,
        }
    }

    pub fn examples(&self) -> Examples {
        Examples { inputs: self.inputs.clone(), targets: Targets::Classes(self.labels.clone()) }
    }

    /// Per-channel mean and population standard deviation (1 where the
    /// channel is constant).
    pub fn channel_stats(&self) -> Normalization {
        let c = *self.inputs.shape().last().expect("rank ≥ 1");
        let rows = (self.inputs.len() / c) as f64;
        let mut mean = vec![0.0; c];
        for px in self.inputs.data().chunks(c) {
            mean.iter_mut().zip(px).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= rows);
        let mut var = vec![0.0; c];
        for px in self.inputs.data().chunks(c) {
            for j in 0..c {
                var[j] += (px[j] - mean[j]).powi(2);
            }
        }
        let std = var.iter().map(|v| (v / rows).sqrt()).map(|s| if s > 0.0 { s } else { 1.0 }).collect();
        Normalization { mean, std }
    }

    /// Applies `stats`. Refuses to standardize twice.
    pub fn standardize(&mut self, stats: &Normalization) -> Result<()> {
        if self.normalization.is_some() {
            return Err(Error::invalid(format!("{} is already standardized", self.name)));
        }
        let c = *self.inputs.shape().last().expect("rank ≥ 1");
        if stats.mean.len() != c || stats.std.len() != c {
            return Err(Error::shape(format!("statistics for {} channels, data has {c}", stats.mean.len())));
        }
        for px in self.inputs.data_mut().chunks_mut(c) {
            for ((v, m), s) in px.iter_mut().zip(&stats.mean).zip(&stats.std) {
                *v = (*v - m) / s;
            }
        }
        self.normalization = Some(stats.clone());
        Ok(())
    }

    /// Pixels as bytes `round(255 x)`, undoing any standardization.
    pub(crate) fn pixel_bytes(&self) -> Result<Vec<u8>> {
        let c = *self.inputs.shape().last().expect("rank ≥ 1");
        let mut out = Vec::with_capacity(self.inputs.len());
        for (i, &v) in self.inputs.data().iter().enumerate() {
            let raw = match &self.normalization {
                Some(n) => v * n.std[i % c] + n.mean[i % c],
                None => v,
            };
            let b = (raw * 255.0).round();
            if !(0.0..=255.0).contains(&b) {
                return Err(Error::invalid(format!("pixel value {raw} outside [0, 1]")));
            }
            out.push(b as u8);
        }
        Ok(out)
    }
}
