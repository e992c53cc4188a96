//! Reference architectures and their random-projection variants.
//!
//! Every hidden layer of a variant uses the same projection width `n`; the
//! classifier and the fully-connected layers of convolutional nets stay
//! dense. Projection seeds are derived from a base seed and the layer index.

use serde::{Deserialize, Serialize};

use crate::linalg::derive_seed;

use super::spec::{LayerSpec, NetworkSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Variant {
    Original,
    /// Fully-connected hidden layers become `RpDense` of width `n`.
    RpDense { n: usize },
    /// Convolutions become `RpConvI` with an `[n, c_in h²]` projection.
    #[serde(rename = "approach_i")]
    ApproachI { n: usize },
    /// Convolutions become `RpConvII` with a shared `[n, h²]` projection.
    #[serde(rename = "approach_ii")]
    ApproachII { n: usize },
}

/// `FC h₁, ReLU → … → FC outputs`.
pub fn fcnn(input: Vec<usize>, hidden: &[usize], outputs: usize, variant: Variant, seed: u64) -> NetworkSpec {
    let mut layers = Vec::new();
    if input.len() > 1 {
        layers.push(LayerSpec::Flatten);
    }
    for &units in hidden {
        let s = derive_seed(seed, layers.len() as u64);
        layers.push(match variant {
            Variant::RpDense { n } => LayerSpec::rp_dense(n, units, s),
            _ => LayerSpec::dense(units),
        });
        layers.push(LayerSpec::Relu);
    }
    NetworkSpec::new(input, layers, outputs)
}

/// `(5x5 CONV c, BN, ReLU, 3x3 MP)` per entry of `channels`, then
/// `FC fc, BN, ReLU → FC outputs`.
pub fn cnn(
    input: Vec<usize>,
    channels: &[usize],
    fc: usize,
    outputs: usize,
    variant: Variant,
    seed: u64,
) -> NetworkSpec {
    let mut layers = Vec::new();
    for &c in channels {
        let s = derive_seed(seed, layers.len() as u64);
        layers.push(match variant {
            Variant::ApproachI { n } => LayerSpec::rp_conv_i(n, 5, c, s),
            Variant::ApproachII { n } => LayerSpec::rp_conv_ii(n, 5, c, s),
            _ => LayerSpec::conv(5, c),
        });
        layers.extend([LayerSpec::batch_norm(), LayerSpec::Relu, LayerSpec::max_pool(3)]);
    }
    layers.extend([LayerSpec::Flatten, LayerSpec::dense(fc), LayerSpec::batch_norm(), LayerSpec::Relu]);
    NetworkSpec::new(input, layers, outputs)
}

pub fn mnist_fcnn(variant: Variant, seed: u64) -> NetworkSpec {
    fcnn(vec![28, 28, 1], &[1024, 1024], 10, variant, seed)
}

pub fn cifar_fcnn(variant: Variant, seed: u64) -> NetworkSpec {
    fcnn(vec![32, 32, 3], &[4096, 4096], 10, variant, seed)
}

pub fn mnist_cnn(variant: Variant, seed: u64) -> NetworkSpec {
    cnn(vec![28, 28, 1], &[64, 128], 512, 10, variant, seed)
}

pub fn cifar_cnn(variant: Variant, seed: u64) -> NetworkSpec {
    cnn(vec![32, 32, 3], &[128, 192, 256], 512, 10, variant, seed)
}
