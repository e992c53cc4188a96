//! Trainable-parameter and FLOP counts.
//!
//! Conventions: biases and batch norm are not counted, neither is the final
//! classifier nor any fully-connected layer of a network that contains a
//! convolution. Fixed projection matrices cost FLOPs but no parameters. A
//! FLOP is one multiplication or one addition, so a length-`k` dot product
//! costs `2k`.

use serde::{Deserialize, Serialize};

use crate::nn::{LayerSpec, NetworkSpec, Shape};
use crate::Result;

pub const CONVENTIONS: [&str; 5] = [
    "exclude_biases",
    "exclude_batchnorm",
    "exclude_fcnn_last_layer",
    "exclude_cnn_fc_layers",
    "rp_fixed_matrix_in_flops_not_params",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCount {
    pub layer: usize,
    pub kind: String,
    pub params: u64,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    /// Hidden layers, then the classifier (always zero).
    pub layers: Vec<LayerCount>,
    pub total_params: u64,
    pub total_flops: u64,
    pub conventions: Vec<String>,
}

pub fn count(spec: &NetworkSpec) -> Result<ComplexityReport> {
    let chain = spec.shape_chain()?;
    let skip_fc = spec.has_conv();
    let mut layers: Vec<LayerCount> = spec
        .layers
        .iter()
        .zip(&chain)
        .enumerate()
        .map(|(i, (layer, &(input, output)))| {
            let (params, flops) = if skip_fc && layer.is_fully_connected() {
                (0, 0)
            } else {
                layer_cost(layer, input, output)
            };
            LayerCount { layer: i, kind: layer.kind().to_string(), params, flops }
        })
        .collect();
    layers.push(LayerCount { layer: spec.layers.len(), kind: "classifier".into(), params: 0, flops: 0 });
    Ok(ComplexityReport {
        total_params: layers.iter().map(|l| l.params).sum(),
        total_flops: layers.iter().map(|l| l.flops).sum(),
        layers,
        conventions: CONVENTIONS.iter().map(|s| s.to_string()).collect(),
    })
}

fn layer_cost(layer: &LayerSpec, input: Shape, output: Shape) -> (u64, u64) {
    let d_in = input.len() as u64;
    let c_in = input.features() as u64;
    let p2 = match output {
        Shape::Image { side, .. } => (side * side) as u64,
        Shape::Flat(_) => 1,
    };
    match *layer {
        LayerSpec::Dense { units } => {
            let u = units as u64;
            (d_in * u, 2 * d_in * u)
        }
        LayerSpec::RpDense { n, units, .. } => {
            let (n, u) = (n as u64, units as u64);
            (n * u, 2 * (n * d_in + n * u))
        }
        LayerSpec::Conv { h, channels, .. } => {
            let (h2, c) = ((h * h) as u64, channels as u64);
            (h2 * c_in * c, 2 * p2 * h2 * c_in * c)
        }
        LayerSpec::RpConvI { n, h, channels, .. } => {
            let (n, h2, c) = (n as u64, (h * h) as u64, channels as u64);
            (n * c, 2 * p2 * (n * c_in * h2 + n * c))
        }
        LayerSpec::RpConvII { n, h, channels, .. } => {
            let (n, h2, c) = (n as u64, (h * h) as u64, channels as u64);
            (n * c * c_in, 2 * p2 * (c_in * n * h2 + n * c * c_in))
        }
        LayerSpec::MaxPool { .. } | LayerSpec::BatchNorm { .. } | LayerSpec::Relu | LayerSpec::Flatten => (0, 0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_dense_layer() {
        let r = count(&NetworkSpec::new(vec![4], vec![LayerSpec::dense(3)], 2)).unwrap();
        assert_eq!((r.total_params, r.total_flops), (12, 24));
        assert_eq!(r.layers.len(), 2);
    }

    #[test]
    fn bare_classifier_is_free() {
        let r = count(&NetworkSpec::new(vec![10], vec![], 3)).unwrap();
        assert_eq!((r.total_params, r.total_flops), (0, 0));
        assert_eq!(r.conventions.len(), 5);
    }

    #[test]
    fn invalid_chain_is_an_error() {
        assert!(count(&NetworkSpec::new(vec![5, 5, 1], vec![LayerSpec::dense(3)], 2)).is_err());
        assert!(count(&NetworkSpec::new(vec![5, 5, 1], vec![LayerSpec::conv(3, 2)], 2)).is_err());
    }
}
