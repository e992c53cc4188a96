use crate::linalg::{derive_seed, SeededRng, Tensor};
use crate::{Error, Result};

use super::spec::{LayerSpec, Shape};

/// Tensors owned by one layer. `trainable` receive gradients; `state` holds
/// running statistics. Fixed projection matrices are never stored here.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LayerParams {
    pub trainable: Vec<Tensor>,
    pub state: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub layers: Vec<LayerParams>,
}

/// Gradients laid out exactly like `Parameters::trainable`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Vec<Tensor>>,
}

impl Parameters {
    pub fn trainable(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.trainable.iter())
    }

    pub fn trainable_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.trainable.iter_mut())
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| l.trainable.iter().map(|t| Tensor::zeros(t.shape())).collect())
                .collect(),
        }
    }
}

impl Gradients {
    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.iter())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().map(Tensor::max_abs).fold(0.0, f64::max)
    }

    pub(crate) fn check_matches(&self, params: &Parameters) -> Result<()> {
        let ok = self.layers.len() == params.layers.len()
            && self.layers.iter().zip(&params.layers).all(|(g, p)| {
                g.len() == p.trainable.len()
                    && g.iter().zip(&p.trainable).all(|(a, b)| a.shape() == b.shape())
            });
        if ok {
            Ok(())
        } else {
            Err(Error::shape("gradients do not match parameters"))
        }
    }
}

/// Names of a layer's trainable and state tensors, in storage order.
pub fn tensor_names(layer: &LayerSpec) -> (&'static [&'static str], &'static [&'static str]) {
    match layer {
        LayerSpec::Dense { .. } => (&["weight", "bias"], &[]),
        LayerSpec::RpDense { .. } | LayerSpec::RpConvI { .. } | LayerSpec::RpConvII { .. } => {
            (&["u", "bias"], &[])
        }
        LayerSpec::Conv { .. } => (&["filter", "bias"], &[]),
        LayerSpec::BatchNorm { .. } => (&["scale", "shift"], &["running_mean", "running_var"]),
        LayerSpec::MaxPool { .. } | LayerSpec::Relu | LayerSpec::Flatten => (&[], &[]),
    }
}

/// Shapes of the trainable tensors of `layer` applied to `input`.
pub(crate) fn trainable_shapes(layer: &LayerSpec, input: Shape) -> Vec<Vec<usize>> {
    let c_in = input.features();
    match *layer {
        LayerSpec::Dense { units } => vec![vec![units, input.len()], vec![units]],
        LayerSpec::RpDense { n, units, .. } => vec![vec![units, n], vec![units]],
        LayerSpec::Conv { h, channels, .. } => vec![vec![h, h, c_in, channels], vec![channels]],
        LayerSpec::RpConvI { n, channels, .. } => vec![vec![channels, n], vec![channels]],
        LayerSpec::RpConvII { n, channels, .. } => vec![vec![channels, n, c_in], vec![channels]],
        LayerSpec::BatchNorm { .. } => vec![vec![c_in], vec![c_in]],
        _ => vec![],
    }
}

/// Fan-in used for He initialization: the input width of the whole linear
/// map the layer represents (`d_in`, or `c_in h²` for convolutions). For
/// random-projection layers this is the fan-in of `U·A`, which gives the
/// composite the same output variance as a dense layer of the same width.
pub(crate) fn fan_in(layer: &LayerSpec, input: Shape) -> usize {
    match *layer {
        LayerSpec::Conv { h, .. } | LayerSpec::RpConvI { h, .. } | LayerSpec::RpConvII { h, .. } => {
            input.features() * h * h
        }
        _ => input.len(),
    }
}

pub(crate) fn init_layer(layer: &LayerSpec, input: Shape, seed: u64) -> LayerParams {
    let shapes = trainable_shapes(layer, input);
    match layer {
        LayerSpec::BatchNorm { .. } => {
            let c = input.features();
            LayerParams {
                trainable: vec![Tensor::filled(&[c], 1.0), Tensor::zeros(&[c])],
                state: vec![Tensor::zeros(&[c]), Tensor::filled(&[c], 1.0)],
            }
        }
        _ if shapes.is_empty() => LayerParams::default(),
        _ => {
            let sd = (2.0 / fan_in(layer, input) as f64).sqrt();
            let mut rng = SeededRng::new(seed);
            let weight = Tensor::from_fn(&shapes[0], |_| sd * rng.normal());
            LayerParams { trainable: vec![weight, Tensor::zeros(&shapes[1])], state: vec![] }
        }
    }
}

pub(crate) fn layer_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64 + 1)
}
