use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{Padding, PatchGeometry};
use crate::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// One layer of a feedforward stack. Activations are their own layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense { units: usize },
    /// `x ↦ U(Ax) + b` with `A` a fixed `[n, d_in]` Gaussian matrix.
    RpDense {
        n: usize,
        units: usize,
        #[serde(default)]
        seed: u64,
    },
    Conv {
        h: usize,
        channels: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: Padding,
    },
    /// Patches projected by one fixed `[n, c_in h²]` matrix, then mixed by
    /// a trainable `[c_out, n]`.
    #[serde(rename = "rp_conv_i")]
    RpConvI {
        n: usize,
        h: usize,
        channels: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: Padding,
        #[serde(default)]
        seed: u64,
    },
    /// Each input channel's `h²` patch projected by a shared `[n, h²]`
    /// matrix, then mixed per channel by a trainable `[c_out, n, c_in]` and
    /// summed over channels.
    #[serde(rename = "rp_conv_ii")]
    RpConvII {
        n: usize,
        h: usize,
        channels: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: Padding,
        #[serde(default)]
        seed: u64,
    },
    /// Max over `h × h` windows with same padding.
    MaxPool {
        h: usize,
        #[serde(default = "two")]
        stride: usize,
    },
    BatchNorm {
        #[serde(default = "bn_epsilon")]
        epsilon: f64,
        #[serde(default = "bn_momentum")]
        momentum: f64,
    },
    Relu,
    Flatten,
}

fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn bn_epsilon() -> f64 {
    BN_EPSILON
}
fn bn_momentum() -> f64 {
    BN_MOMENTUM
}

impl LayerSpec {
    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units }
    }

    pub fn rp_dense(n: usize, units: usize, seed: u64) -> Self {
        LayerSpec::RpDense { n, units, seed }
    }

    /// Same padding, stride 1.
    pub fn conv(h: usize, channels: usize) -> Self {
        LayerSpec::Conv { h, channels, stride: 1, padding: Padding::Same }
    }

    pub fn rp_conv_i(n: usize, h: usize, channels: usize, seed: u64) -> Self {
        LayerSpec::RpConvI { n, h, channels, stride: 1, padding: Padding::Same, seed }
    }

    pub fn rp_conv_ii(n: usize, h: usize, channels: usize, seed: u64) -> Self {
        LayerSpec::RpConvII { n, h, channels, stride: 1, padding: Padding::Same, seed }
    }

    /// `h × h` max pool with stride 2.
    pub fn max_pool(h: usize) -> Self {
        LayerSpec::MaxPool { h, stride: 2 }
    }

    pub fn batch_norm() -> Self {
        LayerSpec::BatchNorm { epsilon: BN_EPSILON, momentum: BN_MOMENTUM }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::RpDense { .. } => "rp_dense",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::RpConvI { .. } => "rp_conv_i",
            LayerSpec::RpConvII { .. } => "rp_conv_ii",
            LayerSpec::MaxPool { .. } => "max_pool",
            LayerSpec::BatchNorm { .. } => "batch_norm",
            LayerSpec::Relu => "relu",
            LayerSpec::Flatten => "flatten",
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::RpConvI { .. } | LayerSpec::RpConvII { .. })
    }

    pub fn is_fully_connected(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::RpDense { .. })
    }

    /// Seed of the layer's fixed projection, for random-projection layers.
    pub fn projection_seed(&self) -> Option<u64> {
        match *self {
            LayerSpec::RpDense { seed, .. }
            | LayerSpec::RpConvI { seed, .. }
            | LayerSpec::RpConvII { seed, .. } => Some(seed),
            _ => None,
        }
    }
}

/// Per-sample activation shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Flat(usize),
    /// `[side, side, channels]`, channel fastest.
    Image { side: usize, channels: usize },
}

impl Shape {
    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        match *dims {
            [d] if d > 0 => Ok(Shape::Flat(d)),
            [m, m2, c] if m == m2 && m > 0 && c > 0 => Ok(Shape::Image { side: m, channels: c }),
            _ => Err(Error::shape(format!("input shape must be [d] or [m, m, c], got {dims:?}"))),
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(d) => d,
            Shape::Image { side, channels } => side * side * channels,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Flat(d) => vec![d],
            Shape::Image { side, channels } => vec![side, side, channels],
        }
    }

    /// Extent of the axis that batch norm normalizes per feature.
    pub fn features(&self) -> usize {
        match *self {
            Shape::Flat(d) => d,
            Shape::Image { channels, .. } => channels,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Flat(d) => write!(f, "[{d}]"),
            Shape::Image { side, channels } => write!(f, "[{side}, {side}, {channels}]"),
        }
    }
}

/// Declarative network: input shape, hidden layers, and the size of the
/// final affine classifier (or regression head).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub outputs: usize,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, outputs: usize) -> Self {
        NetworkSpec { input_shape, layers, outputs }
    }

    pub fn has_conv(&self) -> bool {
        self.layers.iter().any(LayerSpec::is_conv)
    }

    /// Input and output shape of every hidden layer, then of the classifier.
    pub fn shape_chain(&self) -> Result<Vec<(Shape, Shape)>> {
        if self.outputs == 0 {
            return Err(Error::invalid("network needs at least one output"));
        }
        let mut shape = Shape::from_dims(&self.input_shape)?;
        let mut chain = Vec::with_capacity(self.layers.len() + 1);
        for (i, layer) in self.layers.iter().enumerate() {
            let out = output_shape(layer, shape).map_err(|e| match e {
                Error::Shape(msg) => Error::shape(format!("layer {i} ({}): {msg}", layer.kind())),
                Error::InvalidArgument(msg) => {
                    Error::invalid(format!("layer {i} ({}): {msg}", layer.kind()))
                }
                other => other,
            })?;
            chain.push((shape, out));
            shape = out;
        }
        let Shape::Flat(_) = shape else {
            return Err(Error::shape(format!("classifier needs a flat input, got {shape}; add Flatten")));
        };
        chain.push((shape, Shape::Flat(self.outputs)));
        Ok(chain)
    }
}

pub(crate) fn patch_geometry(layer: &LayerSpec, input: Shape) -> Result<Option<PatchGeometry>> {
    let (h, stride, padding) = match *layer {
        LayerSpec::Conv { h, stride, padding, .. }
        | LayerSpec::RpConvI { h, stride, padding, .. }
        | LayerSpec::RpConvII { h, stride, padding, .. } => (h, stride, padding),
        LayerSpec::MaxPool { h, stride } => (h, stride, Padding::Same),
        _ => return Ok(None),
    };
    let Shape::Image { side, channels } = input else {
        return Err(Error::shape(format!("needs an image input, got {input}")));
    };
    PatchGeometry::new(side, channels, h, stride, padding).map(Some)
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::invalid(format!("{name} must be positive")));
    }
    Ok(())
}

fn output_shape(layer: &LayerSpec, input: Shape) -> Result<Shape> {
    match *layer {
        LayerSpec::Dense { units } => {
            positive("units", units)?;
            match input {
                Shape::Flat(_) => Ok(Shape::Flat(units)),
                _ => Err(Error::shape(format!("dense needs a flat input, got {input}"))),
            }
        }
        LayerSpec::RpDense { n, units, .. } => {
            positive("units", units)?;
            positive("n", n)?;
            match input {
                Shape::Flat(_) => Ok(Shape::Flat(units)),
                _ => Err(Error::shape(format!("dense needs a flat input, got {input}"))),
            }
        }
        LayerSpec::Conv { channels, .. }
        | LayerSpec::RpConvI { channels, .. }
        | LayerSpec::RpConvII { channels, .. } => {
            positive("channels", channels)?;
            if let LayerSpec::RpConvI { n, .. } | LayerSpec::RpConvII { n, .. } = *layer {
                positive("n", n)?;
            }
            let g = patch_geometry(layer, input)?.expect("conv geometry");
            Ok(Shape::Image { side: g.out_size(), channels })
        }
        LayerSpec::MaxPool { .. } => {
            let g = patch_geometry(layer, input)?.expect("pool geometry");
            Ok(Shape::Image { side: g.out_size(), channels: g.c })
        }
        LayerSpec::BatchNorm { epsilon, momentum } => {
            if epsilon.is_nan() || epsilon <= 0.0 || !(0.0..1.0).contains(&momentum) {
                return Err(Error::invalid(format!(
                    "batch norm needs epsilon > 0 and momentum in [0, 1), got {epsilon}, {momentum}"
                )));
            }
            Ok(input)
        }
        LayerSpec::Relu => Ok(input),
        LayerSpec::Flatten => Ok(Shape::Flat(input.len())),
    }
}
