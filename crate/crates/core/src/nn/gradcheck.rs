use crate::linalg::{derive_seed, Padding, SeededRng, Tensor};
use crate::Result;

use super::network::{Mode, Network};
use super::params::{tensor_names, Parameters};
use super::spec::{LayerSpec, NetworkSpec};

/// Worst disagreement found for one trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub layer: usize,
    pub name: &'static str,
    pub checked: usize,
    pub max_relative_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub step: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_relative_error).fold(0.0, f64::max)
    }
}

/// Compares backpropagated gradients with central differences of the scalar
/// loss `⟨r, f(x)⟩` for a fixed random `r`, in train mode. At most
/// `per_tensor` randomly chosen entries of each tensor are perturbed. The
/// relative error is `|g − ĝ| / max(|g|, |ĝ|, floor)`.
pub fn gradient_check(
    net: &Network,
    params: &Parameters,
    inputs: &Tensor,
    step: f64,
    floor: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = SeededRng::new(seed);
    let b = inputs.shape()[0];
    let r = Tensor::from_fn(&[b, net.outputs()], |_| rng.normal());
    let loss = |p: &Parameters| -> Result<f64> {
        let (y, _) = net.forward(p, inputs, Mode::Train)?;
        y.inner(&r)
    };
    let (_, cache) = net.forward(params, inputs, Mode::Train)?;
    let grads = net.backward(params, &cache, &r)?;

    let mut work = params.clone();
    let mut tensors = Vec::new();
    for (li, layer_grads) in grads.layers.iter().enumerate() {
        let names = tensor_names(net.layer_spec(li)).0;
        for (ti, g) in layer_grads.iter().enumerate() {
            let picks = if g.len() <= per_tensor { (0..g.len()).collect() } else { rng.subset(g.len(), per_tensor) };
            let mut worst: f64 = 0.0;
            for &k in &picks {
                let orig = work.layers[li].trainable[ti].data()[k];
                work.layers[li].trainable[ti].data_mut()[k] = orig + step;
                let up = loss(&work)?;
                work.layers[li].trainable[ti].data_mut()[k] = orig - step;
                let down = loss(&work)?;
                work.layers[li].trainable[ti].data_mut()[k] = orig;
                let numeric = (up - down) / (2.0 * step);
                let analytic = g.data()[k];
                let scale = analytic.abs().max(numeric.abs()).max(floor);
                worst = worst.max((analytic - numeric).abs() / scale);
            }
            tensors.push(TensorCheck { layer: li, name: names[ti], checked: picks.len(), max_relative_error: worst });
        }
    }
    Ok(GradCheckReport { step, tensors })
}

/// Finite-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Denominator floor used by [`grad_check`].
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Gradient check over small random networks that together contain every
/// layer type, on a 5-sample batch. Every trainable entry is perturbed.
pub fn grad_check(seed: u64) -> Result<GradCheckReport> {
    let mut rng = SeededRng::new(seed);
    let mut tensors = Vec::new();
    for (i, spec) in random_specs(&mut rng).into_iter().enumerate() {
        let net = Network::new(spec)?;
        let mut params = net.init_params(derive_seed(seed, i as u64));
        // nonzero biases and non-unit scales exercise every term
        for t in params.trainable_mut() {
            for v in t.data_mut() {
                *v += 0.1 * rng.normal();
            }
        }
        let mut shape = vec![5];
        shape.extend(net.input_shape().dims());
        let inputs = Tensor::from_fn(&shape, |_| rng.normal());
        let report =
            gradient_check(&net, &params, &inputs, GRAD_CHECK_STEP, GRAD_CHECK_FLOOR, usize::MAX, rng.next_u64())?;
        tensors.extend(report.tensors);
    }
    Ok(GradCheckReport { step: GRAD_CHECK_STEP, tensors })
}

fn random_specs(rng: &mut SeededRng) -> Vec<NetworkSpec> {
    let mut pick = |lo: usize, hi: usize| lo + rng.below(hi - lo + 1);
    let flat = NetworkSpec::new(
        vec![pick(3, 8)],
        vec![
            LayerSpec::dense(pick(3, 6)),
            LayerSpec::batch_norm(),
            LayerSpec::Relu,
            LayerSpec::rp_dense(pick(2, 5), pick(3, 6), 11),
            LayerSpec::Relu,
        ],
        pick(2, 4),
    );
    let padding = if pick(0, 1) == 0 { Padding::Same } else { Padding::Valid };
    let image = NetworkSpec::new(
        vec![pick(6, 8), 0, pick(1, 3)],
        vec![
            LayerSpec::Conv { h: 3, channels: pick(2, 3), stride: pick(1, 2), padding },
            LayerSpec::batch_norm(),
            LayerSpec::Relu,
            LayerSpec::MaxPool { h: 3, stride: 1 },
            LayerSpec::RpConvI { n: pick(2, 6), h: 3, channels: pick(2, 3), stride: 1, padding: Padding::Same, seed: 12 },
            LayerSpec::Relu,
            LayerSpec::RpConvII { n: pick(2, 5), h: 2, channels: 2, stride: 1, padding: Padding::Same, seed: 13 },
            LayerSpec::max_pool(2),
            LayerSpec::Flatten,
        ],
        pick(2, 3),
    );
    let single = NetworkSpec::new(
        vec![5, 5, 1],
        vec![
            LayerSpec::RpConvII { n: pick(2, 6), h: 3, channels: 2, stride: 2, padding: Padding::Same, seed: 14 },
            LayerSpec::Flatten,
        ],
        2,
    );
    let mut image = image;
    image.input_shape[1] = image.input_shape[0];
    vec![flat, image, single]
}
