use rayon::prelude::*;

use crate::linalg::{gaussian_matrix, gemm, MatRef, PatchGeometry, Tensor};
use crate::{Error, Result};

use super::params::{init_layer, layer_seed, trainable_shapes, Gradients, LayerParams, Parameters};
use super::spec::{patch_geometry, LayerSpec, NetworkSpec, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics for batch norm; caches everything backward needs.
    Train,
    /// Running statistics for batch norm; nothing is cached.
    Eval,
}

#[derive(Clone, Debug)]
struct Layer {
    spec: LayerSpec,
    input: Shape,
    output: Shape,
    geometry: Option<PatchGeometry>,
    projection: Option<Tensor>,
}

/// A [`NetworkSpec`] with its shape chain resolved and its fixed projection
/// matrices drawn. The last layer is the affine classifier.
#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
}

/// Values saved by a train-mode forward pass for the backward pass.
#[derive(Debug)]
pub struct Cache {
    batch: usize,
    layers: Vec<LayerCache>,
}

#[derive(Debug)]
enum LayerCache {
    Empty,
    Dense { input: Vec<f64> },
    Conv { patches: Vec<f64> },
    /// Output of the fixed projection, the input of the trainable mixing.
    Projected { projected: Vec<f64> },
    MaxPool { argmax: Vec<usize> },
    BatchNorm { xhat: Vec<f64>, inv_std: Vec<f64>, mean: Vec<f64>, var: Vec<f64> },
    Relu { active: Vec<bool> },
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let chain = spec.shape_chain()?;
        let classifier = LayerSpec::Dense { units: spec.outputs };
        let layers = spec
            .layers
            .iter()
            .chain(std::iter::once(&classifier))
            .zip(chain)
            .map(|(layer, (input, output))| {
                let geometry = patch_geometry(layer, input)?;
                let projection = match *layer {
                    LayerSpec::RpDense { n, seed, .. } => {
                        Some(gaussian_matrix(n, input.len(), seed)?.into_entries())
                    }
                    LayerSpec::RpConvI { n, h, seed, .. } => {
                        Some(gaussian_matrix(n, input.features() * h * h, seed)?.into_entries())
                    }
                    LayerSpec::RpConvII { n, h, seed, .. } => {
                        Some(gaussian_matrix(n, h * h, seed)?.into_entries())
                    }
                    _ => None,
                };
                Ok(Layer { spec: layer.clone(), input, output, geometry, projection })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Network { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Hidden layers plus the classifier.
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer_spec(&self, index: usize) -> &LayerSpec {
        &self.layers[index].spec
    }

    pub fn layer_shapes(&self, index: usize) -> (Shape, Shape) {
        (self.layers[index].input, self.layers[index].output)
    }

    pub fn input_shape(&self) -> Shape {
        self.layers[0].input
    }

    pub fn outputs(&self) -> usize {
        self.spec.outputs
    }

    pub fn projection(&self, index: usize) -> Option<&Tensor> {
        self.layers[index].projection.as_ref()
    }

    /// Replaces the fixed matrix of a random-projection layer (for example
    /// with an identity). The shape must match the seeded matrix.
    pub fn set_projection(&mut self, index: usize, matrix: Tensor) -> Result<()> {
        let layer = self
            .layers
            .get_mut(index)
            .ok_or_else(|| Error::invalid(format!("no layer {index}")))?;
        match &layer.projection {
            Some(old) if old.shape() == matrix.shape() => {
                layer.projection = Some(matrix);
                Ok(())
            }
            Some(old) => Err(Error::shape(format!(
                "projection for layer {index} must be {:?}, got {:?}",
                old.shape(),
                matrix.shape()
            ))),
            None => Err(Error::invalid(format!("layer {index} has no projection"))),
        }
    }

    /// He-normal weights, zero biases, unit batch-norm scale; layer `i` draws
    /// from a sub-seed of `seed`.
    pub fn init_params(&self, seed: u64) -> Parameters {
        Parameters {
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| init_layer(&l.spec, l.input, layer_seed(seed, i)))
                .collect(),
        }
    }

    fn check_params(&self, params: &Parameters) -> Result<()> {
        if params.layers.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "parameters for {} layers, network has {}",
                params.layers.len(),
                self.layers.len()
            )));
        }
        for (i, (l, p)) in self.layers.iter().zip(&params.layers).enumerate() {
            let want = trainable_shapes(&l.spec, l.input);
            let ok = want.len() == p.trainable.len()
                && want.iter().zip(&p.trainable).all(|(w, t)| w.as_slice() == t.shape());
            if !ok {
                return Err(Error::shape(format!("parameters of layer {i} have the wrong shapes")));
            }
        }
        Ok(())
    }

    /// Runs a batch `[B, ...input_shape]` through the network, returning
    /// `[B, outputs]`.
    pub fn forward(&self, params: &Parameters, batch: &Tensor, mode: Mode) -> Result<(Tensor, Cache)> {
        self.check_params(params)?;
        let want = self.input_shape().dims();
        if batch.rank() != want.len() + 1 || batch.shape()[1..] != want[..] {
            return Err(Error::shape(format!(
                "batch {:?} does not match input shape {want:?}",
                batch.shape()
            )));
        }
        let b = batch.rows();
        let mut x = batch.data().to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (layer, p) in self.layers.iter().zip(&params.layers) {
            let (y, cache) = layer.forward(p, x, b, mode);
            x = y;
            caches.push(cache);
        }
        let out = Tensor::new(vec![b, self.outputs()], x)?;
        Ok((out, Cache { batch: b, layers: caches }))
    }

    /// Exact gradients of a scalar loss whose gradient with respect to the
    /// logits is `grad_logits`.
    pub fn backward(&self, params: &Parameters, cache: &Cache, grad_logits: &Tensor) -> Result<Gradients> {
        self.check_params(params)?;
        if grad_logits.shape() != [cache.batch, self.outputs()] || cache.layers.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "stale cache: batch {} with {} outputs, upstream gradient {:?}",
                cache.batch,
                self.outputs(),
                grad_logits.shape()
            )));
        }
        let b = cache.batch;
        let mut dy = grad_logits.data().to_vec();
        let mut grads = vec![Vec::new(); self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let (dx, g) = self.layers[i].backward(&params.layers[i], &cache.layers[i], &dy, b, i > 0)?;
            grads[i] = g;
            if let Some(dx) = dx {
                dy = dx;
            }
        }
        Ok(Gradients { layers: grads })
    }

    /// Folds the batch statistics of a train-mode pass into the batch-norm
    /// running averages.
    pub fn update_running_stats(&self, params: &mut Parameters, cache: &Cache) {
        for ((layer, p), c) in self.layers.iter().zip(params.layers.iter_mut()).zip(&cache.layers) {
            if let (LayerSpec::BatchNorm { momentum, .. }, LayerCache::BatchNorm { mean, var, .. }) =
                (&layer.spec, c)
            {
                let (rm, rv) = p.state.split_at_mut(1);
                for ((r, &m), (s, &v)) in rm[0]
                    .data_mut()
                    .iter_mut()
                    .zip(mean)
                    .zip(rv[0].data_mut().iter_mut().zip(var))
                {
                    *r = momentum * *r + (1.0 - momentum) * m;
                    *s = momentum * *s + (1.0 - momentum) * v;
                }
            }
        }
    }
}

/// `out[r, :] = x[r, :] · w + bias` for `x` row-major `[rows, k]`.
fn affine(x: &[f64], rows: usize, k: usize, w: MatRef<'_>, bias: &[f64]) -> Vec<f64> {
    let n = w.cols;
    let mut out = vec![0.0; rows * n];
    for row in out.chunks_mut(n) {
        row.copy_from_slice(bias);
    }
    gemm(1.0, MatRef::row_major(x, rows, k), w, 1.0, &mut out);
    out
}

fn matmul(a: MatRef<'_>, b: MatRef<'_>) -> Vec<f64> {
    let mut out = vec![0.0; a.rows * b.cols];
    gemm(1.0, a, b, 0.0, &mut out);
    out
}

fn column_sums(dy: &[f64], cols: usize) -> Vec<f64> {
    let mut s = vec![0.0; cols];
    for row in dy.chunks(cols) {
        for (a, v) in s.iter_mut().zip(row) {
            *a += v;
        }
    }
    s
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).expect("gradient shape")
}

/// `[h, h, c_in, c_out]` filter to the `[c_out, c_in h²]` patch-order matrix.
fn filter_matrix(f: &[f64], h: usize, c_in: usize, c_out: usize) -> Vec<f64> {
    let k = c_in * h * h;
    let mut m = vec![0.0; c_out * k];
    for pos in 0..h * h {
        for ch in 0..c_in {
            for o in 0..c_out {
                m[o * k + ch * h * h + pos] = f[(pos * c_in + ch) * c_out + o];
            }
        }
    }
    m
}

fn filter_from_matrix(m: &[f64], h: usize, c_in: usize, c_out: usize) -> Vec<f64> {
    let k = c_in * h * h;
    let mut f = vec![0.0; m.len()];
    for pos in 0..h * h {
        for ch in 0..c_in {
            for o in 0..c_out {
                f[(pos * c_in + ch) * c_out + o] = m[o * k + ch * h * h + pos];
            }
        }
    }
    f
}

/// `[c_out, n, c_in]` mixing tensor to the `[c_out, c_in n]` matrix whose
/// column `j n + r` multiplies channel `j`'s projection coordinate `r`.
fn mixing_matrix(u: &[f64], n: usize, c_in: usize, c_out: usize) -> Vec<f64> {
    let mut m = vec![0.0; u.len()];
    for o in 0..c_out {
        for r in 0..n {
            for j in 0..c_in {
                m[o * c_in * n + j * n + r] = u[(o * n + r) * c_in + j];
            }
        }
    }
    m
}

fn mixing_from_matrix(m: &[f64], n: usize, c_in: usize, c_out: usize) -> Vec<f64> {
    let mut u = vec![0.0; m.len()];
    for o in 0..c_out {
        for r in 0..n {
            for j in 0..c_in {
                u[(o * n + r) * c_in + j] = m[o * c_in * n + j * n + r];
            }
        }
    }
    u
}

impl Layer {
    fn geometry(&self) -> PatchGeometry {
        self.geometry.expect("spatial layer has a geometry")
    }

    fn patches(&self, x: &[f64], b: usize) -> Vec<f64> {
        let g = self.geometry();
        let p = g.out_size();
        let per = p * p * g.patch_len();
        let mut out = vec![0.0; b * per];
        out.par_chunks_mut(per)
            .zip(x.par_chunks(g.image_len()))
            .for_each(|(rows, image)| g.patch_rows(image, rows));
        out
    }

    fn patches_adjoint(&self, d_patches: &[f64], b: usize) -> Vec<f64> {
        let g = self.geometry();
        let p = g.out_size();
        let per = p * p * g.patch_len();
        let mut dx = vec![0.0; b * g.image_len()];
        dx.par_chunks_mut(g.image_len())
            .zip(d_patches.par_chunks(per))
            .for_each(|(image, rows)| g.patch_rows_adjoint(rows, image));
        dx
    }

    fn forward(&self, p: &LayerParams, x: Vec<f64>, b: usize, mode: Mode) -> (Vec<f64>, LayerCache) {
        let keep = mode == Mode::Train;
        let d_in = self.input.len();
        match self.spec {
            LayerSpec::Dense { units } => {
                let w = MatRef::transposed(p.trainable[0].data(), units, d_in);
                let y = affine(&x, b, d_in, w, p.trainable[1].data());
                (y, if keep { LayerCache::Dense { input: x } } else { LayerCache::Empty })
            }
            LayerSpec::RpDense { n, units, .. } => {
                let a = self.projection.as_ref().expect("projection");
                let z = matmul(MatRef::row_major(&x, b, d_in), MatRef::transposed(a.data(), n, d_in));
                let u = MatRef::transposed(p.trainable[0].data(), units, n);
                let y = affine(&z, b, n, u, p.trainable[1].data());
                let cache = if keep { LayerCache::Projected { projected: z } } else { LayerCache::Empty };
                (y, cache)
            }
            LayerSpec::Conv { h, channels, .. } => {
                let g = self.geometry();
                let (rows, k) = (b * g.out_size().pow(2), g.patch_len());
                let patches = self.patches(&x, b);
                let fm = filter_matrix(p.trainable[0].data(), h, g.c, channels);
                let y = affine(&patches, rows, k, MatRef::transposed(&fm, channels, k), p.trainable[1].data());
                (y, if keep { LayerCache::Conv { patches } } else { LayerCache::Empty })
            }
            LayerSpec::RpConvI { n, channels, .. } => {
                let g = self.geometry();
                let (rows, k) = (b * g.out_size().pow(2), g.patch_len());
                let a = self.projection.as_ref().expect("projection");
                let patches = self.patches(&x, b);
                let z = matmul(MatRef::row_major(&patches, rows, k), MatRef::transposed(a.data(), n, k));
                let u = MatRef::transposed(p.trainable[0].data(), channels, n);
                let y = affine(&z, rows, n, u, p.trainable[1].data());
                let cache = if keep { LayerCache::Projected { projected: z } } else { LayerCache::Empty };
                (y, cache)
            }
            LayerSpec::RpConvII { n, h, channels, .. } => {
                let g = self.geometry();
                let rows = b * g.out_size().pow(2);
                let a = self.projection.as_ref().expect("projection");
                let patches = self.patches(&x, b);
                // per-channel blocks of h² are contiguous inside each patch row
                let z = matmul(
                    MatRef::row_major(&patches, rows * g.c, h * h),
                    MatRef::transposed(a.data(), n, h * h),
                );
                let um = mixing_matrix(p.trainable[0].data(), n, g.c, channels);
                let y = affine(&z, rows, g.c * n, MatRef::transposed(&um, channels, g.c * n), p.trainable[1].data());
                let cache = if keep { LayerCache::Projected { projected: z } } else { LayerCache::Empty };
                (y, cache)
            }
            LayerSpec::MaxPool { .. } => {
                let (y, argmax) = self.max_pool(&x, b);
                (y, if keep { LayerCache::MaxPool { argmax } } else { LayerCache::Empty })
            }
            LayerSpec::BatchNorm { epsilon, .. } => self.batch_norm(p, x, epsilon, mode),
            LayerSpec::Relu => {
                let active: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
                let y = x.into_iter().map(|v| v.max(0.0)).collect();
                (y, if keep { LayerCache::Relu { active } } else { LayerCache::Empty })
            }
            LayerSpec::Flatten => (x, LayerCache::Empty),
        }
    }

    fn max_pool(&self, x: &[f64], b: usize) -> (Vec<f64>, Vec<usize>) {
        let g = self.geometry();
        let (m, c, h, s, lead, p) = (g.m, g.c, g.h, g.stride, g.lead(), g.out_size());
        let per_out = p * p * c;
        let mut y = vec![0.0; b * per_out];
        let mut arg = vec![0usize; b * per_out];
        y.par_chunks_mut(per_out)
            .zip(arg.par_chunks_mut(per_out))
            .zip(x.par_chunks(g.image_len()))
            .for_each(|((y, arg), image)| {
                for oi in 0..p {
                    for oj in 0..p {
                        for ch in 0..c {
                            let mut best = f64::NEG_INFINITY;
                            let mut best_at = 0;
                            for di in 0..h {
                                let Some(r) = (oi * s + di).checked_sub(lead).filter(|&r| r < m) else {
                                    continue;
                                };
                                for dj in 0..h {
                                    let Some(q) = (oj * s + dj).checked_sub(lead).filter(|&q| q < m) else {
                                        continue;
                                    };
                                    let at = (r * m + q) * c + ch;
                                    if image[at] > best {
                                        best = image[at];
                                        best_at = at;
                                    }
                                }
                            }
                            let o = (oi * p + oj) * c + ch;
                            y[o] = best;
                            arg[o] = best_at;
                        }
                    }
                }
            });
        (y, arg)
    }

    fn batch_norm(&self, p: &LayerParams, mut x: Vec<f64>, epsilon: f64, mode: Mode) -> (Vec<f64>, LayerCache) {
        let c = self.input.features();
        let rows = x.len() / c;
        let (gamma, beta) = (p.trainable[0].data(), p.trainable[1].data());
        match mode {
            Mode::Eval => {
                let (rm, rv) = (p.state[0].data(), p.state[1].data());
                let inv: Vec<f64> = rv.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();
                for row in x.chunks_mut(c) {
                    for j in 0..c {
                        row[j] = gamma[j] * (row[j] - rm[j]) * inv[j] + beta[j];
                    }
                }
                (x, LayerCache::Empty)
            }
            Mode::Train => {
                let mut mean = column_sums(&x, c);
                mean.iter_mut().for_each(|v| *v /= rows as f64);
                let mut var = vec![0.0; c];
                for row in x.chunks(c) {
                    for j in 0..c {
                        var[j] += (row[j] - mean[j]).powi(2);
                    }
                }
                var.iter_mut().for_each(|v| *v /= rows as f64);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();
                let mut xhat = x;
                for row in xhat.chunks_mut(c) {
                    for j in 0..c {
                        row[j] = (row[j] - mean[j]) * inv_std[j];
                    }
                }
                let mut y = xhat.clone();
                for row in y.chunks_mut(c) {
                    for j in 0..c {
                        row[j] = gamma[j] * row[j] + beta[j];
                    }
                }
                (y, LayerCache::BatchNorm { xhat, inv_std, mean, var })
            }
        }
    }

    fn backward(
        &self,
        p: &LayerParams,
        cache: &LayerCache,
        dy: &[f64],
        b: usize,
        need_dx: bool,
    ) -> Result<(Option<Vec<f64>>, Vec<Tensor>)> {
        let d_in = self.input.len();
        let stale = || Error::shape(format!("stale cache for {} layer", self.spec.kind()));
        let out = match (&self.spec, cache) {
            (&LayerSpec::Dense { units }, LayerCache::Dense { input }) => {
                let dw = matmul(MatRef::transposed(dy, b, units), MatRef::row_major(input, b, d_in));
                let db = column_sums(dy, units);
                let dx = need_dx.then(|| {
                    matmul(MatRef::row_major(dy, b, units), MatRef::row_major(p.trainable[0].data(), units, d_in))
                });
                (dx, vec![tensor(&[units, d_in], dw), tensor(&[units], db)])
            }
            (&LayerSpec::RpDense { n, units, .. }, LayerCache::Projected { projected }) => {
                let a = self.projection.as_ref().expect("projection");
                let du = matmul(MatRef::transposed(dy, b, units), MatRef::row_major(projected, b, n));
                let db = column_sums(dy, units);
                let dx = need_dx.then(|| {
                    let dz = matmul(MatRef::row_major(dy, b, units), MatRef::row_major(p.trainable[0].data(), units, n));
                    matmul(MatRef::row_major(&dz, b, n), MatRef::row_major(a.data(), n, d_in))
                });
                (dx, vec![tensor(&[units, n], du), tensor(&[units], db)])
            }
            (&LayerSpec::Conv { h, channels, .. }, LayerCache::Conv { patches }) => {
                let g = self.geometry();
                let (rows, k) = (b * g.out_size().pow(2), g.patch_len());
                let dfm = matmul(MatRef::transposed(dy, rows, channels), MatRef::row_major(patches, rows, k));
                let db = column_sums(dy, channels);
                let dx = need_dx.then(|| {
                    let fm = filter_matrix(p.trainable[0].data(), h, g.c, channels);
                    let dp = matmul(MatRef::row_major(dy, rows, channels), MatRef::row_major(&fm, channels, k));
                    self.patches_adjoint(&dp, b)
                });
                let df = filter_from_matrix(&dfm, h, g.c, channels);
                (dx, vec![tensor(&[h, h, g.c, channels], df), tensor(&[channels], db)])
            }
            (&LayerSpec::RpConvI { n, channels, .. }, LayerCache::Projected { projected }) => {
                let g = self.geometry();
                let (rows, k) = (b * g.out_size().pow(2), g.patch_len());
                let a = self.projection.as_ref().expect("projection");
                let du = matmul(MatRef::transposed(dy, rows, channels), MatRef::row_major(projected, rows, n));
                let db = column_sums(dy, channels);
                let dx = need_dx.then(|| {
                    let dz =
                        matmul(MatRef::row_major(dy, rows, channels), MatRef::row_major(p.trainable[0].data(), channels, n));
                    let dp = matmul(MatRef::row_major(&dz, rows, n), MatRef::row_major(a.data(), n, k));
                    self.patches_adjoint(&dp, b)
                });
                (dx, vec![tensor(&[channels, n], du), tensor(&[channels], db)])
            }
            (&LayerSpec::RpConvII { n, h, channels, .. }, LayerCache::Projected { projected }) => {
                let g = self.geometry();
                let rows = b * g.out_size().pow(2);
                let width = g.c * n;
                let a = self.projection.as_ref().expect("projection");
                let dum = matmul(MatRef::transposed(dy, rows, channels), MatRef::row_major(projected, rows, width));
                let db = column_sums(dy, channels);
                let dx = need_dx.then(|| {
                    let um = mixing_matrix(p.trainable[0].data(), n, g.c, channels);
                    let dz = matmul(MatRef::row_major(dy, rows, channels), MatRef::row_major(&um, channels, width));
                    let dp = matmul(MatRef::row_major(&dz, rows * g.c, n), MatRef::row_major(a.data(), n, h * h));
                    self.patches_adjoint(&dp, b)
                });
                let du = mixing_from_matrix(&dum, n, g.c, channels);
                (dx, vec![tensor(&[channels, n, g.c], du), tensor(&[channels], db)])
            }
            (LayerSpec::MaxPool { .. }, LayerCache::MaxPool { argmax }) => {
                let per_in = d_in;
                let per_out = self.output.len();
                let dx = need_dx.then(|| {
                    let mut dx = vec![0.0; b * per_in];
                    dx.par_chunks_mut(per_in)
                        .zip(dy.par_chunks(per_out).zip(argmax.par_chunks(per_out)))
                        .for_each(|(dx, (dy, arg))| {
                            for (&g, &at) in dy.iter().zip(arg) {
                                dx[at] += g;
                            }
                        });
                    dx
                });
                (dx, vec![])
            }
            (LayerSpec::BatchNorm { .. }, LayerCache::BatchNorm { xhat, inv_std, .. }) => {
                let c = self.input.features();
                let rows = (xhat.len() / c) as f64;
                let gamma = p.trainable[0].data();
                let mut sum_dy = vec![0.0; c];
                let mut sum_dy_xhat = vec![0.0; c];
                for (g, xh) in dy.chunks(c).zip(xhat.chunks(c)) {
                    for j in 0..c {
                        sum_dy[j] += g[j];
                        sum_dy_xhat[j] += g[j] * xh[j];
                    }
                }
                let dx = need_dx.then(|| {
                    let mut dx = vec![0.0; dy.len()];
                    for ((d, g), xh) in dx.chunks_mut(c).zip(dy.chunks(c)).zip(xhat.chunks(c)) {
                        for j in 0..c {
                            d[j] = gamma[j] * inv_std[j] / rows
                                * (rows * g[j] - sum_dy[j] - xh[j] * sum_dy_xhat[j]);
                        }
                    }
                    dx
                });
                (dx, vec![tensor(&[c], sum_dy_xhat), tensor(&[c], sum_dy)])
            }
            (LayerSpec::Relu, LayerCache::Relu { active }) => {
                let dx = need_dx
                    .then(|| dy.iter().zip(active).map(|(&g, &on)| if on { g } else { 0.0 }).collect());
                (dx, vec![])
            }
            (LayerSpec::Flatten, _) => (need_dx.then(|| dy.to_vec()), vec![]),
            _ => return Err(stale()),
        };
        Ok(out)
    }
}
