use crate::linalg::{SeededRng, Tensor};
use crate::{Error, Result};

/// `count` vectors in `[count, d]`, each with a uniformly random support of
/// size `k` and entries uniform on `[−1, 1]` there.
pub fn synth_sparse(d: usize, k: usize, count: usize, seed: u64) -> Result<Tensor> {
    if d == 0 || count == 0 || k > d {
        return Err(Error::invalid(format!("need 0 ≤ k ≤ d, d ≥ 1, count ≥ 1; got d={d} k={k} count={count}")));
    }
    let mut rng = SeededRng::new(seed);
    let mut out = Tensor::zeros(&[count, d]);
    for i in 0..count {
        let support = rng.subset(d, k);
        let row = out.row_mut(i);
        for j in support {
            row[j] = rng.uniform_in(-1.0, 1.0);
        }
    }
    Ok(out)
}
