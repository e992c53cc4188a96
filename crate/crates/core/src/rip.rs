//! Restricted isometry constants.
//!
//! All constants use the non-squared form: `δ_s` is the smallest value with
//! `(1 - δ_s)‖y‖₂ ≤ ‖Ay‖₂ ≤ (1 + δ_s)‖y‖₂` for every `s`-sparse `y`. Over
//! one support `S` this is `max(1 - σ_min(A_S), σ_max(A_S) - 1)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{symmetric_eigenvalues, SeededRng, Tensor};
use crate::{Error, Result};

pub const DEFAULT_SUPPORT_CAP: u64 = 2_000_000;
pub const CONVENTION: &str = "non-squared-norm";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub s: usize,
    pub delta_exact: Option<f64>,
    pub delta_lower: f64,
    pub trials: usize,
    pub seed: u64,
    pub convention: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldDistortionReport {
    pub delta_observed: f64,
    pub pairs: usize,
    pub points: usize,
}

/// Which estimator [`delta_with_transform`] runs on the reduced matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeltaMode {
    Exact { cap: u64 },
    MonteCarlo { trials: usize, seed: u64 },
}

fn require_matrix(a: &Tensor, s: usize) -> Result<(usize, usize)> {
    let &[n, d] = a.shape() else {
        return Err(Error::shape(format!("RIP needs a matrix, got {:?}", a.shape())));
    };
    if s == 0 || s > d {
        return Err(Error::invalid(format!("sparsity {s} must lie in 1..={d}")));
    }
    Ok((n, d))
}

pub fn binomial(d: usize, s: usize) -> u128 {
    if s > d {
        return 0;
    }
    let s = s.min(d - s);
    (0..s).fold(1u128, |acc, i| acc * (d - i) as u128 / (i + 1) as u128)
}

/// Advances `idx` to the next `s`-subset of `0..d` in lexicographic order.
fn next_combination(idx: &mut [usize], d: usize) -> bool {
    let s = idx.len();
    let mut i = s;
    while i > 0 {
        i -= 1;
        if idx[i] < d - s + i {
            idx[i] += 1;
            for j in i + 1..s {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn support_delta(gram: &[f64], d: usize, support: &[usize], scratch: &mut Vec<f64>) -> f64 {
    let s = support.len();
    scratch.clear();
    for &i in support {
        for &j in support {
            scratch.push(gram[i * d + j]);
        }
    }
    let ev = symmetric_eigenvalues(scratch, s);
    let smin = ev[0].max(0.0).sqrt();
    let smax = ev[s - 1].max(0.0).sqrt();
    (1.0 - smin).max(smax - 1.0)
}

/// Exact `δ_s` by enumerating every support, with the default cap.
pub fn delta_exact(a: &Tensor, s: usize) -> Result<f64> {
    delta_exact_capped(a, s, DEFAULT_SUPPORT_CAP)
}

/// Exact `δ_s`, refusing instances with more than `cap` supports.
///
/// Supports are visited in lexicographic order, split by leading index
/// across threads; the maximum is schedule independent.
pub fn delta_exact_capped(a: &Tensor, s: usize, cap: u64) -> Result<f64> {
    let (_, d) = require_matrix(a, s)?;
    let supports = binomial(d, s);
    if supports > cap as u128 {
        return Err(Error::InstanceTooLarge { supports, cap });
    }
    let gram = a.t_matmul(a)?;
    let gram = gram.data();
    let best = (0..=d - s)
        .into_par_iter()
        .map(|first| {
            let mut idx: Vec<usize> = (first..first + s).collect();
            let mut scratch = Vec::with_capacity(s * s);
            let mut best = 0.0f64;
            loop {
                best = best.max(support_delta(gram, d, &idx, &mut scratch));
                if !next_combination(&mut idx, d) || idx[0] != first {
                    break;
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// Monte Carlo lower bound on `δ_s`: the largest `|‖Ay‖₂ - 1|` over `trials`
/// random unit `s`-sparse `y` (uniform support, normalized Gaussian values).
pub fn delta_monte_carlo(a: &Tensor, s: usize, trials: usize, seed: u64) -> Result<f64> {
    let (n, d) = require_matrix(a, s)?;
    let columns = a.transpose()?;
    let mut rng = SeededRng::new(seed);
    let mut image = vec![0.0; n];
    let mut best = 0.0f64;
    for _ in 0..trials {
        let support = rng.subset(d, s);
        let mut coef: Vec<f64> = (0..s).map(|_| rng.normal()).collect();
        let len = coef.iter().map(|c| c * c).sum::<f64>().sqrt();
        if len == 0.0 {
            continue;
        }
        coef.iter_mut().for_each(|c| *c /= len);
        image.iter_mut().for_each(|v| *v = 0.0);
        for (&j, &c) in support.iter().zip(&coef) {
            for (v, &col) in image.iter_mut().zip(columns.row(j)) {
                *v += c * col;
            }
        }
        let norm = image.iter().map(|v| v * v).sum::<f64>().sqrt();
        best = best.max((norm - 1.0).abs());
    }
    Ok(best)
}

/// `δ_s` over `{y : ‖Wy‖₀ ≤ s}` for orthogonal `W`, computed as the plain
/// constant of `A·Wᵀ`.
pub fn delta_with_transform(a: &Tensor, w: &Tensor, s: usize, mode: DeltaMode) -> Result<f64> {
    let (_, d) = require_matrix(a, s)?;
    if w.shape() != [d, d] {
        return Err(Error::shape(format!("transform must be [{d}, {d}], got {:?}", w.shape())));
    }
    let wtw = w.t_matmul(w)?;
    let dev = wtw.sub(&Tensor::eye(d))?.max_abs();
    if dev > 1e-8 {
        return Err(Error::invalid(format!("transform is not orthogonal: |WᵀW - I| = {dev:e}")));
    }
    let reduced = a.matmul_t(w)?;
    match mode {
        DeltaMode::Exact { cap } => delta_exact_capped(&reduced, s, cap),
        DeltaMode::MonteCarlo { trials, seed } => delta_monte_carlo(&reduced, s, trials, seed),
    }
}

/// Exact and/or Monte Carlo estimates bundled in a report.
pub fn rip_report(
    a: &Tensor,
    s: usize,
    exact_cap: Option<u64>,
    trials: usize,
    seed: u64,
) -> Result<RipReport> {
    let delta_exact = exact_cap.map(|cap| delta_exact_capped(a, s, cap)).transpose()?;
    let delta_lower = delta_monte_carlo(a, s, trials, seed)?;
    Ok(RipReport { s, delta_exact, delta_lower, trials, seed, convention: CONVENTION.to_string() })
}

/// Largest relative distortion `|‖A(x-y)‖₂ / ‖x-y‖₂ - 1|` over all pairs of
/// rows of `points` (`[count, d]`) that are more than `1e-12` apart.
pub fn manifold_distortion(a: &Tensor, points: &Tensor) -> Result<ManifoldDistortionReport> {
    if a.rank() != 2 || points.rank() != 2 || points.cols() != a.cols() {
        return Err(Error::shape(format!(
            "points {:?} do not match matrix {:?}",
            points.shape(),
            a.shape()
        )));
    }
    let count = points.rows();
    let images = points.matmul_t(a)?;
    let (delta, pairs) = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut best = 0.0f64;
            let mut pairs = 0usize;
            for j in i + 1..count {
                let dx = dist(points.row(i), points.row(j));
                if dx <= 1e-12 {
                    continue;
                }
                let dy = dist(images.row(i), images.row(j));
                best = best.max((dy / dx - 1.0).abs());
                pairs += 1;
            }
            (best, pairs)
        })
        .reduce(|| (0.0, 0), |(a, p), (b, q)| (a.max(b), p + q));
    if pairs == 0 {
        return Err(Error::TooFewPoints);
    }
    Ok(ManifoldDistortionReport { delta_observed: delta, pairs, points: count })
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, random_orthoprojector};

    #[test]
    fn combinations_are_lexicographic() {
        let mut idx = vec![0, 1];
        let mut seen = vec![idx.clone()];
        while next_combination(&mut idx, 4) {
            seen.push(idx.clone());
        }
        assert_eq!(
            seen,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(binomial(20, 2), 190);
        assert_eq!(binomial(64, 4), 635_376);
    }

    #[test]
    fn identity_and_scaled_identity() {
        assert_eq!(delta_exact(&Tensor::eye(4), 2).unwrap(), 0.0);
        assert!((delta_exact(&Tensor::eye(4).scale(2.0), 1).unwrap() - 1.0).abs() < 1e-15);
        assert!(delta_monte_carlo(&Tensor::eye(4), 2, 1000, 1).unwrap() < 1e-12);
    }

    #[test]
    fn zero_trials_is_zero() {
        let a = gaussian_matrix(5, 8, 1).unwrap();
        assert_eq!(delta_monte_carlo(a.entries(), 3, 0, 9).unwrap(), 0.0);
    }

    #[test]
    fn zero_column_forces_delta_at_least_one() {
        let mut a = gaussian_matrix(4, 6, 2).unwrap().into_entries();
        for i in 0..4 {
            a.set(&[i, 3], 0.0);
        }
        assert!(delta_exact(&a, 1).unwrap() >= 1.0);
        assert!(delta_exact(&a, 2).unwrap() >= 1.0);
    }

    #[test]
    fn cap_is_enforced() {
        let a = gaussian_matrix(4, 30, 3).unwrap();
        let err = delta_exact_capped(a.entries(), 3, 100).unwrap_err();
        assert!(matches!(err, Error::InstanceTooLarge { supports: 4060, cap: 100 }));
        assert!(err.to_string().contains("too large for exact oracle"));
    }

    #[test]
    fn rejects_bad_sparsity() {
        let a = Tensor::eye(3);
        assert!(delta_exact(&a, 0).is_err());
        assert!(delta_exact(&a, 4).is_err());
        assert!(delta_monte_carlo(&a, 4, 10, 0).is_err());
    }

    #[test]
    fn two_sparse_against_closed_form_svd() {
        let a = gaussian_matrix(12, 20, 42).unwrap();
        let a = a.entries();
        let got = delta_exact(a, 2).unwrap();
        let mut want = 0.0f64;
        for i in 0..20 {
            for j in i + 1..20 {
                let ci: Vec<f64> = (0..12).map(|r| a.get(&[r, i])).collect();
                let cj: Vec<f64> = (0..12).map(|r| a.get(&[r, j])).collect();
                let p: f64 = ci.iter().map(|v| v * v).sum();
                let q: f64 = cj.iter().map(|v| v * v).sum();
                let r: f64 = ci.iter().zip(&cj).map(|(x, y)| x * y).sum();
                let mid = 0.5 * (p + q);
                let rad = (0.25 * (p - q) * (p - q) + r * r).sqrt();
                let (lo, hi) = ((mid - rad).sqrt(), (mid + rad).sqrt());
                want = want.max((1.0 - lo).max(hi - 1.0));
            }
        }
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        let mc = delta_monte_carlo(a, 2, 5000, 42).unwrap();
        assert!(mc <= got + 1e-10);
    }

    #[test]
    fn monotone_in_sparsity() {
        let a = gaussian_matrix(10, 14, 8).unwrap();
        let mut prev = 0.0;
        for s in 1..=4 {
            let d = delta_exact(a.entries(), s).unwrap();
            assert!(d + 1e-12 >= prev);
            prev = d;
        }
    }

    #[test]
    fn single_column_scaling_law() {
        let a = gaussian_matrix(6, 9, 4).unwrap().into_entries();
        let cols = a.transpose().unwrap();
        let norms: Vec<f64> = (0..9).map(|j| crate::linalg::norm(cols.row(j))).collect();
        let lo = norms.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = norms.iter().cloned().fold(0.0, f64::max);
        for c in [0.5f64, 1.0, 2.0] {
            let want = (c * hi - 1.0).max(1.0 - c * lo);
            let got = delta_exact(&a.scale(c), 1).unwrap();
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn transform_reduction() {
        let a = gaussian_matrix(12, 20, 42).unwrap();
        let a = a.entries();
        let exact = DeltaMode::Exact { cap: DEFAULT_SUPPORT_CAP };
        let plain = delta_exact(a, 2).unwrap();
        let same = delta_with_transform(a, &Tensor::eye(20), 2, exact).unwrap();
        assert_eq!(plain, same);

        // permutation of the identity
        let mut perm = Tensor::zeros(&[4, 4]);
        for (i, j) in [(0, 2), (1, 0), (2, 3), (3, 1)] {
            perm.set(&[i, j], 1.0);
        }
        assert_eq!(delta_with_transform(&Tensor::eye(4), &perm, 2, exact).unwrap(), 0.0);

        let w = random_orthoprojector(20, 20, 6).unwrap().into_entries();
        let got = delta_with_transform(a, &w, 2, exact).unwrap();
        let direct = delta_exact(&a.matmul_t(&w).unwrap(), 2).unwrap();
        assert!((got - direct).abs() < 1e-12);

        let skew = Tensor::eye(20).scale(1.1);
        assert!(delta_with_transform(a, &skew, 2, exact).is_err());
    }

    #[test]
    fn transform_sparse_vectors_sampled_directly() {
        // Vectors y = Wᵀz with z 2-sparse: their distortion under A never
        // exceeds the reduced constant.
        let a = gaussian_matrix(12, 20, 42).unwrap().into_entries();
        let w = random_orthoprojector(20, 20, 6).unwrap().into_entries();
        let bound = delta_with_transform(&a, &w, 2, DeltaMode::Exact { cap: 1_000 }).unwrap();
        let mut rng = SeededRng::new(3);
        let mut worst = 0.0f64;
        for _ in 0..2000 {
            let supp = rng.subset(20, 2);
            let mut z = vec![0.0; 20];
            for &i in &supp {
                z[i] = rng.normal();
            }
            let y = w.t_matvec(&z).unwrap();
            let ny = crate::linalg::norm(&y);
            let ay = a.matvec(&y).unwrap();
            worst = worst.max((crate::linalg::norm(&ay) / ny - 1.0).abs());
        }
        assert!(worst <= bound + 1e-10);
        assert!(worst > 0.5 * bound);
    }

    #[test]
    fn orthogonal_matrix_preserves_distances() {
        let a = random_orthoprojector(6, 6, 1).unwrap().into_entries();
        let mut rng = SeededRng::new(2);
        let pts = Tensor::from_fn(&[30, 6], |_| rng.normal());
        let rep = manifold_distortion(&a, &pts).unwrap();
        assert!(rep.delta_observed <= 1e-10);
        assert_eq!(rep.pairs, 30 * 29 / 2);
    }

    #[test]
    fn identical_points_rejected() {
        let a = Tensor::eye(3);
        let pts = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]).unwrap();
        let err = manifold_distortion(&a, &pts).unwrap_err();
        assert_eq!(err.to_string(), "fewer than 2 distinct points");
    }
}
