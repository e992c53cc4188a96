use serde::{Deserialize, Serialize};

use super::rng::{derive_seed, SeededRng};
use super::tensor::{dot, Tensor};
use crate::{Error, Result};

const MAX_ORTHO_ATTEMPTS: u32 = 8;
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    Gaussian,
    Orthoprojector,
}

/// A fixed random matrix together with the recipe that rebuilds it.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix {
    kind: ProjectionKind,
    seed: u64,
    entries: Tensor,
}

impl ProjectionMatrix {
    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    pub fn entries(&self) -> &Tensor {
        &self.entries
    }

    pub fn into_entries(self) -> Tensor {
        self.entries
    }

    /// For an orthoprojector, the matrix with orthonormal rows before the
    /// `sqrt(d/n)` scale is applied. Gaussian matrices are returned as is.
    pub fn unscaled(&self) -> Tensor {
        match self.kind {
            ProjectionKind::Gaussian => self.entries.clone(),
            ProjectionKind::Orthoprojector => {
                let scale = (self.cols() as f64 / self.rows() as f64).sqrt();
                self.entries.scale(1.0 / scale)
            }
        }
    }
}

impl AsRef<Tensor> for ProjectionMatrix {
    fn as_ref(&self) -> &Tensor {
        &self.entries
    }
}

fn check_dims(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::invalid(format!("projection dimensions must be positive, got {n}x{d}")));
    }
    Ok(())
}

/// `n × d` matrix with i.i.d. `N(0, 1/n)` entries.
pub fn gaussian_matrix(n: usize, d: usize, seed: u64) -> Result<ProjectionMatrix> {
    check_dims(n, d)?;
    let mut rng = SeededRng::new(seed);
    let sd = 1.0 / (n as f64).sqrt();
    let entries = Tensor::from_fn(&[n, d], |_| sd * rng.normal());
    Ok(ProjectionMatrix { kind: ProjectionKind::Gaussian, seed, entries })
}

/// Random `n × d` matrix with orthonormal rows, scaled by `sqrt(d/n)`.
///
/// Rows of a Gaussian sample are orthonormalized by modified Gram–Schmidt
/// with one re-orthogonalization pass. A numerically rank-deficient sample is
/// redrawn from the next derived sub-seed.
pub fn random_orthoprojector(n: usize, d: usize, seed: u64) -> Result<ProjectionMatrix> {
    check_dims(n, d)?;
    if n > d {
        return Err(Error::invalid(format!("orthoprojector needs n <= d, got {n} > {d}")));
    }
    let scale = (d as f64 / n as f64).sqrt();
    for attempt in 0..MAX_ORTHO_ATTEMPTS {
        let sub = if attempt == 0 { seed } else { derive_seed(seed, attempt as u64) };
        let mut rng = SeededRng::new(sub);
        let mut rows: Vec<f64> = (0..n * d).map(|_| rng.normal()).collect();
        if orthonormalize_rows(&mut rows, n, d) {
            for v in rows.iter_mut() {
                *v *= scale;
            }
            let entries = Tensor::new(vec![n, d], rows)?;
            return Ok(ProjectionMatrix { kind: ProjectionKind::Orthoprojector, seed, entries });
        }
    }
    Err(Error::RankDeficient { attempts: MAX_ORTHO_ATTEMPTS })
}

/// Orthonormalizes the rows of a row-major `[n, d]` buffer in place.
/// Returns false if some row collapses relative to its original norm.
pub(crate) fn orthonormalize_rows(rows: &mut [f64], n: usize, d: usize) -> bool {
    for i in 0..n {
        let (done, rest) = rows.split_at_mut(i * d);
        let row = &mut rest[..d];
        let original = dot(row, row).sqrt();
        if original == 0.0 {
            return false;
        }
        for _pass in 0..2 {
            for j in 0..i {
                let q = &done[j * d..(j + 1) * d];
                let c = dot(row, q);
                for (r, &qv) in row.iter_mut().zip(q) {
                    *r -= c * qv;
                }
            }
        }
        let len = dot(row, row).sqrt();
        if len <= RANK_TOL * original {
            return false;
        }
        for r in row.iter_mut() {
            *r /= len;
        }
    }
    true
}
