use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::linalg::{random_orthoprojector, SeededRng, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    /// `r (cos θ, sin θ)`.
    Circle,
    /// `r (sin t + 2 sin 2t, cos t − 2 cos 2t, −sin 3t)`.
    Trefoil,
}

/// A closed curve scaled by `radius` and placed in `R^ambient_dim` by a
/// random orthogonal map drawn from `rotation_seed`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub radius: f64,
    pub ambient_dim: usize,
    pub rotation_seed: u64,
}

impl ManifoldSpec {
    pub fn circle(radius: f64, ambient_dim: usize, rotation_seed: u64) -> Self {
        ManifoldSpec { kind: ManifoldKind::Circle, radius, ambient_dim, rotation_seed }
    }

    fn intrinsic_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle => 2,
            ManifoldKind::Trefoil => 3,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) || self.ambient_dim < self.intrinsic_dim() {
            return Err(Error::invalid(format!("invalid manifold {self:?}")));
        }
        Ok(())
    }

    /// Condition number (reach). Known in closed form only for the circle.
    pub fn condition_number(&self) -> Option<f64> {
        match self.kind {
            ManifoldKind::Circle => Some(self.radius),
            ManifoldKind::Trefoil => None,
        }
    }

    /// Euclidean diameter: `2r` for the circle, a dense-grid maximum for
    /// the trefoil.
    pub fn diameter(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle => 2.0 * self.radius,
            ManifoldKind::Trefoil => {
                let grid: Vec<[f64; 3]> = (0..2048).map(|i| trefoil(TAU * i as f64 / 2048.0)).collect();
                let mut best: f64 = 0.0;
                for (i, a) in grid.iter().enumerate() {
                    for b in &grid[i + 1..] {
                        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
                        best = best.max(d2);
                    }
                }
                self.radius * best.sqrt()
            }
        }
    }
}

fn trefoil(t: f64) -> [f64; 3] {
    [t.sin() + 2.0 * (2.0 * t).sin(), t.cos() - 2.0 * (2.0 * t).cos(), -(3.0 * t).sin()]
}

/// `count` points `[count, ambient_dim]` at parameters drawn uniformly from
/// `[0, 2π)` with `seed`.
pub fn sample_manifold(spec: &ManifoldSpec, count: usize, seed: u64) -> Result<Tensor> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::invalid("count must be positive"));
    }
    let (d, k) = (spec.ambient_dim, spec.intrinsic_dim());
    // rows of an orthogonal matrix; the first k span the embedding
    let q = random_orthoprojector(d, d, spec.rotation_seed)?.unscaled();
    let mut rng = SeededRng::new(seed);
    let mut out = Tensor::zeros(&[count, d]);
    for i in 0..count {
        let t = TAU * rng.uniform();
        let low = match spec.kind {
            ManifoldKind::Circle => vec![t.cos(), t.sin()],
            ManifoldKind::Trefoil => trefoil(t).to_vec(),
        };
        let row = out.row_mut(i);
        for (j, &c) in low.iter().enumerate().take(k) {
            let basis = q.row(j);
            for (r, b) in row.iter_mut().zip(basis) {
                *r += spec.radius * c * b;
            }
        }
    }
    Ok(out)
}
