//! First-order sparse recovery: ISTA for the Lagrangian ℓ1 problem and
//! iterative hard thresholding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{derive_seed, gaussian_matrix, norm, SeededRng, Tensor};
use crate::{Error, Result};

const POWER_STEPS: usize = 32;
const LIPSCHITZ_SAFETY: f64 = 1.05;
pub const SUCCESS_TOL: f64 = 1e-2;

/// Measurements `b = A x + e` with `‖e‖₂ ≤ sigma`.
#[derive(Clone, Debug)]
pub struct RecoveryProblem {
    a: Tensor,
    b: Vec<f64>,
    sigma: f64,
    k: Option<usize>,
}

impl RecoveryProblem {
    pub fn new(a: Tensor, b: Vec<f64>, sigma: f64) -> Result<Self> {
        if a.rank() != 2 || a.rows() != b.len() {
            return Err(Error::shape(format!(
                "measurement matrix {:?} and {} measurements",
                a.shape(),
                b.len()
            )));
        }
        if sigma.is_nan() || sigma < 0.0 {
            return Err(Error::invalid(format!("noise bound must be nonnegative, got {sigma}")));
        }
        Ok(RecoveryProblem { a, b, sigma, k: None })
    }

    pub fn with_sparsity_hint(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn matrix(&self) -> &Tensor {
        &self.a
    }

    pub fn measurements(&self) -> &[f64] {
        &self.b
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sparsity_hint(&self) -> Option<usize> {
        self.k
    }

    fn check_finite(&self) -> Result<()> {
        if !self.a.is_finite() {
            return Err(Error::NonFinite("measurement matrix"));
        }
        if !self.b.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("measurements"));
        }
        Ok(())
    }

    fn residual(&self, y: &[f64]) -> Vec<f64> {
        let mut r = self.a.matvec(y).expect("dimensions checked at construction");
        for (ri, bi) in r.iter_mut().zip(&self.b) {
            *ri -= bi;
        }
        r
    }

    /// `y - t Aᵀ(Ay - b)`.
    fn gradient_step(&self, y: &[f64], t: f64) -> Vec<f64> {
        let g = self.a.t_matvec(&self.residual(y)).expect("dimensions checked at construction");
        y.iter().zip(&g).map(|(yi, gi)| yi - t * gi).collect()
    }

    /// `½‖Ay - b‖₂² + λ‖y‖₁`.
    pub fn lasso_objective(&self, y: &[f64], lambda: f64) -> f64 {
        let r = self.residual(y);
        0.5 * r.iter().map(|v| v * v).sum::<f64>() + lambda * y.iter().map(|v| v.abs()).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryResult {
    pub x_hat: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Power-iteration estimate of `σ_max(A)²`, from a fixed seeded start.
pub fn lipschitz_estimate(a: &Tensor) -> f64 {
    let d = a.cols();
    let mut rng = SeededRng::new(0x5eed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let mut est = 0.0;
    for _ in 0..POWER_STEPS {
        let len = norm(&v);
        if len == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= len);
        let av = a.matvec(&v).expect("matrix");
        let w = a.t_matvec(&av).expect("matrix");
        est = norm(&av).powi(2);
        v = w;
    }
    est
}

/// `sign(v) max(|v| - tau, 0)` elementwise.
pub fn soft_threshold(v: &[f64], tau: f64) -> Vec<f64> {
    v.iter().map(|&x| x.signum() * (x.abs() - tau).max(0.0)).collect()
}

/// Keeps the `k` largest-magnitude entries; equal magnitudes at the cut keep
/// the lower index.
pub fn hard_threshold(v: &[f64], k: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    let mut out = vec![0.0; v.len()];
    for &i in order.iter().take(k) {
        out[i] = v[i];
    }
    out
}

fn finish(problem: &RecoveryProblem, x_hat: Vec<f64>, iterations: usize, converged: bool) -> RecoveryResult {
    let residual_norm = norm(&problem.residual(&x_hat));
    RecoveryResult { x_hat, iterations, residual_norm, converged }
}

fn l2_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// ISTA on `min ½‖Ay - b‖₂² + λ‖y‖₁` with step `1 / (1.05 L̂)`, starting from
/// zero. Stops when an update moves the iterate by less than `tol` (2-norm).
pub fn ista_l1(problem: &RecoveryProblem, lambda: f64, max_iters: usize, tol: f64) -> Result<RecoveryResult> {
    problem.check_finite()?;
    if !(lambda > 0.0 && tol > 0.0) {
        return Err(Error::invalid(format!("lambda and tol must be positive (got {lambda}, {tol})")));
    }
    let lip = LIPSCHITZ_SAFETY * lipschitz_estimate(&problem.a);
    let d = problem.a.cols();
    let mut y = vec![0.0; d];
    if lip == 0.0 {
        return Ok(finish(problem, y, 0, true));
    }
    let t = 1.0 / lip;
    for it in 1..=max_iters {
        let next = soft_threshold(&problem.gradient_step(&y, t), t * lambda);
        let change = l2_change(&next, &y);
        y = next;
        if change < tol {
            return Ok(finish(problem, y, it, true));
        }
    }
    Ok(finish(problem, y, max_iters, false))
}

/// Step-size rule for [`iht_with_step`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IhtStep {
    /// Constant `t = 1 / L̂` from power iteration.
    Fixed,
    /// Per-iteration step `‖g_Γ‖² / ‖A g_Γ‖²` on the current support `Γ`,
    /// halved (over 0.99) until it passes the support-change safeguard.
    Normalized,
}

/// Iterative hard thresholding with the normalized step.
pub fn iht(problem: &RecoveryProblem, k: usize, max_iters: usize, tol: f64) -> Result<RecoveryResult> {
    iht_with_step(problem, k, max_iters, tol, IhtStep::Normalized)
}

/// Iterative hard thresholding `y ← H_k(y + t Aᵀ(b - Ay))` from zero.
/// Stops when an update moves the iterate by less than `tol` (2-norm).
pub fn iht_with_step(
    problem: &RecoveryProblem,
    k: usize,
    max_iters: usize,
    tol: f64,
    step: IhtStep,
) -> Result<RecoveryResult> {
    problem.check_finite()?;
    let a = &problem.a;
    let d = a.cols();
    if k > d {
        return Err(Error::invalid(format!("sparsity {k} exceeds dimension {d}")));
    }
    let mut y = vec![0.0; d];
    let fixed = match step {
        IhtStep::Fixed => {
            let lip = lipschitz_estimate(a);
            if lip == 0.0 {
                return Ok(finish(problem, y, 0, true));
            }
            Some(1.0 / lip)
        }
        IhtStep::Normalized => None,
    };
    let mut support = support_of(&hard_threshold(&a.t_matvec(&problem.b)?, k));
    for it in 1..=max_iters {
        // descent direction g = Aᵀ(b - Ay)
        let mut g = a.t_matvec(&problem.residual(&y))?;
        g.iter_mut().for_each(|v| *v = -*v);
        let next = match fixed {
            Some(t) => hard_threshold(&axpy(&y, t, &g), k),
            None => match normalized_update(a, &y, &g, &support, k)? {
                Some(next) => next,
                None => return Ok(finish(problem, y, it, true)),
            },
        };
        let change = l2_change(&next, &y);
        support = support_of(&next);
        y = next;
        if change < tol {
            return Ok(finish(problem, y, it, true));
        }
    }
    Ok(finish(problem, y, max_iters, false))
}

const NIHT_C: f64 = 0.01;
const NIHT_KAPPA: f64 = 2.0;

/// One normalized-IHT update; `None` when the gradient vanishes on the support.
fn normalized_update(a: &Tensor, y: &[f64], g: &[f64], support: &[usize], k: usize) -> Result<Option<Vec<f64>>> {
    let mut g_s = vec![0.0; g.len()];
    for &i in support {
        g_s[i] = g[i];
    }
    let num = sum_sq(&g_s);
    let den = sum_sq(&a.matvec(&g_s)?);
    if num == 0.0 || den == 0.0 {
        return Ok(None);
    }
    let mut mu = num / den;
    loop {
        let next = hard_threshold(&axpy(y, mu, g), k);
        if support_of(&next) == support {
            return Ok(Some(next));
        }
        let delta: Vec<f64> = next.iter().zip(y).map(|(p, q)| p - q).collect();
        let ad = sum_sq(&a.matvec(&delta)?);
        let omega = (1.0 - NIHT_C) * sum_sq(&delta) / ad;
        if ad == 0.0 || mu <= omega {
            return Ok(Some(next));
        }
        mu /= NIHT_KAPPA * (1.0 - NIHT_C);
    }
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn axpy(y: &[f64], t: f64, g: &[f64]) -> Vec<f64> {
    y.iter().zip(g).map(|(yi, gi)| yi + t * gi).collect()
}

fn support_of(v: &[f64]) -> Vec<usize> {
    (0..v.len()).filter(|&i| v[i] != 0.0).collect()
}

/// A `k`-sparse vector with uniform support and random ±1 values.
pub fn random_sign_sparse(d: usize, k: usize, rng: &mut SeededRng) -> Vec<f64> {
    let mut x = vec![0.0; d];
    for i in rng.subset(d, k) {
        x[i] = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
    }
    x
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub n: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTable {
    pub d: usize,
    pub k: usize,
    pub rows: Vec<PhaseRow>,
}

impl PhaseTable {
    /// Success rate at the largest `n` is at least the rate at the smallest.
    pub fn trend_holds(&self) -> bool {
        let lo = self.rows.iter().min_by_key(|r| r.n);
        let hi = self.rows.iter().max_by_key(|r| r.n);
        match (lo, hi) {
            (Some(lo), Some(hi)) => hi.success_rate >= lo.success_rate,
            _ => false,
        }
    }
}

pub const PHASE_MAX_ITERS: usize = 3000;
pub const PHASE_TOL: f64 = 1e-10;

/// Success rate of IHT over `trials` noiseless instances for each `n` in
/// the grid. Trial `i` draws its matrix and signal from seed `seed + i`, so
/// rows for different `n` share signals.
pub fn recovery_phase_experiment(
    d: usize,
    k: usize,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<PhaseTable> {
    if n_grid.is_empty() {
        return Err(Error::invalid("empty measurement grid"));
    }
    if let Some(&n) = n_grid.iter().find(|&&n| n == 0 || n > d) {
        return Err(Error::invalid(format!("measurement count {n} outside 1..={d}")));
    }
    if k == 0 || k > d {
        return Err(Error::invalid(format!("sparsity {k} outside 1..={d}")));
    }
    let rows = n_grid
        .iter()
        .map(|&n| {
            let outcomes: Vec<bool> = (0..trials)
                .into_par_iter()
                .map(|trial| phase_trial(d, k, n, seed.wrapping_add(trial as u64)))
                .collect::<Result<_>>()?;
            let successes = outcomes.iter().filter(|&&ok| ok).count();
            let success_rate = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
            Ok(PhaseRow { n, trials, successes, success_rate })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseTable { d, k, rows })
}

fn phase_trial(d: usize, k: usize, n: usize, trial_seed: u64) -> Result<bool> {
    let mut rng = SeededRng::new(derive_seed(trial_seed, 1));
    let x = random_sign_sparse(d, k, &mut rng);
    let a = gaussian_matrix(n, d, derive_seed(trial_seed, 2))?.into_entries();
    let b = a.matvec(&x)?;
    let problem = RecoveryProblem::new(a, b, 0.0)?.with_sparsity_hint(k);
    let res = iht(&problem, k, PHASE_MAX_ITERS, PHASE_TOL)?;
    Ok(relative_error(&res.x_hat, &x) < SUCCESS_TOL)
}

pub fn relative_error(x_hat: &[f64], x: &[f64]) -> f64 {
    l2_change(x_hat, x) / norm(x).max(f64::MIN_POSITIVE)
}
