//! Divergence analysis for constant-parameter SHB with small batches.
//!
//! On the diagonal construction the coordinate with the largest curvature
//! evolves as `u_(k+1) = H u_k` for a random 2x2 matrix `H` that is `H1`
//! when that coordinate is outside the batch and `H2` when it is inside.
//! `Ψ(θ)` is the expected squared norm after a fixed number of steps,
//! starting from the unit vector `(sin θ, cos θ)`. If `min_θ Ψ > 1` the
//! iterates grow geometrically in expectation.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::schedules::constant_params;

type Mat2 = [[f64; 2]; 2];

fn mat_vec(h: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [h[0][0] * v[0] + h[0][1] * v[1], h[1][0] * v[0] + h[1][1] * v[1]]
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiModel {
    pub beta: f64,
    /// `n/b`, the gradient amplification when the coordinate is sampled.
    pub scale: f64,
    /// Probability of `H1` (coordinate not sampled).
    pub rho1: f64,
    pub horizon: u32,
}

impl PsiModel {
    /// `n = 2`, `b = 1`, three steps.
    pub fn two_sample(beta: f64) -> Self {
        Self { beta, scale: 2.0, rho1: 0.5, horizon: 3 }
    }

    /// General `(n, b)`, six steps.
    pub fn n_sample(n: usize, b: usize, beta: f64) -> Result<Self> {
        if b == 0 || b >= n {
            return Err(Error::InvalidBatch(format!("need 1 <= b < n, got b = {b}, n = {n}")));
        }
        Ok(Self {
            beta,
            scale: n as f64 / b as f64,
            rho1: (n - b) as f64 / n as f64,
            horizon: 6,
        })
    }

    pub fn with_horizon(mut self, horizon: u32) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn h1(&self) -> Mat2 {
        [[1.0 + self.beta, -self.beta], [1.0, 0.0]]
    }

    pub fn h2(&self) -> Mat2 {
        [[1.0 - self.scale + self.beta, -self.beta], [1.0, 0.0]]
    }

    fn choices(&self) -> [(f64, Mat2); 2] {
        [(self.rho1, self.h1()), (1.0 - self.rho1, self.h2())]
    }
}

fn unit(theta: f64) -> [f64; 2] {
    [theta.sin(), theta.cos()]
}

/// Expected squared norm by enumerating every matrix sequence.
pub fn psi(model: &PsiModel, theta: f64) -> f64 {
    let choices = model.choices();
    let phi = unit(theta);
    let mut total = 0.0;
    for mask in 0u64..(1u64 << model.horizon) {
        let mut v = phi;
        let mut weight = 1.0;
        for step in 0..model.horizon {
            let (rho, h) = &choices[((mask >> step) & 1) as usize];
            weight *= rho;
            v = mat_vec(h, v);
        }
        total += weight * (v[0] * v[0] + v[1] * v[1]);
    }
    total
}

/// The same quantity through the second-moment recursion
/// `S ← Σ rho_i H_i S H_iᵀ` started at `φφᵀ`, read off as `trace S`.
pub fn psi_second_moment(model: &PsiModel, theta: f64) -> f64 {
    let phi = unit(theta);
    let mut s = [[phi[0] * phi[0], phi[0] * phi[1]], [phi[1] * phi[0], phi[1] * phi[1]]];
    for _ in 0..model.horizon {
        let mut next = [[0.0; 2]; 2];
        for (rho, h) in model.choices() {
            let t = mat_mul(&mat_mul(&h, &s), &transpose(&h));
            for i in 0..2 {
                for j in 0..2 {
                    next[i][j] += rho * t[i][j];
                }
            }
        }
        s = next;
    }
    s[0][0] + s[1][1]
}

/// Grid minimum of `Ψ` over `grid_size` uniform points of `[0, π)`.
pub fn min_psi(model: &PsiModel, grid_size: usize) -> (f64, f64) {
    let grid_size = grid_size.max(1);
    (0..grid_size)
        .map(|j| {
            let theta = std::f64::consts::PI * j as f64 / grid_size as f64;
            (theta, psi(model, theta))
        })
        .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

pub const BETA_SEARCH_LO: f64 = 0.25;

/// Smallest `beta` in `[0.25, 1)` with `min Ψ > 1`, to within `tol`.
///
/// Returns the lower end itself when the predicate already holds there and
/// `None` when it never holds below one.
pub fn beta_star(n: usize, b: usize, grid_size: usize, tol: f64) -> Result<Option<f64>> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let fires = |beta: f64| -> Result<bool> {
        Ok(min_psi(&PsiModel::n_sample(n, b, beta)?, grid_size).1 > 1.0)
    };
    let (mut lo, mut hi) = (BETA_SEARCH_LO, 1.0 - 1e-9);
    if fires(lo)? {
        return Ok(Some(lo));
    }
    if !fires(hi)? {
        return Ok(None);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if fires(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// `(1/(2(1 − √β)))²`, the condition number whose accelerated momentum is `beta`.
pub fn kappa_star(beta: f64) -> f64 {
    (1.0 / (2.0 * (1.0 - beta.sqrt()))).powi(2)
}

/// `n/(1 + (n−1)/(e^3.3 κ^0.6))`: batch sizes below this make constant SHB
/// diverge on the diagonal construction.
pub fn divergence_threshold(n: usize, kappa: f64) -> f64 {
    n as f64 / (1.0 + (n - 1) as f64 / (3.3f64.exp() * kappa.powf(0.6)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPoint {
    pub b: usize,
    pub beta_star: Option<f64>,
    pub kappa_star: Option<f64>,
    /// `ln((n − b)/((n − 1) b))`
    pub log_batch_factor: f64,
}

impl ThresholdPoint {
    pub fn log_kappa_star(&self) -> Option<f64> {
        self.kappa_star.map(f64::ln)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: Vec<ThresholdPoint>,
}

impl ThresholdFit {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("b,beta_star,kappa_star,log_batch_factor,log_kappa_star\n");
        let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v:.10}"));
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{:.10},{}",
                p.b,
                opt(p.beta_star),
                opt(p.kappa_star),
                p.log_batch_factor,
                opt(p.log_kappa_star())
            );
        }
        s
    }
}

/// Ordinary least squares `y ≈ slope x + intercept`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 points to fit a line, got {}", xs.len())));
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Numerical("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Regresses the log batch factor on `ln κ*(b)` over the given batch sizes.
/// Batch sizes with no `beta*` are kept in `points` but left out of the fit.
pub fn fit_threshold(n: usize, b_values: &[usize], grid_size: usize, tol: f64) -> Result<ThresholdFit> {
    let points = b_values
        .par_iter()
        .map(|&b| {
            let beta = beta_star(n, b, grid_size, tol)?;
            Ok(ThresholdPoint {
                b,
                beta_star: beta,
                kappa_star: beta.map(kappa_star),
                log_batch_factor: ((n - b) as f64 / ((n - 1) as f64 * b as f64)).ln(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter_map(|p| p.log_kappa_star().map(|x| (x, p.log_batch_factor)))
        .unzip();
    let (slope, intercept) = ols(&xs, &ys)?;
    Ok(ThresholdFit { slope, intercept, points })
}

/// Simulates the largest-curvature coordinate of constant SHB (`a = 1`) on
/// the diagonal construction: `x ← (1 + β − s n/b) x − β x_prev` with
/// `s ~ Bernoulli(b/n)`. Returns `|x_T| / |x_0|` starting from rest.
pub fn simulate_max_coordinate(n: usize, b: usize, kappa: f64, steps: usize, seed: u64) -> Result<f64> {
    if b == 0 || b > n {
        return Err(Error::InvalidBatch(format!("batch size {b} outside [1, {n}]")));
    }
    let beta = constant_params(kappa, 1.0, 1.0)?.beta;
    let p = b as f64 / n as f64;
    let scale = n as f64 / b as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut x_prev) = (1.0f64, 1.0f64);
    for _ in 0..steps {
        let hit = if rng.random_bool(p) { scale } else { 0.0 };
        let next = (1.0 + beta - hit) * x - beta * x_prev;
        x_prev = x;
        x = next;
        if !x.is_finite() {
            return Ok(f64::INFINITY);
        }
    }
    Ok(x.abs())
}
