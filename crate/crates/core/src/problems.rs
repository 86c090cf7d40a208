//! Synthetic strongly-convex finite-sum quadratics.
//!
//! Two kinds of problem are supported:
//!
//! * **Regression**: `f(w) = ½‖Xw − y‖²` written as the mean of per-sample
//!   terms `f_i(w) = (n/2)(⟨x_i, w⟩ − y_i)²`. The generator places the
//!   spectrum of `XᵀX` exactly on `[1, kappa]`.
//! * **Diagonal**: `f(w) = (1/n) Σ ½ wᵀA_i w` where `A_i` is zero except for
//!   entry `(i, i)`. This is an interpolation problem with `w* = 0` on which
//!   small-batch accelerated SHB diverges.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::vecops;

const HEADER_TAG: &str = "SHBLAB-PROBLEM";
const FORMAT_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Regression,
    Diagonal,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Regression => "regression",
            ProblemKind::Diagonal => "diagonal",
        }
    }
}

/// Stochasticity measures at the minimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProfile {
    /// `E_i[f* − f_i*]`
    pub sigma2: f64,
    /// `E_i ‖∇f_i(w*)‖²`
    pub chi2: f64,
}

/// An immutable finite-sum quadratic with cached curvature and minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    kind: ProblemKind,
    n: usize,
    d: usize,
    /// Row-major `n × d` (regression only).
    features: Vec<f64>,
    targets: Vec<f64>,
    diag_entries: Vec<f64>,
    l: f64,
    mu: f64,
    w_star: Vec<f64>,
    /// Row-major `XᵀX` (regression only).
    hessian: Vec<f64>,
    /// `Xᵀy` (regression only).
    linear: Vec<f64>,
}

impl QuadraticProblem {
    /// Builds a regression problem from a row-major feature matrix and targets.
    ///
    /// The curvature constants are read off the eigenvalues of `XᵀX` and the
    /// minimizer is obtained from the normal equations.
    pub fn regression(features: Vec<f64>, n: usize, d: usize, targets: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid("n and d must be positive"));
        }
        if features.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: features.len(),
            });
        }
        if targets.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: targets.len(),
            });
        }
        let x = DMatrix::from_row_slice(n, d, &features);
        let y = DVector::from_column_slice(&targets);
        let mut h = x.tr_mul(&x);
        // enforce exact symmetry before the eigen/cholesky calls
        for i in 0..d {
            for j in 0..i {
                let s = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = s;
                h[(j, i)] = s;
            }
        }
        let c = x.tr_mul(&y);

        let eig = SymmetricEigen::new(h.clone());
        let mu = eig.eigenvalues.min();
        let l = eig.eigenvalues.max();
        if !(mu > 0.0) {
            return Err(Error::invalid(format!(
                "mean Hessian is not positive definite (lambda_min = {mu:e})"
            )));
        }
        let chol = h
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("Cholesky factorization of XᵀX failed".into()))?;
        let w_star = chol.solve(&c);

        let mut hessian = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                hessian.push(h[(i, j)]);
            }
        }
        Ok(Self {
            kind: ProblemKind::Regression,
            n,
            d,
            features,
            targets,
            diag_entries: Vec::new(),
            l,
            mu,
            w_star: w_star.iter().copied().collect(),
            hessian,
            linear: c.iter().copied().collect(),
        })
    }

    /// Builds a diagonal problem from the per-sample diagonal entries.
    pub fn diagonal(diag_entries: Vec<f64>) -> Result<Self> {
        let n = diag_entries.len();
        if n < 2 {
            return Err(Error::invalid("diagonal problem needs n >= 2"));
        }
        if diag_entries.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::invalid("diagonal entries must be positive and finite"));
        }
        let nf = n as f64;
        let max = diag_entries.iter().copied().fold(f64::MIN, f64::max);
        let min = diag_entries.iter().copied().fold(f64::MAX, f64::min);
        Ok(Self {
            kind: ProblemKind::Diagonal,
            n,
            d: n,
            features: Vec::new(),
            targets: Vec::new(),
            diag_entries,
            l: max / nf,
            mu: min / nf,
            w_star: vec![0.0; n],
            hessian: Vec::new(),
            linear: Vec::new(),
        })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Row-major feature matrix (empty for the diagonal kind).
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn diag_entries(&self) -> &[f64] {
        &self.diag_entries
    }

    /// Largest eigenvalue of the mean Hessian.
    pub fn smoothness(&self) -> f64 {
        self.l
    }

    /// Smallest eigenvalue of the mean Hessian.
    pub fn strong_convexity(&self) -> f64 {
        self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.l / self.mu
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    /// Largest per-sample smoothness constant `max_i L_i`.
    pub fn max_sample_smoothness(&self) -> f64 {
        match self.kind {
            ProblemKind::Regression => {
                let nf = self.n as f64;
                (0..self.n)
                    .map(|i| nf * vecops::dot(self.row(i), self.row(i)))
                    .fold(0.0, f64::max)
            }
            ProblemKind::Diagonal => self.diag_entries.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Extreme eigenvalues `(lambda_min, lambda_max)` recomputed from the data.
    pub fn spectrum(&self) -> (f64, f64) {
        match self.kind {
            ProblemKind::Regression => {
                let x = DMatrix::from_row_slice(self.n, self.d, &self.features);
                let eig = SymmetricEigen::new(x.tr_mul(&x));
                (eig.eigenvalues.min(), eig.eigenvalues.max())
            }
            ProblemKind::Diagonal => {
                let nf = self.n as f64;
                let max = self.diag_entries.iter().copied().fold(f64::MIN, f64::max);
                let min = self.diag_entries.iter().copied().fold(f64::MAX, f64::min);
                (min / nf, max / nf)
            }
        }
    }

    fn check_dim(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: w.len(),
            });
        }
        Ok(())
    }

    pub fn objective(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        Ok(match self.kind {
            ProblemKind::Regression => {
                0.5 * (0..self.n)
                    .map(|i| {
                        let r = vecops::dot(self.row(i), w) - self.targets[i];
                        r * r
                    })
                    .sum::<f64>()
            }
            ProblemKind::Diagonal => {
                let s: f64 = self
                    .diag_entries
                    .iter()
                    .zip(w)
                    .map(|(e, wi)| e * wi * wi)
                    .sum();
                0.5 * s / self.n as f64
            }
        })
    }

    /// Mean gradient `∇f(w)`.
    pub fn full_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        let mut out = vec![0.0; self.d];
        self.full_gradient_into(w, &mut out);
        Ok(out)
    }

    pub(crate) fn full_gradient_into(&self, w: &[f64], out: &mut [f64]) {
        match self.kind {
            ProblemKind::Regression => {
                let d = self.d;
                for (i, o) in out.iter_mut().enumerate() {
                    *o = vecops::dot(&self.hessian[i * d..(i + 1) * d], w) - self.linear[i];
                }
            }
            ProblemKind::Diagonal => {
                let nf = self.n as f64;
                for ((o, e), wi) in out.iter_mut().zip(&self.diag_entries).zip(w) {
                    *o = e * wi / nf;
                }
            }
        }
    }

    /// Mini-batch gradient `(1/b) Σ_{i∈B} ∇f_i(w)`.
    pub fn batch_gradient(&self, batch: &[usize], w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        if batch.is_empty() {
            return Err(Error::InvalidBatch("empty batch".into()));
        }
        let mut seen = vec![false; self.n];
        for &i in batch {
            if i >= self.n {
                return Err(Error::InvalidBatch(format!("index {i} out of range [0, {})", self.n)));
            }
            if seen[i] {
                return Err(Error::InvalidBatch(format!("duplicate index {i}")));
            }
            seen[i] = true;
        }
        let mut out = vec![0.0; self.d];
        self.batch_gradient_into(batch, w, &mut out);
        Ok(out)
    }

    /// Unchecked batch gradient; `batch` must hold distinct in-range indices.
    /// A batch covering every sample is evaluated as the full gradient.
    pub(crate) fn batch_gradient_into(&self, batch: &[usize], w: &[f64], out: &mut [f64]) {
        if batch.len() == self.n {
            self.full_gradient_into(w, out);
            return;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        let b = batch.len() as f64;
        match self.kind {
            ProblemKind::Regression => {
                for &i in batch {
                    let row = self.row(i);
                    let r = vecops::dot(row, w) - self.targets[i];
                    vecops::axpy(r, row, out);
                }
                let scale = self.n as f64 / b;
                out.iter_mut().for_each(|o| *o *= scale);
            }
            ProblemKind::Diagonal => {
                for &i in batch {
                    out[i] = self.diag_entries[i] * w[i] / b;
                }
            }
        }
    }

    /// Gradient of the single term `f_i`.
    pub fn sample_gradient(&self, i: usize, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        if i >= self.n {
            return Err(Error::InvalidBatch(format!("index {i} out of range [0, {})", self.n)));
        }
        let mut out = vec![0.0; self.d];
        self.sample_gradient_into(i, w, &mut out);
        Ok(out)
    }

    pub(crate) fn sample_gradient_into(&self, i: usize, w: &[f64], out: &mut [f64]) {
        match self.kind {
            ProblemKind::Regression => {
                let row = self.row(i);
                let r = self.n as f64 * (vecops::dot(row, w) - self.targets[i]);
                for (o, x) in out.iter_mut().zip(row) {
                    *o = r * x;
                }
            }
            ProblemKind::Diagonal => {
                out.iter_mut().for_each(|o| *o = 0.0);
                out[i] = self.diag_entries[i] * w[i];
            }
        }
    }

    /// `sigma² = f(w*) − mean_i f_i*` and `chi² = mean_i ‖∇f_i(w*)‖²`.
    ///
    /// Every per-sample term is a nonnegative quadratic that vanishes somewhere,
    /// so each `f_i* = 0`.
    pub fn noise_profile(&self) -> NoiseProfile {
        let w = &self.w_star;
        let sigma2 = self.objective(w).expect("w_star has dimension d");
        let mut g = vec![0.0; self.d];
        let chi2 = (0..self.n)
            .map(|i| {
                self.sample_gradient_into(i, w, &mut g);
                vecops::dot(&g, &g)
            })
            .sum::<f64>()
            / self.n as f64;
        NoiseProfile { sigma2, chi2 }
    }

    /// Serializes into the line-oriented `SHBLAB-PROBLEM v1` text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{HEADER_TAG} {FORMAT_VERSION} kind={} n={} d={} L={} mu={}",
            self.kind.as_str(),
            self.n,
            self.d,
            fmt_f64(self.l),
            fmt_f64(self.mu)
        );
        let write_row = |s: &mut String, v: &[f64]| {
            let line: Vec<String> = v.iter().map(|&x| fmt_f64(x)).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        };
        match self.kind {
            ProblemKind::Regression => {
                for i in 0..self.n {
                    write_row(&mut s, self.row(i));
                }
                write_row(&mut s, &self.targets);
            }
            ProblemKind::Diagonal => write_row(&mut s, &self.diag_entries),
        }
        write_row(&mut s, &self.w_star);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty input".into(),
        })?;
        let hdr = parse_header(header)?;

        let mut next_row = |expect: usize| -> Result<Vec<f64>> {
            let (lineno, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: "unexpected end of input".into(),
            })?;
            let row = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|e| Error::Parse {
                        line: lineno + 1,
                        msg: format!("bad number `{t}`: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != expect {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected {expect} values, found {}", row.len()),
                });
            }
            Ok(row)
        };

        let mut problem = match hdr.kind {
            ProblemKind::Regression => {
                let mut features = Vec::with_capacity(hdr.n * hdr.d);
                for _ in 0..hdr.n {
                    features.extend(next_row(hdr.d)?);
                }
                let targets = next_row(hdr.n)?;
                Self::regression(features, hdr.n, hdr.d, targets)?
            }
            ProblemKind::Diagonal => {
                if hdr.n != hdr.d {
                    return Err(Error::Parse {
                        line: 1,
                        msg: "diagonal problem requires n = d".into(),
                    });
                }
                Self::diagonal(next_row(hdr.n)?)?
            }
        };
        problem.w_star = next_row(hdr.d)?;
        problem.l = hdr.l;
        problem.mu = hdr.mu;
        Ok(problem)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

struct Header {
    kind: ProblemKind,
    n: usize,
    d: usize,
    l: f64,
    mu: f64,
}

fn parse_header(line: &str) -> Result<Header> {
    let bad = |msg: String| Error::Parse { line: 1, msg };
    let mut toks = line.split_whitespace();
    if toks.next() != Some(HEADER_TAG) {
        return Err(bad(format!("missing `{HEADER_TAG}` tag")));
    }
    if toks.next() != Some(FORMAT_VERSION) {
        return Err(bad(format!("unsupported version, expected {FORMAT_VERSION}")));
    }
    let (mut kind, mut n, mut d, mut l, mut mu) = (None, None, None, None, None);
    for tok in toks {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed field `{tok}`")))?;
        let num_err = |e: String| bad(format!("field `{k}`: {e}"));
        match k {
            "kind" => {
                kind = Some(match v {
                    "regression" => ProblemKind::Regression,
                    "diagonal" => ProblemKind::Diagonal,
                    other => return Err(bad(format!("unknown kind `{other}`"))),
                })
            }
            "n" => n = Some(v.parse::<usize>().map_err(|e| num_err(e.to_string()))?),
            "d" => d = Some(v.parse::<usize>().map_err(|e| num_err(e.to_string()))?),
            "L" => l = Some(v.parse::<f64>().map_err(|e| num_err(e.to_string()))?),
            "mu" => mu = Some(v.parse::<f64>().map_err(|e| num_err(e.to_string()))?),
            other => return Err(bad(format!("unknown field `{other}`"))),
        }
    }
    match (kind, n, d, l, mu) {
        (Some(kind), Some(n), Some(d), Some(l), Some(mu)) => Ok(Header { kind, n, d, l, mu }),
        _ => Err(bad("header must define kind, n, d, L and mu".into())),
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn geometric(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let ratio = hi / lo;
    let mut v: Vec<f64> = (0..count)
        .map(|j| lo * ratio.powf(j as f64 / (count - 1) as f64))
        .collect();
    v[0] = lo;
    v[count - 1] = hi;
    v
}

/// Noisy least-squares problem `y = X w_gen + s`, `s ~ N(0, noise_r I)`.
///
/// `X = U diag(sqrt(λ)) Vᵀ` with `U`, `V` orthonormal factors of Gaussian
/// matrices and `λ` geometrically spaced on `[1, kappa]`.
pub fn generate_regression(
    n: usize,
    d: usize,
    kappa: f64,
    noise_r: f64,
    seed: u64,
) -> Result<QuadraticProblem> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("n and d must be positive"));
    }
    if d > n {
        return Err(Error::invalid(format!("d = {d} exceeds n = {n}")));
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::invalid(format!("kappa must be >= 1, got {kappa}")));
    }
    if d == 1 && kappa != 1.0 {
        return Err(Error::invalid("a one-dimensional problem has kappa = 1"));
    }
    if !(noise_r >= 0.0) || !noise_r.is_finite() {
        return Err(Error::invalid(format!("noise_r must be >= 0, got {noise_r}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };

    let g = DMatrix::from_fn(n, d, |_, _| gauss());
    let u = g.qr().q();
    let gv = DMatrix::from_fn(d, d, |_, _| gauss());
    let v = gv.qr().q();
    let lambdas = geometric(1.0, kappa, d);
    let mut us = u;
    for (j, lam) in lambdas.iter().enumerate() {
        let s = lam.sqrt();
        us.column_mut(j).iter_mut().for_each(|x| *x *= s);
    }
    let x = us * v.transpose();

    let w_gen: Vec<f64> = (0..d).map(|_| gauss()).collect();
    let sd = noise_r.sqrt();
    let noise: Vec<f64> = (0..n).map(|_| gauss() * sd).collect();

    let mut features = Vec::with_capacity(n * d);
    for i in 0..n {
        for j in 0..d {
            features.push(x[(i, j)]);
        }
    }
    let targets: Vec<f64> = (0..n)
        .map(|i| vecops::dot(&features[i * d..(i + 1) * d], &w_gen) + noise[i])
        .collect();
    QuadraticProblem::regression(features, n, d, targets)
}

/// Noiseless variant of [`generate_regression`]; satisfies interpolation.
pub fn generate_feasible_system(n: usize, d: usize, kappa: f64, seed: u64) -> Result<QuadraticProblem> {
    generate_regression(n, d, kappa, 0.0, seed)
}

/// Diagonal construction with entries geometrically spaced on `[1, kappa]`.
///
/// The mean Hessian is `diag(entries) / n`, so `L = kappa/n` and `mu = 1/n`.
pub fn generate_diagonal_lb(n: usize, kappa: f64) -> Result<QuadraticProblem> {
    if n < 2 {
        return Err(Error::invalid("diagonal problem needs n >= 2"));
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::invalid(format!("kappa must be >= 1, got {kappa}")));
    }
    QuadraticProblem::diagonal(geometric(1.0, kappa, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> QuadraticProblem {
        // 3 samples in 2 dimensions
        QuadraticProblem::regression(
            vec![1.0, 0.5, -0.3, 2.0, 0.7, 0.1],
            3,
            2,
            vec![1.0, -1.0, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn kappa_one_noiseless_recovers_generating_vector() {
        let p = generate_regression(50, 5, 1.0, 0.0, 0).unwrap();
        let (lo, hi) = p.spectrum();
        assert!((hi / lo - 1.0).abs() < 1e-12);
        assert!((p.kappa() - 1.0).abs() < 1e-12);
        // regenerate the same draws to get w_gen
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        for _ in 0..(50 * 5 + 5 * 5) {
            gauss();
        }
        let w_gen: Vec<f64> = (0..5).map(|_| gauss()).collect();
        for (a, b) in p.w_star().iter().zip(&w_gen) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(generate_regression(5, 6, 2.0, 0.0, 0).is_err());
        assert!(generate_regression(10, 3, 0.5, 0.0, 0).is_err());
        assert!(generate_regression(10, 3, 2.0, -1.0, 0).is_err());
        assert!(generate_diagonal_lb(1, 3.0).is_err());
    }

    #[test]
    fn feasible_system_has_zero_noise() {
        let p = generate_feasible_system(1000, 20, 512.0, 1).unwrap();
        let np = p.noise_profile();
        assert!(np.chi2 <= 1e-18, "chi2 = {:e}", np.chi2);
        assert!(np.sigma2 <= 1e-20);

        let p = generate_feasible_system(100, 20, 8.0, 5).unwrap();
        assert!(p.objective(p.w_star()).unwrap() <= 1e-20);

        let p = generate_feasible_system(10, 10, 1.0, 0).unwrap();
        let g = p.full_gradient(p.w_star()).unwrap();
        assert!(vecops::norm(&g) < 1e-13);
    }

    #[test]
    fn diagonal_layout() {
        let p = generate_diagonal_lb(100, 10.0).unwrap();
        assert_eq!(p.d(), 100);
        assert!((p.kappa() - 10.0).abs() < 1e-12);
        assert!(p.w_star().iter().all(|&x| x == 0.0));

        let p = generate_diagonal_lb(2, 6.0).unwrap();
        assert_eq!(p.diag_entries(), &[1.0, 6.0]);
        assert_eq!(p.full_gradient(&[1.0, 1.0]).unwrap(), vec![0.5, 3.0]);
        assert_eq!(p.batch_gradient(&[1], &[1.0, 1.0]).unwrap(), vec![0.0, 6.0]);
        assert_eq!(p.noise_profile(), NoiseProfile { sigma2: 0.0, chi2: 0.0 });
    }

    #[test]
    fn max_coordinate_update_matches_scalar_recursion() {
        // kappa = 5000, n = 100: sampling the max coordinate with b = 1 and
        // alpha = 1/L multiplies w_u by (1 - n/b) before momentum.
        let p = generate_diagonal_lb(100, 5000.0).unwrap();
        let alpha = 1.0 / p.smoothness();
        let mut w = vec![1.0; 100];
        let g = p.batch_gradient(&[99], &w).unwrap();
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= alpha * gi;
        }
        assert!((w[99] - (1.0 - 100.0)).abs() < 1e-9);
        assert_eq!(w[0], 1.0);
    }

    #[test]
    fn batch_gradient_validation() {
        let p = tiny();
        let w = [0.1, 0.2];
        assert!(matches!(p.batch_gradient(&[], &w), Err(Error::InvalidBatch(_))));
        assert!(matches!(p.batch_gradient(&[0, 0], &w), Err(Error::InvalidBatch(_))));
        assert!(matches!(p.batch_gradient(&[3], &w), Err(Error::InvalidBatch(_))));
        assert!(matches!(
            p.full_gradient(&[0.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
        let full = p.full_gradient(&w).unwrap();
        let all = p.batch_gradient(&[2, 0, 1], &w).unwrap();
        for (a, b) in full.iter().zip(&all) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        let p = tiny();
        let w = [0.3, -0.7];
        let g = p.full_gradient(&w).unwrap();
        let h = 1e-5;
        for j in 0..2 {
            let mut wp = w;
            let mut wm = w;
            wp[j] += h;
            wm[j] -= h;
            let fd = (p.objective(&wp).unwrap() - p.objective(&wm).unwrap()) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0));
        }
    }

    #[test]
    fn hand_noise_profile() {
        // X = (1;1;1), y = (0;0;3): w* = 1 and f(w*) = ½(1 + 1 + 4) = 3
        let p = QuadraticProblem::regression(vec![1.0; 3], 3, 1, vec![0.0, 0.0, 3.0]).unwrap();
        assert!((p.w_star()[0] - 1.0).abs() < 1e-14);
        let np = p.noise_profile();
        assert!((np.sigma2 - 3.0).abs() < 1e-12);
        // ∇f_i(w*) = n x_i r_i = 3 * (1, 1, -2)
        assert!((np.chi2 - 9.0 * 6.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn text_round_trip() {
        let p = generate_regression(12, 3, 7.0, 1e-2, 9).unwrap();
        let q = QuadraticProblem::from_text(&p.to_text()).unwrap();
        assert_eq!(p, q);
        let p = generate_diagonal_lb(5, 3.0).unwrap();
        let q = QuadraticProblem::from_text(&p.to_text()).unwrap();
        assert_eq!(p, q);
        assert!(p.to_text().starts_with("SHBLAB-PROBLEM v1 kind=diagonal n=5 d=5 L="));
    }

    #[test]
    fn text_parse_errors() {
        assert!(QuadraticProblem::from_text("").is_err());
        assert!(QuadraticProblem::from_text("SHBLAB-PROBLEM v2 kind=diagonal n=2 d=2 L=1 mu=1").is_err());
        let t = "SHBLAB-PROBLEM v1 kind=diagonal n=2 d=2 L=3 mu=0.5\n1 6\n0\n";
        assert!(matches!(QuadraticProblem::from_text(t), Err(Error::Parse { line: 3, .. })));
    }
}
