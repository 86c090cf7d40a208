//! Uniform without-replacement mini-batches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problems::QuadraticProblem;
use crate::vecops;

/// Draws `b` distinct indices out of `n` by a partial Fisher–Yates shuffle.
///
/// The generator is ChaCha8 seeded from a `u64`, so a sampler is fully
/// determined by `(n, b, seed)`. When `b == n` the batch is the index set in
/// natural order and the generator is never touched.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    n: usize,
    b: usize,
    perm: Vec<usize>,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(n: usize, b: usize, seed: u64) -> Result<Self> {
        if b == 0 || b > n {
            return Err(Error::InvalidBatch(format!(
                "batch size {b} outside [1, {n}]"
            )));
        }
        Ok(Self {
            n,
            b,
            perm: (0..n).collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn batch_size(&self) -> usize {
        self.b
    }

    pub fn is_full(&self) -> bool {
        self.b == self.n
    }

    /// Next batch. The slice is valid until the following call.
    pub fn draw(&mut self) -> &[usize] {
        if self.is_full() {
            return &self.perm;
        }
        for i in 0..self.b {
            let j = self.rng.random_range(i..self.n);
            self.perm.swap(i, j);
        }
        &self.perm[..self.b]
    }
}

fn check_factor_args(n: usize, b: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("batch factor needs n >= 2, got {n}")));
    }
    if b == 0 || b > n {
        return Err(Error::InvalidBatch(format!("batch size {b} outside [1, {n}]")));
    }
    Ok(())
}

/// `(n − b) / ((n − 1) b)`, the without-replacement variance multiplier.
pub fn batch_variance_factor(n: usize, b: usize) -> Result<f64> {
    check_factor_args(n, b)?;
    Ok((n - b) as f64 / ((n - 1) as f64 * b as f64))
}

/// `sqrt((n − b) / ((n − 1) b))`; zero for a full batch.
pub fn zeta(n: usize, b: usize) -> Result<f64> {
    batch_variance_factor(n, b).map(f64::sqrt)
}

/// The factor used by the constant-parameter accelerated analysis,
/// `sqrt(3 (n − b) / ((n − 1) b))`.
pub fn zeta_accel(n: usize, b: usize) -> Result<f64> {
    Ok(3f64.sqrt() * zeta(n, b)?)
}

/// `mean_i ‖∇f_i(w) − ∇f(w)‖²`, by direct summation.
pub fn per_sample_variance(p: &QuadraticProblem, w: &[f64]) -> Result<f64> {
    let full = p.full_gradient(w)?;
    let mut g = vec![0.0; p.d()];
    let total: f64 = (0..p.n())
        .map(|i| {
            p.sample_gradient_into(i, w, &mut g);
            vecops::dist(&g, &full).powi(2)
        })
        .sum();
    Ok(total / p.n() as f64)
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

/// Monte-Carlo estimate of `E‖∇f_B(w) − ∇f(w)‖²` over `trials` batches.
pub fn empirical_batch_variance(
    p: &QuadraticProblem,
    w: &[f64],
    b: usize,
    trials: usize,
    seed: u64,
) -> Result<VarianceEstimate> {
    if trials == 0 {
        return Err(Error::invalid("trials must be positive"));
    }
    let full = p.full_gradient(w)?;
    let mut sampler = BatchSampler::new(p.n(), b, seed)?;
    let mut g = vec![0.0; p.d()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        let batch = sampler.draw();
        p.batch_gradient_into(batch, w, &mut g);
        let e = vecops::dist(&g, &full).powi(2);
        sum += e;
        sum_sq += e * e;
    }
    let t = trials as f64;
    let mean = sum / t;
    let var = if trials > 1 {
        ((sum_sq - t * mean * mean) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(VarianceEstimate {
        mean,
        std_err: (var / t).sqrt(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::generate_regression;

    #[test]
    fn full_batch_is_identity_order() {
        let mut s = BatchSampler::new(7, 7, 3).unwrap();
        for _ in 0..3 {
            assert_eq!(s.draw(), &[0, 1, 2, 3, 4, 5, 6]);
        }
    }

    #[test]
    fn draws_are_distinct_and_reproducible() {
        let mut a = BatchSampler::new(5, 1, 42).unwrap();
        let mut b = BatchSampler::new(5, 1, 42).unwrap();
        let sa: Vec<usize> = (0..50).map(|_| a.draw()[0]).collect();
        let sb: Vec<usize> = (0..50).map(|_| b.draw()[0]).collect();
        assert_eq!(sa, sb);

        let mut s = BatchSampler::new(30, 12, 1).unwrap();
        for _ in 0..100 {
            let mut batch = s.draw().to_vec();
            batch.sort_unstable();
            batch.dedup();
            assert_eq!(batch.len(), 12);
            assert!(batch.iter().all(|&i| i < 30));
        }
    }

    #[test]
    fn inclusion_frequency() {
        // each index appears with probability b/n = 0.3
        let mut s = BatchSampler::new(10, 3, 11).unwrap();
        let draws = 1_000_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            for &i in s.draw() {
                counts[i] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 0.3).abs() < 0.002, "frequency {f}");
        }
    }

    #[test]
    fn bad_batch_sizes() {
        assert!(BatchSampler::new(5, 0, 0).is_err());
        assert!(BatchSampler::new(5, 6, 0).is_err());
        assert!(zeta(1, 1).is_err());
        assert!(zeta(4, 0).is_err());
    }

    #[test]
    fn zeta_values() {
        assert_eq!(zeta(40, 40).unwrap(), 0.0);
        for n in [2, 3, 17, 1000] {
            assert!((zeta(n, 1).unwrap() - 1.0).abs() < 1e-15);
            assert!((zeta_accel(n, 1).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        }
        assert!((zeta(100, 25).unwrap() - (75.0f64 / 2475.0).sqrt()).abs() < 1e-15);
        assert!((zeta(100, 25).unwrap() - 0.174_077_655_955_698).abs() < 1e-12);
        assert!((zeta_accel(100, 25).unwrap() - (225.0f64 / 2475.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empirical_variance_edge_cases() {
        let p = generate_regression(50, 4, 5.0, 0.1, 2).unwrap();
        let w = vec![0.5; 4];
        assert!(empirical_batch_variance(&p, &w, 5, 0, 0).is_err());
        let full = empirical_batch_variance(&p, &w, 50, 10, 0).unwrap();
        assert_eq!(full.mean, 0.0);
    }
}
