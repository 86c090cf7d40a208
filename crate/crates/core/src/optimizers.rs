//! Iteration engines.
//!
//! Every method shares one [`Runner`] that owns the iterate pair, the
//! sampler and the recorder, so staged algorithms can switch update rules
//! mid-run while keeping a single trajectory and iteration counter.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::problems::{fmt_f64, QuadraticProblem};
use crate::sampling::BatchSampler;
use crate::schedules::{ConstantParams, ExpSchedule};
use crate::vecops;

pub const DEFAULT_DIVERGENCE_GUARD: f64 = 1e12;
pub const TRAJECTORY_CSV_HEADER: &str = "iter,grad_norm,dist_to_opt";

/// Record every iteration up to 10⁴ iterations, then thin to ~10⁴ records.
pub fn default_record_every(horizon: usize) -> usize {
    if horizon <= 10_000 {
        1
    } else {
        horizon.div_ceil(10_000)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub batch_size: usize,
    pub horizon: usize,
    pub w0: Vec<f64>,
    pub record_every: usize,
    pub divergence_guard: f64,
}

impl RunConfig {
    pub fn new(batch_size: usize, horizon: usize, w0: Vec<f64>) -> Self {
        Self {
            batch_size,
            horizon,
            w0,
            record_every: default_record_every(horizon),
            divergence_guard: DEFAULT_DIVERGENCE_GUARD,
        }
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn with_divergence_guard(mut self, guard: f64) -> Self {
        self.divergence_guard = guard;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self, p: &QuadraticProblem) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > p.n() {
            return Err(Error::InvalidBatch(format!(
                "batch size {} outside [1, {}]",
                self.batch_size,
                p.n()
            )));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.w0.len() != p.d() {
            return Err(Error::DimensionMismatch {
                expected: p.d(),
                got: self.w0.len(),
            });
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be positive"));
        }
        if !(self.divergence_guard > 0.0) {
            return Err(Error::invalid("divergence guard must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub k: usize,
    pub grad_norm: f64,
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub final_iterate: Vec<f64>,
    pub diverged: bool,
    pub seed: u64,
}

impl Trajectory {
    pub fn initial_grad_norm(&self) -> f64 {
        self.records[0].grad_norm
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.grad_norm)
    }

    pub fn max_grad_norm(&self) -> f64 {
        self.records
            .iter()
            .map(|r| if r.grad_norm.is_nan() { f64::INFINITY } else { r.grad_norm })
            .fold(0.0, f64::max)
    }

    /// First recorded iteration whose gradient norm is at most `rel` times
    /// the initial one.
    pub fn first_below(&self, rel: f64) -> Option<usize> {
        let target = rel * self.initial_grad_norm();
        self.records
            .iter()
            .find(|r| r.grad_norm <= target)
            .map(|r| r.k)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAJECTORY_CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{},{},{}", r.k, fmt_f64(r.grad_norm), fmt_f64(r.dist));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Parses the rows of a trajectory CSV.
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<Record>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRAJECTORY_CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `{TRAJECTORY_CSV_HEADER}`"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", f.len())));
        }
        out.push(Record {
            k: f[0].trim().parse().map_err(|e| bad(format!("{e}")))?,
            grad_norm: f[1].trim().parse().map_err(|e| bad(format!("{e}")))?,
            dist: f[2].trim().parse().map_err(|e| bad(format!("{e}")))?,
        });
    }
    Ok(out)
}

/// Per-iteration `(alpha_k, beta_k)` for the direct heavy-ball update.
pub trait MomentumParams {
    fn alpha_beta(&self, k: usize) -> (f64, f64);
}

impl MomentumParams for ConstantParams {
    fn alpha_beta(&self, _k: usize) -> (f64, f64) {
        (self.alpha, self.beta)
    }
}

impl MomentumParams for ExpSchedule {
    fn alpha_beta(&self, k: usize) -> (f64, f64) {
        self.shb_params(k)
    }
}

impl<F: Fn(usize) -> (f64, f64)> MomentumParams for F {
    fn alpha_beta(&self, k: usize) -> (f64, f64) {
        self(k)
    }
}

/// Shared iteration state. `k` counts completed updates.
pub(crate) struct Runner<'a> {
    p: &'a QuadraticProblem,
    sampler: BatchSampler,
    w: Vec<f64>,
    w_prev: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    g: Vec<f64>,
    k: usize,
    horizon: usize,
    record_every: usize,
    guard: f64,
    records: Vec<Record>,
    diverged: bool,
    seed: u64,
}

impl<'a> Runner<'a> {
    pub(crate) fn new(p: &'a QuadraticProblem, cfg: &RunConfig, seed: u64) -> Result<Self> {
        cfg.validate(p)?;
        let d = p.d();
        let mut r = Self {
            p,
            sampler: BatchSampler::new(p.n(), cfg.batch_size, seed)?,
            w: cfg.w0.clone(),
            w_prev: cfg.w0.clone(),
            z: cfg.w0.clone(),
            y: vec![0.0; d],
            g: vec![0.0; d],
            k: 0,
            horizon: cfg.horizon,
            record_every: cfg.record_every,
            guard: cfg.divergence_guard,
            records: Vec::new(),
            diverged: false,
            seed,
        };
        r.check_and_record(true);
        Ok(r)
    }

    pub(crate) fn k(&self) -> usize {
        self.k
    }

    pub(crate) fn done(&self) -> bool {
        self.diverged || self.k >= self.horizon
    }

    fn stochastic_gradient_at_w(&mut self) {
        let batch = self.sampler.draw();
        self.p.batch_gradient_into(batch, &self.w, &mut self.g);
    }

    /// `w ← w − alpha g_B(w) + beta (w − w_prev)`
    pub(crate) fn heavy_ball_step(&mut self, alpha: f64, beta: f64) {
        self.stochastic_gradient_at_w();
        for i in 0..self.w.len() {
            let wi = self.w[i];
            self.w[i] = wi - alpha * self.g[i] + beta * (wi - self.w_prev[i]);
            self.w_prev[i] = wi;
        }
        self.after_step();
    }

    /// Forgets the momentum direction: `w_prev ← w`.
    pub(crate) fn reset_momentum(&mut self) {
        self.w_prev.copy_from_slice(&self.w);
    }

    /// Starts a fresh averaging sequence at the current iterate (`z ← w`).
    pub(crate) fn start_averaging(&mut self) {
        self.z.copy_from_slice(&self.w);
        self.reset_momentum();
    }

    /// `z ← z − eta g_B(w)`, then `w ← (lambda_next w + z)/(lambda_next + 1)`.
    pub(crate) fn averaging_step(&mut self, eta: f64, lambda_next: f64) {
        self.stochastic_gradient_at_w();
        let keep = lambda_next / (lambda_next + 1.0);
        let mix = 1.0 / (lambda_next + 1.0);
        for i in 0..self.w.len() {
            self.z[i] -= eta * self.g[i];
            let wi = self.w[i];
            self.w[i] = keep * wi + mix * self.z[i];
            self.w_prev[i] = wi;
        }
        self.after_step();
    }

    /// `y = w + m (w − w_prev)`, `w ← y − eta g_B(y)`.
    pub(crate) fn nesterov_step(&mut self, momentum: f64, eta: f64) {
        for i in 0..self.w.len() {
            self.y[i] = self.w[i] + momentum * (self.w[i] - self.w_prev[i]);
        }
        let batch = self.sampler.draw();
        self.p.batch_gradient_into(batch, &self.y, &mut self.g);
        for i in 0..self.w.len() {
            self.w_prev[i] = self.w[i];
            self.w[i] = self.y[i] - eta * self.g[i];
        }
        self.after_step();
    }

    fn after_step(&mut self) {
        self.k += 1;
        let due = self.k % self.record_every == 0 || self.k == self.horizon;
        self.check_and_record(due);
    }

    fn check_and_record(&mut self, due: bool) {
        let dist = vecops::dist(&self.w, self.p.w_star());
        let blown = !dist.is_finite() || dist > self.guard;
        if blown {
            self.diverged = true;
        }
        if due || blown {
            self.p.full_gradient_into(&self.w, &mut self.g);
            self.records.push(Record {
                k: self.k,
                grad_norm: vecops::norm(&self.g),
                dist,
            });
        }
    }

    pub(crate) fn finish(self) -> Trajectory {
        Trajectory {
            records: self.records,
            final_iterate: self.w,
            diverged: self.diverged,
            seed: self.seed,
        }
    }
}

/// Direct heavy-ball iteration with `w_(−1) = w_0`.
pub fn shb_run(
    p: &QuadraticProblem,
    params: &impl MomentumParams,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Trajectory> {
    let mut r = Runner::new(p, cfg, seed)?;
    while !r.done() {
        let (alpha, beta) = params.alpha_beta(r.k());
        r.heavy_ball_step(alpha, beta);
    }
    Ok(r.finish())
}

/// Averaging form: `z_k = z_(k−1) − eta_k g_B(w_k)`,
/// `w_(k+1) = (lambda_(k+1) w_k + z_k)/(lambda_(k+1) + 1)` with `z_(−1) = w_0`.
pub fn shb_avg_run(
    p: &QuadraticProblem,
    sched: &ExpSchedule,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Trajectory> {
    let mut r = Runner::new(p, cfg, seed)?;
    r.start_averaging();
    while !r.done() {
        let k = r.k();
        r.averaging_step(sched.eta(k), sched.lambda(k + 1));
    }
    Ok(r.finish())
}

/// Plain SGD with per-iteration step sizes.
pub fn sgd_run(
    p: &QuadraticProblem,
    step: impl Fn(usize) -> f64,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Trajectory> {
    let mut r = Runner::new(p, cfg, seed)?;
    while !r.done() {
        let alpha = step(r.k());
        r.heavy_ball_step(alpha, 0.0);
    }
    Ok(r.finish())
}

/// Nesterov momentum `(sqrt(kappa) − 1)/(sqrt(kappa) + 1)` with exponentially
/// decreasing steps `eta_k = gamma^(k+1)/L`, taken from `sched`.
pub fn nesterov_run(
    p: &QuadraticProblem,
    sched: &ExpSchedule,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Trajectory> {
    let sk = (sched.l_used() / sched.mu_used()).sqrt();
    let momentum = (sk - 1.0) / (sk + 1.0);
    let mut r = Runner::new(p, cfg, seed)?;
    while !r.done() {
        let eta = sched.decay(r.k()) / sched.l_used();
        r.nesterov_step(momentum, eta);
    }
    Ok(r.finish())
}
