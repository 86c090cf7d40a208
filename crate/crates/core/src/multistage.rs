//! Multi-stage SHB: a constant-parameter warm-up over half the budget, then
//! stages of geometrically shrinking step size and growing length.

use std::f64::consts::{LN_2, SQRT_2};
use std::fmt;

use crate::error::{Error, Result};
use crate::optimizers::{MomentumParams, RunConfig, Runner, Trajectory};
use crate::problems::QuadraticProblem;
use crate::schedules::{constant_params, ConstantParams};

/// `3⁵ · 2⁶`, the constant in the batch-size threshold.
pub const BATCH_THRESHOLD_C: f64 = 15552.0;

/// Principal branch of the Lambert W function on `[0, ∞)`.
///
/// Halley iteration started from `ln(1 + x)`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if !(x >= 0.0) || x.is_infinite() {
        return Err(Error::invalid(format!("lambert_w0 needs a finite x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut w = x.ln_1p();
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(w)
}

/// `⌊W(T ln√2 / (384 √κ)) / ln√2⌋`, clamped at zero.
pub fn stage_count(horizon: usize, kappa: f64) -> usize {
    let ln_sqrt2 = 0.5 * LN_2;
    let arg = horizon as f64 * ln_sqrt2 / (384.0 * kappa.sqrt());
    match lambert_w0(arg) {
        Ok(w) => (w / ln_sqrt2).floor().max(0.0) as usize,
        Err(_) => 0,
    }
}

/// Untruncated length of stage `i ≥ 1`:
/// `⌈4 · 2^(i/2) √κ / (2 − √2) · ((i/2 + 5) ln 2 + ln √κ)⌉`.
pub fn nominal_stage_length(i: usize, kappa: f64) -> usize {
    let i = i as f64;
    let sk = kappa.sqrt();
    let v = 4.0 * 2f64.powf(i / 2.0) * sk / (2.0 - SQRT_2) * ((i / 2.0 + 5.0) * LN_2 + sk.ln());
    v.ceil() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub index: usize,
    pub length: usize,
    pub a: f64,
    pub params: ConstantParams,
}

/// Stage layout for a fixed budget. Stage 0 is the `a = 1` warm-up.
///
/// Stage lengths always sum to the horizon: the last stage is truncated when
/// the nominal lengths overrun the budget and extended when they fall short.
/// Stages that would receive no iterations are dropped, so `stages.len() − 1`
/// can be smaller than the nominal count.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub horizon: usize,
    pub nominal_stages: usize,
    pub stages: Vec<Stage>,
}

impl StagePlan {
    /// Number of stages after the warm-up that actually run.
    pub fn post_warmup_stages(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.length).sum()
    }

    /// Step fraction of the last stage, `2^(−I)`.
    pub fn final_a(&self) -> f64 {
        self.stages.last().map_or(1.0, |s| s.a)
    }
}

impl fmt::Display for StagePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# T = {}, I = {}", self.horizon, self.post_warmup_stages())?;
        writeln!(f, "# i T_i a_i alpha_i beta_i")?;
        for s in &self.stages {
            writeln!(
                f,
                "{} {} {} {:.10e} {:.10}",
                s.index, s.length, s.a, s.params.alpha, s.params.beta
            )?;
        }
        Ok(())
    }
}

pub fn plan_stages(horizon: usize, l: f64, mu: f64) -> Result<StagePlan> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let warm = constant_params(l, mu, 1.0)?;
    let kappa = l / mu;
    let nominal = stage_count(horizon, kappa);
    let t0 = if nominal == 0 { horizon } else { horizon / 2 };
    let mut stages = vec![Stage { index: 0, length: t0, a: 1.0, params: warm }];
    let mut remaining = horizon - t0;
    for i in 1..=nominal {
        if remaining == 0 {
            break;
        }
        let length = nominal_stage_length(i, kappa).min(remaining);
        remaining -= length;
        let a = 0.5f64.powi(i as i32);
        stages.push(Stage { index: i, length, a, params: constant_params(l, mu, a)? });
    }
    stages.last_mut().expect("stage 0 always present").length += remaining;
    Ok(StagePlan { horizon, nominal_stages: nominal, stages })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentumMode {
    /// `beta_i` follows each stage's step size.
    #[default]
    PerStage,
    /// `beta_i` pinned to the warm-up value `(1 − 1/(2√κ))²`.
    ConstantHeuristic,
}

impl MomentumMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MomentumMode::PerStage => "per-stage",
            MomentumMode::ConstantHeuristic => "constant",
        }
    }
}

/// Runs the plan for `cfg.horizon` with a momentum reset at every stage
/// boundary.
pub fn multistage_run(
    p: &QuadraticProblem,
    cfg: &RunConfig,
    seed: u64,
    mode: MomentumMode,
) -> Result<Trajectory> {
    let plan = plan_stages(cfg.horizon, p.smoothness(), p.strong_convexity())?;
    run_plan(p, &plan, cfg, seed, mode)
}

pub fn run_plan(
    p: &QuadraticProblem,
    plan: &StagePlan,
    cfg: &RunConfig,
    seed: u64,
    mode: MomentumMode,
) -> Result<Trajectory> {
    if plan.total_iterations() != cfg.horizon {
        return Err(Error::invalid(format!(
            "plan covers {} iterations but the run horizon is {}",
            plan.total_iterations(),
            cfg.horizon
        )));
    }
    let warm_beta = plan.stages[0].params.beta;
    let mut r = Runner::new(p, cfg, seed)?;
    for stage in &plan.stages {
        r.reset_momentum();
        let beta = match mode {
            MomentumMode::PerStage => stage.params.beta,
            MomentumMode::ConstantHeuristic => warm_beta,
        };
        for _ in 0..stage.length {
            if r.done() {
                break;
            }
            r.heavy_ball_step(stage.params.alpha, beta);
        }
    }
    Ok(r.finish())
}

/// `n · max{1/(1 + (n−1)/(C κ²)), 1/(1 + (n−1) a/3)}`.
pub fn batch_threshold(n: usize, kappa: f64, a: f64) -> f64 {
    let m = (n - 1) as f64;
    let first = 1.0 / (1.0 + m / (BATCH_THRESHOLD_C * kappa * kappa));
    let second = 1.0 / (1.0 + m * a / 3.0);
    n as f64 * first.max(second)
}

/// Smallest integer batch size meeting [`batch_threshold`].
pub fn min_batch_size(n: usize, kappa: f64, a: f64) -> usize {
    (batch_threshold(n, kappa, a).ceil() as usize).clamp(1, n)
}

/// Horizon window in which the multi-stage guarantee holds for batch size
/// `b`. `hi` is infinite for a full batch; `lo > hi` means the window is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalRange {
    pub lo: f64,
    pub hi: f64,
}

impl CriticalRange {
    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }
}

pub fn critical_t_range(n: usize, b: usize, kappa: f64) -> Result<CriticalRange> {
    if n < 2 || b == 0 || b > n {
        return Err(Error::InvalidBatch(format!("batch size {b} outside [1, {n}] (n >= 2)")));
    }
    if !(kappa >= 1.0) {
        return Err(Error::invalid(format!("kappa must be >= 1, got {kappa}")));
    }
    let sk = kappa.sqrt();
    let lo = 3.0 * 256.0 * sk / LN_2 * (4.0 * kappa).max(std::f64::consts::E.powi(2));
    if b == n {
        return Ok(CriticalRange { lo, hi: f64::INFINITY });
    }
    let batch_term = ((n - 1) as f64 * b as f64 / (3.0 * (n - b) as f64)).sqrt();
    let ln_sqrt2 = 0.5 * LN_2;
    let c1 = |t: f64| {
        let lg = (t * ln_sqrt2 / (384.0 * sk)).ln();
        512.0 * 3.0 * (kappa * (1.0 + 2.0 * lg * lg)).sqrt() / LN_2
    };
    let mut t = lo;
    for _ in 0..50 {
        let next = c1(t) * batch_term;
        let done = ((next - t) / t).abs() <= 1e-6;
        t = next;
        if done {
            break;
        }
    }
    Ok(CriticalRange { lo, hi: t })
}

/// Stage-wise schedule of the comparator multi-stage method: `S = ⌈log_C T⌉`
/// equal stages, step `C^(−s)/L` in stage `s` and momentum
/// `(1 − sqrt(mu alpha))²`. The heavy-ball history is kept across stages.
#[derive(Debug, Clone, PartialEq)]
pub struct PanSchedule {
    stage_len: usize,
    params: Vec<(f64, f64)>,
}

impl PanSchedule {
    pub fn new(horizon: usize, l: f64, mu: f64, c: f64) -> Result<Self> {
        if !(c > 1.0) {
            return Err(Error::invalid(format!("stage ratio C must exceed 1, got {c}")));
        }
        if horizon == 0 || !(mu > 0.0 && l >= mu) {
            return Err(Error::invalid("need T >= 1 and 0 < mu <= L"));
        }
        let count = ((horizon as f64).ln() / c.ln()).ceil().max(1.0) as usize;
        let stage_len = horizon.div_ceil(count);
        let params = (0..count)
            .map(|s| {
                let alpha = c.powi(-(s as i32)) / l;
                (alpha, (1.0 - (mu * alpha).sqrt()).powi(2))
            })
            .collect();
        Ok(Self { stage_len, params })
    }

    pub fn stage_count(&self) -> usize {
        self.params.len()
    }

    pub fn stage_length(&self) -> usize {
        self.stage_len
    }
}

impl MomentumParams for PanSchedule {
    fn alpha_beta(&self, k: usize) -> (f64, f64) {
        let s = (k / self.stage_len).min(self.params.len() - 1);
        self.params[s]
    }
}
