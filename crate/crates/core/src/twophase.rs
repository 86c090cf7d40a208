//! Two-phase SHB: constant accelerated parameters for a fraction `c` of the
//! budget, then the exponential averaging form with a restarted schedule.

use crate::error::{Error, Result};
use crate::optimizers::{RunConfig, Runner, Trajectory};
use crate::problems::QuadraticProblem;
use crate::schedules::{constant_params, ExpSchedule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhaseConfig {
    pub c: f64,
    pub horizon: usize,
}

impl TwoPhaseConfig {
    pub fn new(c: f64, horizon: usize) -> Result<Self> {
        let cfg = Self { c, horizon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::invalid(format!("phase split c must lie in (0, 1), got {}", self.c)));
        }
        let t0 = self.phase_one_len();
        if t0 < 1 || t0 >= self.horizon {
            return Err(Error::invalid(format!(
                "phase split {} of T = {} leaves an empty phase",
                self.c, self.horizon
            )));
        }
        Ok(())
    }

    /// `⌊cT⌋`
    pub fn phase_one_len(&self) -> usize {
        (self.c * self.horizon as f64).floor() as usize
    }

    pub fn phase_two_len(&self) -> usize {
        self.horizon - self.phase_one_len()
    }
}

/// Phase 1: `⌊cT⌋` heavy-ball steps with `a = 1`. Phase 2: the averaging form
/// over the remaining iterations with an exponential schedule of that horizon
/// (`tau = 1`), started from `z = w_(T0)` with the momentum history dropped.
pub fn twophase_run(
    p: &QuadraticProblem,
    tp: &TwoPhaseConfig,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Trajectory> {
    tp.validate()?;
    if tp.horizon != cfg.horizon {
        return Err(Error::invalid(format!(
            "two-phase horizon {} differs from run horizon {}",
            tp.horizon, cfg.horizon
        )));
    }
    let (l, mu) = (p.smoothness(), p.strong_convexity());
    let params = constant_params(l, mu, 1.0)?;
    let t1 = tp.phase_two_len();
    let sched = ExpSchedule::new(l, mu, t1, 1.0)?;

    let mut r = Runner::new(p, cfg, seed)?;
    for _ in 0..tp.phase_one_len() {
        if r.done() {
            break;
        }
        r.heavy_ball_step(params.alpha, params.beta);
    }
    r.start_averaging();
    for j in 0..t1 {
        if r.done() {
            break;
        }
        r.averaging_step(sched.eta(j), sched.lambda(j + 1));
    }
    Ok(r.finish())
}

/// Rate exponent `q = 1 − ln(c√κ + 1 − c)/ln κ`: the bias term decays like
/// `exp(−T/κ^q)`.
pub fn q_exponent(c: f64, kappa: f64) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::invalid(format!("c must lie in (0, 1), got {c}")));
    }
    if !(kappa > 1.0) {
        return Err(Error::invalid(format!("q is defined for kappa > 1, got {kappa}")));
    }
    Ok(1.0 - (c * kappa.sqrt() + 1.0 - c).ln() / kappa.ln())
}
