//! Step-size and momentum sequences.

use crate::error::{Error, Result};

/// Constant accelerated parameters `alpha = a/L`, `beta = (1 − ½ sqrt(alpha mu))²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantParams {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
}

pub fn constant_params(l: f64, mu: f64, a: f64) -> Result<ConstantParams> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::invalid(format!("step fraction a must lie in (0, 1], got {a}")));
    }
    check_curvature(l, mu)?;
    let alpha = a / l;
    let beta = (1.0 - 0.5 * (alpha * mu).sqrt()).powi(2);
    Ok(ConstantParams { alpha, beta, a })
}

fn check_curvature(l: f64, mu: f64) -> Result<()> {
    if !(mu > 0.0 && l >= mu && l.is_finite()) {
        return Err(Error::invalid(format!(
            "need 0 < mu <= L, got L = {l}, mu = {mu}"
        )));
    }
    Ok(())
}

/// Scale of the base step `upsilon` relative to the smoothness estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepScale {
    /// `upsilon = 1/(4L)`
    #[default]
    Quarter,
    /// `upsilon = 1/(2L)`, the choice used by the misestimation analysis.
    Half,
}

impl StepScale {
    fn factor(self) -> f64 {
        match self {
            StepScale::Quarter => 0.25,
            StepScale::Half => 0.5,
        }
    }
}

/// Exponentially decreasing `eta_k = upsilon gamma^(k+1)` together with the
/// matching averaging weights `lambda_k`.
///
/// `gamma = (tau/T)^(1/T)`, so `eta_(T−1) = upsilon tau / T`. The weights are
///
/// ```text
/// lambda_k = (1 − 2 eta_0 L) / (eta_k mu) · (1 − (1 − eta_k mu)^k)
/// ```
///
/// which gives `lambda_0 = 0`. `L` and `mu` are whatever estimates the
/// schedule was built with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpSchedule {
    horizon: usize,
    tau: f64,
    upsilon: f64,
    gamma: f64,
    l_used: f64,
    mu_used: f64,
}

impl ExpSchedule {
    pub fn new(l: f64, mu: f64, horizon: usize, tau: f64) -> Result<Self> {
        Self::with_scale(l, mu, horizon, tau, StepScale::Quarter)
    }

    pub fn with_scale(l: f64, mu: f64, horizon: usize, tau: f64, scale: StepScale) -> Result<Self> {
        check_curvature(l, mu)?;
        if horizon == 0 {
            return Err(Error::invalid("schedule horizon must be positive"));
        }
        if !(tau >= 1.0) || tau > horizon as f64 {
            return Err(Error::invalid(format!(
                "tau must lie in [1, T] = [1, {horizon}], got {tau}"
            )));
        }
        let t = horizon as f64;
        Ok(Self {
            horizon,
            tau,
            upsilon: scale.factor() / l,
            gamma: (tau / t).powf(1.0 / t),
            l_used: l,
            mu_used: mu,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn upsilon(&self) -> f64 {
        self.upsilon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn l_used(&self) -> f64 {
        self.l_used
    }

    pub fn mu_used(&self) -> f64 {
        self.mu_used
    }

    /// `gamma^(k+1)`
    pub fn decay(&self, k: usize) -> f64 {
        self.gamma.powf(k as f64 + 1.0)
    }

    pub fn eta(&self, k: usize) -> f64 {
        self.upsilon * self.decay(k)
    }

    pub fn lambda(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let eta_k = self.eta(k);
        let x = eta_k * self.mu_used;
        // 1 − (1 − x)^k without cancellation
        let tail = -(k as f64 * (-x).ln_1p()).exp_m1();
        (1.0 - 2.0 * self.eta(0) * self.l_used) / x * tail
    }

    /// Equivalent direct-form `(alpha_k, beta_k)`.
    pub fn shb_params(&self, k: usize) -> (f64, f64) {
        to_shb_params(self.eta(k), self.lambda(k), self.lambda(k + 1))
    }
}

/// `alpha_k = eta_k/(1 + lambda_(k+1))`, `beta_k = lambda_k/(1 + lambda_(k+1))`.
pub fn to_shb_params(eta_k: f64, lambda_curr: f64, lambda_next: f64) -> (f64, f64) {
    let denom = 1.0 + lambda_next;
    (eta_k / denom, lambda_curr / denom)
}

/// Schedule built from misestimated curvature `L̂ = L/nu_l`, `mû = nu_mu mu`.
pub fn misestimated_exp_schedule(
    l: f64,
    mu: f64,
    nu_l: f64,
    nu_mu: f64,
    horizon: usize,
    tau: f64,
    scale: StepScale,
) -> Result<ExpSchedule> {
    if !(nu_l > 0.0) || !(nu_mu > 0.0) {
        return Err(Error::invalid("misestimation factors must be positive"));
    }
    let l_hat = l / nu_l;
    let mu_hat = mu * nu_mu;
    if !(mu_hat <= l_hat) {
        return Err(Error::invalid(format!(
            "misestimated curvature is inconsistent: L̂ = {l_hat}, mû = {mu_hat}"
        )));
    }
    ExpSchedule::with_scale(l_hat, mu_hat, horizon, tau, scale)
}

/// Number of leading iterations `T ln(nu_l) / ln(T/tau)` during which an
/// underestimated smoothness constant can make the iterates grow.
pub fn transient_iterations(nu_l: f64, horizon: usize, tau: f64) -> f64 {
    let t = horizon as f64;
    if nu_l <= 1.0 || t <= tau {
        return 0.0;
    }
    t * nu_l.ln() / (t / tau).ln()
}
