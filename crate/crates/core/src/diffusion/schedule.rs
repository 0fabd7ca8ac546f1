//! Linear noise schedule for the interaction diffusion chain.

use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;

/// Per-step noise coefficients over `T` steps.
///
/// `gamma_bar[t]` is the cumulative signal retention with the convention
/// `gamma_bar[0] = 1`; `gamma[t] = gamma_bar[t] / gamma_bar[t-1]` and
/// `beta[t] = 1 - gamma[t]` for `t` in `1..=T`.
#[derive(Clone, Debug)]
pub struct NoiseSchedule<S: Scalar> {
    steps: usize,
    gamma_bar: Vec<S>, // indexed 0..=T
    gamma: Vec<S>,     // indexed 1..=T (entry 0 unused)
    beta: Vec<S>,      // indexed 1..=T (entry 0 unused)
}

impl<S: Scalar> NoiseSchedule<S> {
    /// Build the linear schedule `1 - gamma_bar[t] = s * (g_min + (t-1)/(T-1) * (g_max - g_min))`.
    pub fn build(steps: usize, s: f64, gamma_min: f64, gamma_max: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Config(format!("schedule needs T >= 2, got {steps}")));
        }
        if !(0.0 < gamma_min && gamma_min < gamma_max && gamma_max < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < gamma_min < gamma_max < 1, got ({gamma_min}, {gamma_max})"
            )));
        }
        if !(0.0 < s && s <= 1.0) {
            return Err(Error::Config(format!("noise scale s must be in (0, 1], got {s}")));
        }
        let mut gamma_bar = vec![S::one(); steps + 1];
        let mut gamma = vec![S::zero(); steps + 1];
        let mut beta = vec![S::zero(); steps + 1];
        for t in 1..=steps {
            let frac = (t - 1) as f64 / (steps - 1) as f64;
            let noise = s * (gamma_min + frac * (gamma_max - gamma_min));
            gamma_bar[t] = S::from_f64(1.0 - noise);
        }
        for t in 1..=steps {
            gamma[t] = gamma_bar[t] / gamma_bar[t - 1];
            beta[t] = S::one() - gamma[t];
            if !(gamma[t] > S::zero() && gamma[t] < S::one()) {
                return Err(Error::Config(format!(
                    "derived gamma[{t}] outside (0,1); schedule parameters too aggressive"
                )));
            }
        }
        Ok(Self {
            steps,
            gamma_bar,
            gamma,
            beta,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Cumulative retention, valid for `t` in `0..=T`.
    pub fn gamma_bar(&self, t: usize) -> S {
        self.gamma_bar[t]
    }

    /// Per-step retention, valid for `t` in `1..=T`.
    pub fn gamma(&self, t: usize) -> S {
        self.gamma[t]
    }

    /// Per-step noise, valid for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> S {
        self.beta[t]
    }

    /// Coefficients of the reverse-posterior mean
    /// `mu = coef_t * alpha_t + coef_0 * alpha_0` and its variance, for
    /// `t` in `1..=T`. At `t = 1` the posterior collapses to `alpha_0`
    /// exactly with zero variance.
    pub fn posterior_coefficients(&self, t: usize) -> Result<(S, S, S)> {
        if t == 0 || t > self.steps {
            return Err(Error::Config(format!(
                "posterior step {t} outside 1..={}",
                self.steps
            )));
        }
        let one = S::one();
        let gb_prev = self.gamma_bar[t - 1];
        let gb = self.gamma_bar[t];
        let g = self.gamma[t];
        let denom = one - gb;
        let coef_t = g.sqrt() * (one - gb_prev) / denom;
        let coef_0 = gb_prev.sqrt() * (one - g) / denom;
        let var = (one - g) * (one - gb_prev) / denom;
        Ok((coef_t, coef_0, var))
    }

    /// SNR-difference loss weight `0.5 * (SNR(t-1) - SNR(t))` for `t >= 2`;
    /// the `t = 1` case is the unweighted reconstruction term with weight 1.
    pub fn snr_weight(&self, t: usize) -> Result<S> {
        if t == 0 || t > self.steps {
            return Err(Error::Config(format!(
                "snr weight step {t} outside 1..={}",
                self.steps
            )));
        }
        if t == 1 {
            return Ok(S::one());
        }
        let one = S::one();
        let half = S::from_f64(0.5);
        let gb_prev = self.gamma_bar[t - 1];
        let gb = self.gamma_bar[t];
        Ok(half * (gb_prev / (one - gb_prev) - gb / (one - gb)))
    }
}
