//! Noise-variance schedules for the forward diffusion process.

use crate::error::{Error, Result};

/// Per-step noise variances `beta` together with the derived sequences
/// `alpha = 1 - beta`, the cumulative products `bar_alpha` and the posterior
/// variances `posterior_var`.
///
/// Indexing is 1-based to match diffusion-step conventions: step `t` refers to
/// `beta[t - 1]`, valid for `1 <= t <= len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    bar_alpha: Vec<f64>,
    posterior_var: Vec<f64>,
}

impl DiffusionSchedule {
    /// Builds a schedule from explicit per-step variances.
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if beta.iter().any(|&b| !(0.0..1.0).contains(&b) || b <= 0.0) {
            return Err(Error::Config("every beta must lie in (0, 1)".into()));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut bar_alpha = Vec::with_capacity(beta.len());
        let mut prod = 1.0;
        for a in &alpha {
            prod *= a;
            bar_alpha.push(prod);
        }
        // bar_alpha[t-2] plays the role of the previous cumulative product;
        // for t = 1 it is defined as 1, which zeroes the posterior variance.
        let posterior_var: Vec<f64> = (0..beta.len())
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { bar_alpha[i - 1] };
                (1.0 - prev) / (1.0 - bar_alpha[i]) * beta[i]
            })
            .collect();
        Ok(Self { beta, alpha, bar_alpha, posterior_var })
    }

    /// Linear interpolation of `beta` between the two endpoints, inclusive.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let beta = if steps == 1 {
            vec![beta_min]
        } else {
            (0..steps)
                .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(beta)
    }

    /// A degenerate schedule with `bar_alpha = 1` at every step, useful for
    /// exercising zero-noise identities.
    pub fn nearly_noiseless(steps: usize) -> Self {
        let beta = vec![f64::MIN_POSITIVE; steps.max(1)];
        let alpha = vec![1.0; steps.max(1)];
        Self {
            beta,
            bar_alpha: alpha.clone(),
            posterior_var: vec![0.0; steps.max(1)],
            alpha,
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            Err(Error::StepOutOfRange { step: t, max: self.len() })
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.beta[t - 1])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.alpha[t - 1])
    }

    pub fn bar_alpha(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.bar_alpha[t - 1])
    }

    pub fn posterior_var(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.posterior_var[t - 1])
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn bar_alphas(&self) -> &[f64] {
        &self.bar_alpha
    }
}

/// The noise level a score is queried at: either the un-noised data
/// distribution (used by Langevin sampling) or schedule step `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    Data,
    Step(usize),
}

impl NoiseLevel {
    /// The cumulative product `bar_alpha` this level corresponds to
    /// (`1` for [`NoiseLevel::Data`]).
    pub fn bar_alpha(self, schedule: &DiffusionSchedule) -> Result<f64> {
        match self {
            NoiseLevel::Data => Ok(1.0),
            NoiseLevel::Step(t) => schedule.bar_alpha(t),
        }
    }
}
