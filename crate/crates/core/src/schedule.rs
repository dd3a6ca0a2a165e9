//! Discrete variance-preserving noise schedule.
//!
//! The forward kernel is `x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps` with
//! `abar_t = prod_{s<=t} (1 - beta_s)`. Timesteps are 1-based; `abar_0 := 1`.
//! Sampling runs over a re-spaced subsequence of the full schedule, and every
//! coefficient consumed by the sampler is derived from consecutive pairs of that
//! subsequence so the Markovian DDIM form stays exact for any spacing.

use crate::error::{Error, Result};

/// Full schedule plus the re-spaced timesteps used for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    respaced: Vec<usize>,
}

/// Time-dependent coefficients for one jump `t -> t_prev` of the re-spaced chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoeffs {
    /// Current timestep index (1-based).
    pub t: usize,
    /// Previous timestep index, 0 at the terminal jump.
    pub t_prev: usize,
    pub abar: f64,
    pub abar_prev: f64,
    /// Effective per-jump ratio `abar_t / abar_{t_prev}`.
    pub alpha: f64,
    pub gamma: f64,
    pub sigma: f64,
    /// `r_t^2 = 1 - abar_t`.
    pub r_sq: f64,
    pub sqrt_abar: f64,
    pub sqrt_one_minus_abar: f64,
}

/// Default schedule length of the usual pretrained VP backbones.
pub const DEFAULT_T: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

const CLAMP_TOL: f64 = 1e-12;

impl Schedule {
    /// Builds a schedule from explicit per-step betas, identity spacing.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::Config(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        let respaced = (1..=betas.len()).collect();
        Ok(Self {
            betas,
            alpha_bars,
            respaced,
        })
    }

    /// Builds a schedule directly from a strictly decreasing `abar` sequence.
    ///
    /// Betas are recovered as `1 - abar_t / abar_{t-1}`.
    pub fn from_alpha_bars(alpha_bars: &[f64]) -> Result<Self> {
        let mut prev = 1.0;
        let mut betas = Vec::with_capacity(alpha_bars.len());
        for &a in alpha_bars {
            if !(a > 0.0 && a < prev) {
                return Err(Error::Config(format!(
                    "alpha_bar sequence must be strictly decreasing in (0, 1], got {a} after {prev}"
                )));
            }
            betas.push(1.0 - a / prev);
            prev = a;
        }
        let mut s = Self::from_betas(betas)?;
        // keep the caller's values verbatim rather than the re-multiplied products
        s.alpha_bars = alpha_bars.to_vec();
        Ok(s)
    }

    pub fn num_train_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn respaced_timesteps(&self) -> &[usize] {
        &self.respaced
    }

    pub fn num_sampling_steps(&self) -> usize {
        self.respaced.len()
    }

    /// `abar_t` for a 1-based timestep, with `abar_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Coefficients for the jump from respaced position `pos` to `pos - 1`.
    ///
    /// Position 0 jumps to `t = 0` where `abar_0 = 1`.
    pub fn step_coeffs(&self, pos: usize, eta: f64) -> Result<StepCoeffs> {
        if pos >= self.respaced.len() {
            return Err(Error::Precondition(format!(
                "respaced position {pos} out of range (len {})",
                self.respaced.len()
            )));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Config(format!("eta {eta} outside [0, 1]")));
        }
        let t = self.respaced[pos];
        let t_prev = if pos == 0 { 0 } else { self.respaced[pos - 1] };
        Ok(coeffs_from_pair(
            t,
            t_prev,
            self.alpha_bar(t),
            self.alpha_bar(t_prev),
            eta,
        ))
    }
}

/// Coefficients from an explicit `(abar_t, abar_prev)` pair.
pub fn coeffs_from_pair(t: usize, t_prev: usize, abar: f64, abar_prev: f64, eta: f64) -> StepCoeffs {
    let alpha = abar / abar_prev;
    let one_minus_abar = 1.0 - abar;
    let sigma = if one_minus_abar > 0.0 {
        eta * (1.0 - alpha).max(0.0).sqrt() * ((1.0 - abar_prev) / one_minus_abar).max(0.0).sqrt()
    } else {
        0.0
    };
    let mut rest = 1.0 - abar_prev - sigma * sigma;
    if rest < 0.0 && rest >= -CLAMP_TOL {
        rest = 0.0;
    }
    let gamma = one_minus_abar.sqrt() / alpha.sqrt() - rest.max(0.0).sqrt();
    StepCoeffs {
        t,
        t_prev,
        abar,
        abar_prev,
        alpha,
        gamma,
        sigma,
        r_sq: one_minus_abar,
        sqrt_abar: abar.sqrt(),
        sqrt_one_minus_abar: one_minus_abar.sqrt(),
    }
}

/// Linearly spaced betas from `beta_start` to `beta_end`.
pub fn make_linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<Schedule> {
    if steps == 0 {
        return Err(Error::Config("T must be at least 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Config(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )));
    }
    let betas = if steps == 1 {
        vec![beta_start]
    } else {
        let span = (beta_end - beta_start) / (steps - 1) as f64;
        (0..steps).map(|i| beta_start + span * i as f64).collect()
    };
    Schedule::from_betas(betas)
}

impl Default for Schedule {
    fn default() -> Self {
        make_linear_schedule(DEFAULT_T, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule parameters are valid")
    }
}

/// Re-spacing rule for the sampling subsequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Respacing {
    /// Uniform stride that always ends at the terminal index `T`.
    #[default]
    Uniform,
}

/// Returns a copy of `schedule` sampling over `steps` timesteps.
pub fn respace(schedule: &Schedule, steps: usize, mode: Respacing) -> Result<Schedule> {
    let total = schedule.num_train_steps();
    if steps == 0 || steps > total {
        return Err(Error::Config(format!("cannot respace {total} steps into {steps}")));
    }
    let respaced = match mode {
        Respacing::Uniform => uniform_indices(total, steps),
    };
    Ok(Schedule {
        betas: schedule.betas.clone(),
        alpha_bars: schedule.alpha_bars.clone(),
        respaced,
    })
}

// index i (1..=steps) maps to round(i * total / steps); strictly increasing since total >= steps
fn uniform_indices(total: usize, steps: usize) -> Vec<usize> {
    (1..=steps)
        .map(|i| ((i as u128 * total as u128 + steps as u128 / 2) / steps as u128) as usize)
        .collect()
}
