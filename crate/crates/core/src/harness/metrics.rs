use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::Vector;

/// Reported in place of an infinite PSNR.
pub const PSNR_CAP_DB: f64 = 200.0;

/// `10 log10(peak^2 n / ||x - ref||^2)`, infinite for identical inputs.
pub fn psnr(x: &Vector, reference: &Vector, peak: f64) -> Result<f64> {
    check_dim("psnr input", reference.len(), x.len())?;
    if !(peak > 0.0) {
        return Err(Error::Precondition(format!("psnr peak {peak} must be positive")));
    }
    let err = (x - reference).norm_squared();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak * x.len() as f64 / err).log10())
}

/// PSNR clamped to [`PSNR_CAP_DB`] so that it can be written to JSON and CSV.
pub fn psnr_capped(x: &Vector, reference: &Vector, peak: f64) -> Result<f64> {
    Ok(psnr(x, reference, peak)?.min(PSNR_CAP_DB))
}

/// Per-run summary. Deterministic for a fixed config and seed; wall time is
/// kept separately in [`Timing`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub task: String,
    pub seed: u64,
    pub chains: usize,
    pub steps: usize,
    pub eta: f64,
    /// Noise level as configured, before any range conversion.
    pub sigma_y: f64,
    pub xi_mode: String,
    pub g: String,
    pub d: String,
    /// Mean over chains, in dB against the ground truth; image tasks only.
    pub psnr: Option<f64>,
    /// Mean squared error per coordinate against the ground truth, averaged over chains.
    pub mse: f64,
    /// Wasserstein-1 distance to the quadrature posterior; tasks with an oracle only.
    pub w1: Option<f64>,
    pub posterior_std: Option<f64>,
    pub mean_xi: f64,
    pub mean_alignment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
}
