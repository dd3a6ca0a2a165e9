//! Score models with exact VP marginals.
//!
//! Under the forward kernel a prior component `N(mu, S)` becomes
//! `N(sqrt(abar) mu, abar S + (1 - abar) I)`, so the noise prediction
//! `eps = -sqrt(1 - abar) grad log p_t(x_t)` and the Tweedie denoiser
//! `x0_hat = (x_t - sqrt(1 - abar) eps) / sqrt(abar)` are available in closed
//! form, together with the Jacobian of `x0_hat` with respect to `x_t`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::RngExt;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::Vector;

/// Noise prediction and the matching denoised estimate at one `(x_t, abar_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseOutput {
    pub eps: Vector,
    pub x0_hat: Vector,
}

/// Diagonal-covariance Gaussian prior `N(mean, diag(var))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: Vector,
    pub var: Vector,
}

/// Mixture of isotropic Gaussians `sum_k w_k N(mean_k, var_k I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    pub weights: Vec<f64>,
    pub means: Vec<Vector>,
    pub vars: Vec<f64>,
}

type EpsFn = dyn Fn(&Vector, f64) -> Vector + Send + Sync;

/// Any user-supplied noise predictor `(x_t, abar_t) -> eps`.
#[derive(Clone)]
pub struct BlackboxModel {
    dim: usize,
    eps: Arc<EpsFn>,
}

impl fmt::Debug for BlackboxModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlackboxModel").field("dim", &self.dim).finish()
    }
}

#[derive(Debug, Clone)]
pub enum ScoreModel {
    Gaussian(GaussianPrior),
    Gmm(GmmPrior),
    Blackbox(BlackboxModel),
}

impl GaussianPrior {
    pub fn new(mean: Vector, var: Vector) -> Result<Self> {
        check_dim("gaussian prior variances", mean.len(), var.len())?;
        if var.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("prior variances must be positive".into()));
        }
        Ok(Self { mean, var })
    }

    pub fn standard(n: usize) -> Self {
        Self {
            mean: Vector::zeros(n),
            var: Vector::from_element(n, 1.0),
        }
    }
}

impl GmmPrior {
    pub fn new(weights: Vec<f64>, means: Vec<Vector>, vars: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != vars.len() {
            return Err(Error::Config(format!(
                "mixture needs matching weights/means/vars, got {}/{}/{}",
                weights.len(),
                means.len(),
                vars.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("mixture weights sum to {total}, not 1")));
        }
        if vars.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("mixture variances must be positive".into()));
        }
        let n = means[0].len();
        for m in &means {
            check_dim("mixture mean", n, m.len())?;
        }
        Ok(Self { weights, means, vars })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Marginal responsibilities and per-component scores at `x_t`.
    fn components(&self, x: &Vector, abar: f64) -> (Vec<f64>, Vec<Vector>, Vec<f64>) {
        let n = x.len() as f64;
        let sa = abar.sqrt();
        let mut logs = Vec::with_capacity(self.weights.len());
        let mut scores = Vec::with_capacity(self.weights.len());
        let mut marg_vars = Vec::with_capacity(self.weights.len());
        for ((w, mu), s2) in self.weights.iter().zip(&self.means).zip(&self.vars) {
            let v = abar * s2 + 1.0 - abar;
            let diff = x - mu * sa;
            logs.push(w.ln() - 0.5 * n * (2.0 * std::f64::consts::PI * v).ln() - diff.norm_squared() / (2.0 * v));
            scores.push(-diff / v);
            marg_vars.push(v);
        }
        let resp = softmax(&logs);
        (resp, scores, marg_vars)
    }

    fn log_density(&self, x: &Vector, abar: f64) -> f64 {
        let n = x.len() as f64;
        let sa = abar.sqrt();
        let logs: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.vars)
            .map(|((w, mu), s2)| {
                let v = abar * s2 + 1.0 - abar;
                w.ln() - 0.5 * n * (2.0 * std::f64::consts::PI * v).ln() - (x - mu * sa).norm_squared() / (2.0 * v)
            })
            .collect();
        log_sum_exp(&logs)
    }
}

pub(crate) fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

fn softmax(logs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logs);
    logs.iter().map(|l| (l - lse).exp()).collect()
}

impl BlackboxModel {
    pub fn new<F>(dim: usize, eps: F) -> Self
    where
        F: Fn(&Vector, f64) -> Vector + Send + Sync + 'static,
    {
        Self {
            dim,
            eps: Arc::new(eps),
        }
    }
}

fn check_abar(abar: f64) -> Result<()> {
    if !(abar > 0.0 && abar <= 1.0) {
        return Err(Error::Precondition(format!("alpha_bar {abar} outside (0, 1]")));
    }
    Ok(())
}

impl ScoreModel {
    /// Registers a callback noise predictor. Its Jacobian is taken by central
    /// finite differences, costing `2n` evaluations per vector-Jacobian product.
    pub fn blackbox<F>(dim: usize, eps: F) -> Self
    where
        F: Fn(&Vector, f64) -> Vector + Send + Sync + 'static,
    {
        Self::Blackbox(BlackboxModel::new(dim, eps))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.mean.len(),
            Self::Gmm(g) => g.dim(),
            Self::Blackbox(b) => b.dim,
        }
    }

    /// `eps_theta(x_t, t)` and `x0_hat(x_t, t)` at noise level `abar_t`.
    pub fn eps_theta(&self, x_t: &Vector, abar: f64) -> Result<DenoiseOutput> {
        check_dim("score model input", self.dim(), x_t.len())?;
        check_abar(abar)?;
        let s1 = (1.0 - abar).sqrt();
        let eps = match self {
            Self::Gaussian(g) => {
                let sa = abar.sqrt();
                Vector::from_fn(x_t.len(), |i, _| {
                    let v = abar * g.var[i] + 1.0 - abar;
                    s1 * (x_t[i] - sa * g.mean[i]) / v
                })
            }
            Self::Gmm(g) => {
                let (resp, scores, _) = g.components(x_t, abar);
                let mut score = Vector::zeros(x_t.len());
                for (r, s) in resp.iter().zip(&scores) {
                    score.axpy(*r, s, 1.0);
                }
                -score * s1
            }
            Self::Blackbox(b) => {
                let e = (b.eps)(x_t, abar);
                check_dim("blackbox output", b.dim, e.len())?;
                e
            }
        };
        let x0_hat = (x_t - &eps * s1) / abar.sqrt();
        Ok(DenoiseOutput { eps, x0_hat })
    }

    /// `(d x0_hat / d x_t)^T v`.
    pub fn x0_vjp(&self, x_t: &Vector, abar: f64, v: &Vector) -> Result<Vector> {
        check_dim("score model input", self.dim(), x_t.len())?;
        check_dim("vjp cotangent", self.dim(), v.len())?;
        check_abar(abar)?;
        let sa = abar.sqrt();
        Ok(match self {
            Self::Gaussian(g) => Vector::from_fn(v.len(), |i, _| {
                let marg = abar * g.var[i] + 1.0 - abar;
                sa * g.var[i] / marg * v[i]
            }),
            Self::Gmm(g) => {
                // J = (I + (1 - abar) H) / sqrt(abar), H the Hessian of log p_t (symmetric)
                let (resp, scores, marg_vars) = g.components(x_t, abar);
                let mut mean_score = Vector::zeros(v.len());
                let mut hv = Vector::zeros(v.len());
                for ((r, s), mv) in resp.iter().zip(&scores).zip(&marg_vars) {
                    mean_score.axpy(*r, s, 1.0);
                    hv.axpy(-r / mv, v, 1.0);
                    hv.axpy(r * s.dot(v), s, 1.0);
                }
                hv.axpy(-mean_score.dot(v), &mean_score, 1.0);
                (v + hv * (1.0 - abar)) / sa
            }
            Self::Blackbox(_) => {
                let h = 1e-4 * (1.0 + x_t.amax());
                let mut probe = x_t.clone();
                let mut out = Vector::zeros(v.len());
                for i in 0..v.len() {
                    probe[i] = x_t[i] + h;
                    let plus = self.eps_theta(&probe, abar)?.x0_hat;
                    probe[i] = x_t[i] - h;
                    let minus = self.eps_theta(&probe, abar)?.x0_hat;
                    probe[i] = x_t[i];
                    out[i] = (plus - minus).dot(v) / (2.0 * h);
                }
                out
            }
        })
    }

    /// `log p_t(x_t)` of the exact marginal. Not available for blackbox models.
    pub fn log_marginal(&self, x_t: &Vector, abar: f64) -> Option<f64> {
        match self {
            Self::Gaussian(g) => {
                let sa = abar.sqrt();
                Some(
                    (0..x_t.len())
                        .map(|i| {
                            let v = abar * g.var[i] + 1.0 - abar;
                            let d = x_t[i] - sa * g.mean[i];
                            -0.5 * (2.0 * std::f64::consts::PI * v).ln() - d * d / (2.0 * v)
                        })
                        .sum(),
                )
            }
            Self::Gmm(g) => Some(g.log_density(x_t, abar)),
            Self::Blackbox(_) => None,
        }
    }

    /// Draws `x0` from the prior. Not available for blackbox models.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vector> {
        match self {
            Self::Gaussian(g) => Ok(Vector::from_fn(g.mean.len(), |i, _| {
                let z: f64 = rng.sample(StandardNormal);
                g.mean[i] + g.var[i].sqrt() * z
            })),
            Self::Gmm(g) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = g.weights.len() - 1;
                for (i, w) in g.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                let s = g.vars[k].sqrt();
                Ok(Vector::from_fn(g.dim(), |i, _| {
                    let z: f64 = rng.sample(StandardNormal);
                    g.means[k][i] + s * z
                }))
            }
            Self::Blackbox(_) => Err(Error::Config("blackbox models cannot be sampled directly".into())),
        }
    }
}
