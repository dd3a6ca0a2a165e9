//! Ground truth for tests and acceptance runs.
//!
//! Everything here is written against the model parameters directly, with
//! dense factorizations and grid quadrature, so that it shares no code with
//! the operator backends, the guidance surrogates or the sampler it checks.

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::{Rng, RngExt};

use crate::error::{check_dim, Error, Result};
use crate::priors::{GmmPrior, ScoreModel};
use crate::Vector;

/// Nodes per axis for 1D grids.
pub const NODES_1D: usize = 4096;
/// Nodes per axis for 2D grids.
pub const NODES_2D: usize = 256;
/// Half-width of the final grid in posterior standard deviations.
pub const GRID_HALF_WIDTH: f64 = 8.0;

/// Exact `p(x0 | y)` for a Gaussian prior and linear-Gaussian likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vector,
    pub cov: DMatrix<f64>,
}

fn spd_inverse(p: DMatrix<f64>, what: &str) -> Result<(Cholesky<f64, Dyn>, DMatrix<f64>)> {
    let chol = Cholesky::new(p).ok_or_else(|| Error::Numerical {
        message: format!("{what} is not positive definite"),
        residual: f64::NAN,
    })?;
    let inv = chol.inverse();
    Ok((chol, inv))
}

/// Conjugate posterior `Sigma = (S0^-1 + A^T A / s^2)^-1`,
/// `mu = Sigma (S0^-1 mu0 + A^T y / s^2)` for prior `N(mu0, diag(var0))`.
pub fn gaussian_posterior(
    mu0: &Vector,
    var0: &Vector,
    a: &DMatrix<f64>,
    y: &Vector,
    sigma_y: f64,
) -> Result<GaussianPosterior> {
    check_dim("posterior prior variances", mu0.len(), var0.len())?;
    check_dim("posterior operator columns", mu0.len(), a.ncols())?;
    check_dim("posterior measurement", a.nrows(), y.len())?;
    if !(sigma_y > 0.0) {
        return Err(Error::Precondition("conjugate posterior needs sigma_y > 0".into()));
    }
    let s2 = sigma_y * sigma_y;
    let prior_prec = DMatrix::from_diagonal(&var0.map(|v| 1.0 / v));
    let prec = &prior_prec + a.transpose() * a / s2;
    let rhs = &prior_prec * mu0 + a.transpose() * y / s2;
    let (chol, cov) = spd_inverse(prec, "posterior precision")?;
    let mean = chol.solve(&rhs);
    Ok(GaussianPosterior {
        mean,
        cov: (&cov + cov.transpose()) * 0.5,
    })
}

/// `E[x0 | x_t, y]` for a Gaussian prior: the conjugate posterior with `x_t`
/// appended as a second observation `sqrt(abar) x0 + sqrt(1 - abar) eps`.
fn gaussian_conditional_mean(
    mu0: &Vector,
    var0: &Vector,
    a: &DMatrix<f64>,
    y: &Vector,
    sigma_y: f64,
    x_t: &Vector,
    abar: f64,
) -> Result<Vector> {
    let n = mu0.len();
    let s2 = sigma_y * sigma_y;
    let r2 = 1.0 - abar;
    let mut prec = DMatrix::from_diagonal(&var0.map(|v| 1.0 / v)) + a.transpose() * a / s2;
    let mut rhs = Vector::from_fn(n, |i, _| mu0[i] / var0[i]) + a.transpose() * y / s2;
    for i in 0..n {
        prec[(i, i)] += abar / r2;
        rhs[i] += abar.sqrt() * x_t[i] / r2;
    }
    let (chol, _) = spd_inverse(prec, "conditional precision")?;
    Ok(chol.solve(&rhs))
}

/// `eps* = E[eps | x_t, y] = (x_t - sqrt(abar) E[x0 | x_t, y]) / sqrt(1 - abar)`.
///
/// Closed form for Gaussian priors; grid quadrature for 1D and 2D mixtures.
pub fn exact_eps_star(
    prior: &ScoreModel,
    a: &DMatrix<f64>,
    y: &Vector,
    sigma_y: f64,
    x_t: &Vector,
    abar: f64,
) -> Result<Vector> {
    check_dim("oracle state", prior.dim(), x_t.len())?;
    if !(abar > 0.0 && abar < 1.0) {
        return Err(Error::Precondition(format!("alpha_bar {abar} outside (0, 1)")));
    }
    if !(sigma_y > 0.0) {
        return Err(Error::Precondition("oracle needs sigma_y > 0".into()));
    }
    let cond_mean = match prior {
        ScoreModel::Gaussian(g) => gaussian_conditional_mean(&g.mean, &g.var, a, y, sigma_y, x_t, abar)?,
        ScoreModel::Gmm(g) => QuadraturePosterior::gmm_given_xt(g, a, y, sigma_y, x_t, abar)?.mean(),
        ScoreModel::Blackbox(_) => {
            return Err(Error::Precondition("no exact posterior for a blackbox model".into()));
        }
    };
    Ok((x_t - cond_mean * abar.sqrt()) / (1.0 - abar).sqrt())
}

/// Normalized trapezoid weights on a regular 1D or 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraturePosterior {
    axes: Vec<Vec<f64>>,
    /// Row-major over `axes[0] x axes[1]`.
    weights: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + h * i as f64).collect()
}

fn trapezoid(i: usize, n: usize) -> f64 {
    if i == 0 || i + 1 == n {
        0.5
    } else {
        1.0
    }
}

fn gaussian_log_kernel(d2: f64, var: f64, dim: f64) -> f64 {
    -0.5 * dim * (2.0 * std::f64::consts::PI * var).ln() - d2 / (2.0 * var)
}

fn gmm_log_prior(prior: &GmmPrior, x: &[f64]) -> f64 {
    let logs: Vec<f64> = prior
        .weights
        .iter()
        .zip(&prior.means)
        .zip(&prior.vars)
        .map(|((w, mu), v)| {
            let d2: f64 = x.iter().zip(mu.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            w.ln() + gaussian_log_kernel(d2, *v, x.len() as f64)
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

fn dense_forward(a: &DMatrix<f64>) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
    move |x| {
        (0..a.nrows())
            .map(|i| (0..a.ncols()).map(|k| a[(i, k)] * x[k]).sum())
            .collect()
    }
}

impl QuadraturePosterior {
    /// Grid posterior of an unnormalized log density in one or two dimensions.
    ///
    /// The grid starts at `(lo, hi)` and is re-centred on the current mean with
    /// half-width `GRID_HALF_WIDTH` standard deviations until its extent
    /// settles. Fails if the final grid still carries mass on its boundary.
    pub fn from_log_density<F>(lo: &[f64], hi: &[f64], log_density: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let dim = lo.len();
        if !(dim == 1 || dim == 2) || hi.len() != dim {
            return Err(Error::Precondition(format!(
                "quadrature supports 1 or 2 dimensions, got {dim}"
            )));
        }
        let nodes = if dim == 1 { NODES_1D } else { NODES_2D };
        let mut lo = lo.to_vec();
        let mut hi = hi.to_vec();
        for _ in 0..12 {
            let post = Self::evaluate(&lo, &hi, nodes, &log_density)?;
            let mean = post.mean();
            let std = post.std();
            let mut settled = true;
            for k in 0..dim {
                let spacing = (hi[k] - lo[k]) / (nodes - 1) as f64;
                let half = (GRID_HALF_WIDTH * std[k]).max(4.0 * spacing);
                let (nlo, nhi) = (mean[k] - half, mean[k] + half);
                let width = hi[k] - lo[k];
                if ((nhi - nlo) / width - 1.0).abs() > 0.05 || (mean[k] - 0.5 * (lo[k] + hi[k])).abs() > 0.05 * width {
                    settled = false;
                }
                lo[k] = nlo;
                hi[k] = nhi;
            }
            if settled {
                post.check_boundary()?;
                return Ok(post);
            }
        }
        Err(Error::Resolution("grid did not settle after 12 refinements".into()))
    }

    fn evaluate<F>(lo: &[f64], hi: &[f64], nodes: usize, log_density: &F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let axes: Vec<Vec<f64>> = lo.iter().zip(hi).map(|(l, h)| linspace(*l, *h, nodes)).collect();
        let mut logs = Vec::with_capacity(nodes.pow(axes.len() as u32));
        if axes.len() == 1 {
            for x in &axes[0] {
                logs.push(log_density(&[*x]));
            }
        } else {
            for x in &axes[0] {
                for z in &axes[1] {
                    logs.push(log_density(&[*x, *z]));
                }
            }
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Resolution("density vanishes on the whole grid".into()));
        }
        let mut weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        for (idx, w) in weights.iter_mut().enumerate() {
            *w *= if axes.len() == 1 {
                trapezoid(idx, nodes)
            } else {
                trapezoid(idx / nodes, nodes) * trapezoid(idx % nodes, nodes)
            };
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { axes, weights })
    }

    fn check_boundary(&self) -> Result<()> {
        let max = self.weights.iter().cloned().fold(0.0, f64::max);
        let n = self.axes[0].len();
        let on_edge = |idx: usize| -> bool {
            if self.axes.len() == 1 {
                idx == 0 || idx + 1 == n
            } else {
                let (i, j) = (idx / n, idx % n);
                i == 0 || j == 0 || i + 1 == n || j + 1 == n
            }
        };
        let edge = self
            .weights
            .iter()
            .enumerate()
            .filter(|(i, _)| on_edge(*i))
            .map(|(_, w)| *w)
            .fold(0.0, f64::max);
        if edge > 1e-9 * max {
            return Err(Error::Resolution(format!("boundary weight {:.3e} of peak", edge / max)));
        }
        Ok(())
    }

    /// `p(x0 | y)` for a 1D or 2D mixture prior and `y = A x0 + sigma_y n`.
    pub fn gmm(prior: &GmmPrior, a: &DMatrix<f64>, y: &Vector, sigma_y: f64) -> Result<Self> {
        check_dim("quadrature operator columns", prior.dim(), a.ncols())?;
        Self::gmm_impl(prior, &dense_forward(a), y, sigma_y, None)
    }

    /// `p(x0 | y)` for `y = f(x0) + sigma_y n` with an arbitrary forward map `f`.
    pub fn gmm_nonlinear<F>(prior: &GmmPrior, forward: F, y: &Vector, sigma_y: f64) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        Self::gmm_impl(prior, &forward, y, sigma_y, None)
    }

    /// `p(x0 | x_t, y)`, adding the forward kernel `N(x_t; sqrt(abar) x0, 1 - abar)`.
    pub fn gmm_given_xt(
        prior: &GmmPrior,
        a: &DMatrix<f64>,
        y: &Vector,
        sigma_y: f64,
        x_t: &Vector,
        abar: f64,
    ) -> Result<Self> {
        check_dim("quadrature operator columns", prior.dim(), a.ncols())?;
        check_dim("quadrature state", prior.dim(), x_t.len())?;
        Self::gmm_impl(prior, &dense_forward(a), y, sigma_y, Some((x_t, abar)))
    }

    fn gmm_impl(
        prior: &GmmPrior,
        forward: &dyn Fn(&[f64]) -> Vec<f64>,
        y: &Vector,
        sigma_y: f64,
        xt: Option<(&Vector, f64)>,
    ) -> Result<Self> {
        let dim = prior.dim();
        if !(sigma_y > 0.0) {
            return Err(Error::Precondition("quadrature needs sigma_y > 0".into()));
        }
        let s2 = sigma_y * sigma_y;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for (mu, v) in prior.means.iter().zip(&prior.vars) {
            for k in 0..dim {
                lo[k] = lo[k].min(mu[k] - 10.0 * v.sqrt());
                hi[k] = hi[k].max(mu[k] + 10.0 * v.sqrt());
            }
        }
        let probe = forward(&lo);
        check_dim("quadrature measurement", probe.len(), y.len())?;
        Self::from_log_density(&lo, &hi, |x| {
            let mut l = gmm_log_prior(prior, x);
            for (fx, yi) in forward(x).iter().zip(y.iter()) {
                l -= (fx - yi) * (fx - yi) / (2.0 * s2);
            }
            if let Some((x_t, abar)) = xt {
                let sa = abar.sqrt();
                let d2: f64 = (0..dim).map(|k| (x_t[k] - sa * x[k]).powi(2)).sum();
                l -= d2 / (2.0 * (1.0 - abar));
            }
            l
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights of the marginal along `axis`.
    pub fn marginal(&self, axis: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.axes[axis].len();
        if self.axes.len() == 1 {
            return (self.axes[0].clone(), self.weights.clone());
        }
        let mut w = vec![0.0; n];
        for (idx, p) in self.weights.iter().enumerate() {
            let i = if axis == 0 { idx / n } else { idx % n };
            w[i] += p;
        }
        (self.axes[axis].clone(), w)
    }

    pub fn mean(&self) -> Vector {
        Vector::from_fn(self.dim(), |k, _| {
            let (x, w) = self.marginal(k);
            x.iter().zip(&w).map(|(a, b)| a * b).sum()
        })
    }

    pub fn std(&self) -> Vector {
        let mean = self.mean();
        Vector::from_fn(self.dim(), |k, _| {
            let (x, w) = self.marginal(k);
            x.iter()
                .zip(&w)
                .map(|(a, b)| (a - mean[k]).powi(2) * b)
                .sum::<f64>()
                .sqrt()
        })
    }

    /// Inverse-CDF draws from the marginal along `axis`, linear within cells.
    pub fn sample_marginal<R: Rng + ?Sized>(&self, axis: usize, count: usize, rng: &mut R) -> Vec<f64> {
        let (x, w) = self.marginal(axis);
        let mut cdf = Vec::with_capacity(w.len());
        let mut acc = 0.0;
        for p in &w {
            acc += p;
            cdf.push(acc);
        }
        (0..count)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let i = cdf.partition_point(|c| *c < u).min(x.len() - 1);
                if i == 0 {
                    return x[0];
                }
                let frac = (u - cdf[i - 1]) / (cdf[i] - cdf[i - 1]).max(f64::MIN_POSITIVE);
                x[i - 1] + frac * (x[i] - x[i - 1])
            })
            .collect()
    }
}

/// Exact W1 between two weighted point sets on the line: the integral of
/// `|F_a - F_b|`. Weights are normalized internally.
pub fn wasserstein1_discrete(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> f64 {
    let sa: f64 = wa.iter().sum();
    let sb: f64 = wb.iter().sum();
    let mut events: Vec<(f64, f64)> = a
        .iter()
        .zip(wa)
        .map(|(x, w)| (*x, w / sa))
        .chain(b.iter().zip(wb).map(|(x, w)| (*x, -w / sb)))
        .collect();
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut diff = 0.0;
    let mut total = 0.0;
    for pair in events.windows(2) {
        diff += pair[0].1;
        total += diff.abs() * (pair[1].0 - pair[0].0);
    }
    total
}

/// W1 between an empirical sample and a 1D quadrature posterior.
pub fn wasserstein1_1d(samples: &[f64], posterior: &QuadraturePosterior) -> Result<f64> {
    if samples.len() < 100 {
        return Err(Error::Precondition(format!(
            "W1 needs at least 100 samples, got {}",
            samples.len()
        )));
    }
    if posterior.dim() != 1 {
        return Err(Error::Precondition("W1 is defined here for 1D posteriors".into()));
    }
    let uniform = vec![1.0; samples.len()];
    Ok(wasserstein1_discrete(
        samples,
        &uniform,
        &posterior.axes[0],
        &posterior.weights,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::GaussianPrior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    fn bimodal() -> GmmPrior {
        GmmPrior::new(
            vec![0.4, 0.6],
            vec![Vector::from_element(1, -0.8), Vector::from_element(1, 0.7)],
            vec![0.05, 0.08],
        )
        .unwrap()
    }

    #[test]
    fn equal_precision_posterior_is_midpoint() {
        let s = 0.3;
        let mu0 = Vector::from_vec(vec![1.0, -1.0, 0.5]);
        let y = Vector::from_vec(vec![0.0, 2.0, 0.5]);
        let p = gaussian_posterior(&mu0, &Vector::from_element(3, s * s), &DMatrix::identity(3, 3), &y, s).unwrap();
        assert!((p.mean - (&mu0 + &y) / 2.0).amax() < 1e-12);
        assert!((p.cov - DMatrix::identity(3, 3) * (s * s / 2.0)).amax() < 1e-12);
    }

    #[test]
    fn vague_likelihood_returns_prior() {
        let mu0 = Vector::from_vec(vec![0.2, -0.4]);
        let var0 = Vector::from_vec(vec![0.5, 2.0]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let p = gaussian_posterior(&mu0, &var0, &a, &Vector::from_element(1, 5.0), 1e9).unwrap();
        assert!((p.mean - &mu0).amax() < 1e-6);
        assert!((p.cov - DMatrix::from_diagonal(&var0)).amax() < 1e-6);
    }

    #[test]
    fn posterior_mean_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(4, 6, |_, _| randn(&mut rng));
        let y = Vector::from_fn(4, |_, _| randn(&mut rng));
        let mu0 = Vector::from_fn(6, |_, _| randn(&mut rng));
        let r2 = 0.7;
        let sigma = 0.2;
        let p = gaussian_posterior(&mu0, &Vector::from_element(6, r2), &a, &y, sigma).unwrap();
        let grad = a.transpose() * (&a * &p.mean - &y) / (sigma * sigma) + (&p.mean - &mu0) / r2;
        assert!(grad.amax() < 1e-8, "{}", grad.amax());
    }

    #[test]
    fn non_positive_noise_is_rejected() {
        let v = Vector::from_element(1, 1.0);
        assert!(gaussian_posterior(&v, &v, &DMatrix::identity(1, 1), &v, 0.0).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in [1, 2] {
            let mu0 = Vector::from_fn(dim, |_, _| randn(&mut rng));
            let var0 = Vector::from_fn(dim, |i, _| 0.5 + i as f64);
            let a = DMatrix::from_fn(1, dim, |_, _| randn(&mut rng));
            let y = Vector::from_element(1, 0.3);
            let x_t = Vector::from_fn(dim, |_, _| randn(&mut rng));
            let (sigma, abar) = (0.4, 0.6);
            let model = ScoreModel::Gaussian(GaussianPrior::new(mu0.clone(), var0.clone()).unwrap());
            let closed = exact_eps_star(&model, &a, &y, sigma, &x_t, abar).unwrap();
            let post = QuadraturePosterior::from_log_density(&vec![-10.0; dim], &vec![10.0; dim], |x| {
                let mut l = 0.0;
                let mut ax = 0.0;
                for k in 0..dim {
                    l -= (x[k] - mu0[k]).powi(2) / (2.0 * var0[k]);
                    l -= (x_t[k] - abar.sqrt() * x[k]).powi(2) / (2.0 * (1.0 - abar));
                    ax += a[(0, k)] * x[k];
                }
                l - (ax - y[0]).powi(2) / (2.0 * sigma * sigma)
            })
            .unwrap();
            let quad = (&x_t - post.mean() * abar.sqrt()) / (1.0 - abar).sqrt();
            assert!(
                (&closed - &quad).amax() < 1e-6,
                "dim {dim}: {}",
                (&closed - &quad).amax()
            );
        }
    }

    #[test]
    fn uninformative_measurement_gives_unconditional_noise() {
        let x_t = Vector::from_element(1, 0.4);
        let abar = 0.3;
        let model = ScoreModel::Gmm(bimodal());
        let a = DMatrix::identity(1, 1);
        let star = exact_eps_star(&model, &a, &Vector::from_element(1, 0.0), 1e6, &x_t, abar).unwrap();
        let eps = model.eps_theta(&x_t, abar).unwrap().eps;
        assert!((star - eps).amax() < 1e-6);
    }

    #[test]
    fn near_clean_state_acts_as_observation() {
        let abar = 1.0 - 1e-8;
        let mu0 = Vector::from_vec(vec![0.3, -0.2]);
        let var0 = Vector::from_vec(vec![0.8, 1.5]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -2.0]);
        let y = Vector::from_element(1, 0.6);
        let x_t = Vector::from_vec(vec![0.5, 0.1]);
        let sigma = 0.3;
        let model = ScoreModel::Gaussian(GaussianPrior::new(mu0.clone(), var0.clone()).unwrap());
        let star = exact_eps_star(&model, &a, &y, sigma, &x_t, abar).unwrap();
        let cond = (&x_t - &star * (1.0 - abar).sqrt()) / abar.sqrt();
        // augmented observation [A; sqrt(abar) I] with noise levels (sigma, sqrt(1 - abar)), scaled to a common sigma
        let scale = sigma / (1.0 - abar).sqrt();
        let mut aug = DMatrix::zeros(3, 2);
        aug.row_mut(0).copy_from(&a.row(0));
        aug[(1, 0)] = abar.sqrt() * scale;
        aug[(2, 1)] = abar.sqrt() * scale;
        let yaug = Vector::from_vec(vec![y[0], x_t[0] * scale, x_t[1] * scale]);
        let reference = gaussian_posterior(&mu0, &var0, &aug, &yaug, sigma).unwrap();
        assert!((&cond - &reference.mean).amax() < 1e-6);
        assert!((&cond - &x_t).amax() < 1e-3);
    }

    #[test]
    fn gmm_quadrature_weights_and_moments() {
        let prior = bimodal();
        let a = DMatrix::identity(1, 1);
        let y = Vector::from_element(1, 0.1);
        let sigma = 0.3;
        let post = QuadraturePosterior::gmm(&prior, &a, &y, sigma).unwrap();
        assert!((post.weights().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        // per-component conjugacy gives the posterior as a reweighted mixture
        let (mut z, mut m) = (0.0, 0.0);
        for ((w, mu), v) in prior.weights.iter().zip(&prior.means).zip(&prior.vars) {
            let ev = v + sigma * sigma;
            let evidence = w * (-(y[0] - mu[0]).powi(2) / (2.0 * ev)).exp() / ev.sqrt();
            let cm = (mu[0] * sigma * sigma + y[0] * v) / ev;
            z += evidence;
            m += evidence * cm;
        }
        assert!((post.mean()[0] - m / z).abs() < 1e-9);
    }

    #[test]
    fn two_dimensional_mixture_posterior() {
        let prior = GmmPrior::new(
            vec![0.5, 0.5],
            vec![Vector::from_vec(vec![-1.0, 0.0]), Vector::from_vec(vec![1.0, 0.5])],
            vec![0.1, 0.2],
        )
        .unwrap();
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let post = QuadraturePosterior::gmm(&prior, &a, &Vector::from_element(1, 0.2), 0.2).unwrap();
        assert_eq!(post.axes()[0].len(), NODES_2D);
        assert!((post.weights().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let (_, w0) = post.marginal(0);
        assert!((w0.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn boundary_mass_is_reported() {
        // a density that never decays cannot be bracketed
        let err = QuadraturePosterior::from_log_density(&[-1.0], &[1.0], |x| x[0]).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)), "{err}");
        assert!(QuadraturePosterior::from_log_density(&[0.0; 3], &[1.0; 3], |_| 0.0).is_err());
    }

    #[test]
    fn w1_point_masses_and_translation() {
        assert!((wasserstein1_discrete(&[0.0], &[1.0], &[0.37], &[1.0]) - 0.37).abs() < 1e-15);
        let post =
            QuadraturePosterior::gmm(&bimodal(), &DMatrix::identity(1, 1), &Vector::from_element(1, 0.0), 0.5).unwrap();
        let x = &post.axes()[0];
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.25).collect();
        let d = wasserstein1_discrete(x, post.weights(), &shifted, post.weights());
        assert!((d - 0.25).abs() < 1e-9, "{d}");
    }

    #[test]
    fn w1_self_distance_is_small() {
        let post =
            QuadraturePosterior::gmm(&bimodal(), &DMatrix::identity(1, 1), &Vector::from_element(1, 0.2), 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = post.sample_marginal(0, 100_000, &mut rng);
        let d = wasserstein1_1d(&draws, &post).unwrap();
        assert!(d <= 0.01 * post.std()[0], "{d}");
        assert!(wasserstein1_1d(&draws[..50], &post).is_err());
    }

    #[test]
    fn nonlinear_forward_with_linear_map_matches_dense() {
        let prior = bimodal();
        let y = Vector::from_element(1, 0.3);
        let a = DMatrix::from_element(1, 1, 1.5);
        let dense = QuadraturePosterior::gmm(&prior, &a, &y, 0.2).unwrap();
        let generic = QuadraturePosterior::gmm_nonlinear(&prior, |x| vec![1.5 * x[0]], &y, 0.2).unwrap();
        assert_eq!(dense, generic);
    }
}
