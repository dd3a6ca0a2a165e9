//! Nonlinear measurement models and the scalar Gauss-Newton MAP solver.
//!
//! With a nonlinear forward map there is no closed-form MAP point, so
//! `Phi(x) = ||A(x) - y||^2 / (2 sigma_y^2) + ||x - x0_hat||^2 / (2 r^2)` is
//! minimized iteratively. The data-term curvature is modelled as isotropic,
//! `J^T J ~ lambda I`, estimated from the gradient/residual ratio, which gives a
//! damped scalar step that only needs vector-Jacobian products.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::operators::LinearOperator;
use crate::Vector;

type MapFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type VjpFn = dyn Fn(&Vector, &Vector) -> Vector + Send + Sync;

/// User-supplied differentiable map. Without a vjp, one is taken by central differences.
#[derive(Clone)]
pub struct CustomOperator {
    pub in_dim: usize,
    pub out_dim: usize,
    forward: Arc<MapFn>,
    vjp: Option<Arc<VjpFn>>,
}

impl fmt::Debug for CustomOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomOperator")
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("has_vjp", &self.vjp.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum NonlinearOperator {
    /// A linear operator seen through the nonlinear interface.
    Linear(LinearOperator),
    /// Componentwise `x + a tanh(b x)`; invertible when `a b > -1`.
    Tanh {
        dim: usize,
        a: f64,
        b: f64,
    },
    /// `(H x)^2` componentwise after a linear `H`.
    Squared(LinearOperator),
    Custom(CustomOperator),
}

impl NonlinearOperator {
    pub fn custom<F>(in_dim: usize, out_dim: usize, forward: F) -> Self
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        Self::Custom(CustomOperator {
            in_dim,
            out_dim,
            forward: Arc::new(forward),
            vjp: None,
        })
    }

    pub fn custom_with_vjp<F, G>(in_dim: usize, out_dim: usize, forward: F, vjp: G) -> Self
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
        G: Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
    {
        Self::Custom(CustomOperator {
            in_dim,
            out_dim,
            forward: Arc::new(forward),
            vjp: Some(Arc::new(vjp)),
        })
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Self::Linear(op) | Self::Squared(op) => op.in_dim(),
            Self::Tanh { dim, .. } => *dim,
            Self::Custom(c) => c.in_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Self::Linear(op) | Self::Squared(op) => op.out_dim(),
            Self::Tanh { dim, .. } => *dim,
            Self::Custom(c) => c.out_dim,
        }
    }

    /// Whether `vjp` is analytic rather than finite-difference.
    pub fn has_exact_vjp(&self) -> bool {
        !matches!(self, Self::Custom(CustomOperator { vjp: None, .. }))
    }

    pub fn forward(&self, x: &Vector) -> Result<Vector> {
        check_dim("nonlinear operator input", self.in_dim(), x.len())?;
        let out = match self {
            Self::Linear(op) => op.apply(x)?,
            Self::Tanh { a, b, .. } => x.map(|v| v + a * (b * v).tanh()),
            Self::Squared(op) => op.apply(x)?.map(|v| v * v),
            Self::Custom(c) => (c.forward)(x),
        };
        check_dim("nonlinear operator output", self.out_dim(), out.len())?;
        Ok(out)
    }

    /// `J(x)^T v`.
    pub fn vjp(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        check_dim("nonlinear operator input", self.in_dim(), x.len())?;
        check_dim("nonlinear vjp cotangent", self.out_dim(), v.len())?;
        Ok(match self {
            Self::Linear(op) => op.adjoint(v)?,
            Self::Tanh { a, b, .. } => Vector::from_fn(x.len(), |i, _| {
                let th = (b * x[i]).tanh();
                (1.0 + a * b * (1.0 - th * th)) * v[i]
            }),
            Self::Squared(op) => {
                let hx = op.apply(x)?;
                op.adjoint(&hx.component_mul(v).scale(2.0))?
            }
            Self::Custom(c) => match &c.vjp {
                Some(f) => f(x, v),
                None => {
                    let h = 1e-6 * (1.0 + x.amax());
                    let mut probe = x.clone();
                    let mut out = Vector::zeros(x.len());
                    for i in 0..x.len() {
                        probe[i] = x[i] + h;
                        let plus = (c.forward)(&probe);
                        probe[i] = x[i] - h;
                        let minus = (c.forward)(&probe);
                        probe[i] = x[i];
                        out[i] = (plus - minus).dot(v) / (2.0 * h);
                    }
                    out
                }
            },
        })
    }
}

/// Settings of the scalar Gauss-Newton MAP solver.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GnConfig {
    pub iterations: usize,
    pub damping: f64,
    /// Lower bound on `||r||^2` in the curvature estimate.
    pub residual_floor: f64,
    /// Step halvings tried when a step increases the objective.
    pub max_halvings: usize,
}

impl Default for GnConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            damping: 1e-3,
            residual_floor: 1e-12,
            max_halvings: 8,
        }
    }
}

impl GnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || !(self.damping > 0.0) || !(self.residual_floor > 0.0) {
            return Err(Error::Config(format!("invalid Gauss-Newton settings {self:?}")));
        }
        Ok(())
    }
}

/// Negative log-posterior of the MAP problem (up to a constant).
pub fn nl_objective(
    op: &NonlinearOperator,
    y: &Vector,
    sigma_y: f64,
    x0_hat: &Vector,
    r_sq: f64,
    x: &Vector,
) -> Result<f64> {
    let r = op.forward(x)? - y;
    Ok(r.norm_squared() / (2.0 * sigma_y * sigma_y) + (x - x0_hat).norm_squared() / (2.0 * r_sq))
}

/// Scalar data-term curvature `sigma_y^2 ||g_d||^2 / ||r||^2` with `g_d = J^T r / sigma_y^2`.
pub fn scalar_curvature(
    op: &NonlinearOperator,
    y: &Vector,
    sigma_y: f64,
    x: &Vector,
    residual_floor: f64,
) -> Result<f64> {
    let r = op.forward(x)? - y;
    let gd = op.vjp(x, &r)? / (sigma_y * sigma_y);
    Ok(sigma_y * sigma_y * gd.norm_squared() / r.norm_squared().max(residual_floor))
}

/// Iterates and objective values of one solve; `objective[0]` is at `x0_hat`.
#[derive(Debug, Clone)]
pub struct GnTrace {
    pub x: Vector,
    pub objective: Vec<f64>,
    pub first_step_norm: f64,
}

pub fn nl_map_estimate_traced(
    op: &NonlinearOperator,
    y: &Vector,
    sigma_y: f64,
    x0_hat: &Vector,
    r_sq: f64,
    cfg: &GnConfig,
) -> Result<GnTrace> {
    cfg.validate()?;
    if !(sigma_y > 0.0) || !(r_sq > 0.0) {
        return Err(Error::Precondition(format!(
            "nonlinear MAP needs sigma_y > 0 and r^2 > 0, got {sigma_y}, {r_sq}"
        )));
    }
    check_dim("measurement", op.out_dim(), y.len())?;
    let s2 = sigma_y * sigma_y;
    let objective = |x: &Vector| nl_objective(op, y, sigma_y, x0_hat, r_sq, x);
    let mut x = x0_hat.clone();
    let mut phi = objective(&x)?;
    let mut trace = vec![phi];
    let mut first_step_norm = 0.0;
    for k in 0..cfg.iterations {
        let r = op.forward(&x)? - y;
        let gd = op.vjp(&x, &r)? / s2;
        let grad = &gd + (&x - x0_hat) / r_sq;
        let h_tot = s2 * gd.norm_squared() / r.norm_squared().max(cfg.residual_floor) + 1.0 / r_sq;
        let step = grad / (h_tot + cfg.damping);
        if !step.iter().all(|v| v.is_finite()) || !h_tot.is_finite() {
            return Err(Error::NonFinite {
                iteration: k,
                message: "Gauss-Newton step".into(),
            });
        }
        if k == 0 {
            first_step_norm = step.norm();
        }
        let mut scale = 1.0;
        for _ in 0..=cfg.max_halvings {
            let cand = &x - &step * scale;
            let phi_c = objective(&cand)?;
            if !phi_c.is_finite() {
                return Err(Error::NonFinite {
                    iteration: k,
                    message: "objective".into(),
                });
            }
            if phi_c <= phi {
                x = cand;
                phi = phi_c;
                break;
            }
            scale *= 0.5;
        }
        trace.push(phi);
    }
    Ok(GnTrace {
        x,
        objective: trace,
        first_step_norm,
    })
}

/// MAP point of the nonlinear problem by `cfg.iterations` damped scalar Gauss-Newton
/// steps from `x0_hat`. A step that raises the objective is halved up to
/// `cfg.max_halvings` times, and skipped if none of the candidates descend.
pub fn nl_map_estimate(
    op: &NonlinearOperator,
    y: &Vector,
    sigma_y: f64,
    x0_hat: &Vector,
    r_sq: f64,
    cfg: &GnConfig,
) -> Result<Vector> {
    Ok(nl_map_estimate_traced(op, y, sigma_y, x0_hat, r_sq, cfg)?.x)
}

/// Noise-space residual `sqrt(abar)/sqrt(1-abar) (x0_hat - x0*)`.
pub fn nl_residual_dt(
    op: &NonlinearOperator,
    y: &Vector,
    sigma_y: f64,
    x0_hat: &Vector,
    abar: f64,
    cfg: &GnConfig,
) -> Result<Vector> {
    if !(abar > 0.0 && abar < 1.0) {
        return Err(Error::Precondition(format!("alpha_bar {abar} outside (0, 1)")));
    }
    let x_star = nl_map_estimate(op, y, sigma_y, x0_hat, 1.0 - abar, cfg)?;
    Ok((x0_hat - x_star) * (abar.sqrt() / (1.0 - abar).sqrt()))
}
