//! Likelihood surrogates and the adaptive guidance coefficient.
//!
//! Every surrogate is an additive noise-space term: the guided prediction is
//! `eps_theta + xi * g`, and the sampler subtracts `gamma_t * xi * g` from the
//! unconditional DDIM step. Terms point along the gradient of the data misfit
//! with respect to `x_t`, so a positive `xi` moves toward the measurement.
//!
//! The step length comes from the MAP residual `d_t`, the noise-space gap
//! between the denoised estimate and the closed-form MAP point of the
//! Gaussian-approximated posterior. The direction comes from `g_t`. They are
//! combined by least-squares projection, `xi = 2 <d, g> / ||g||^2`, where the
//! factor 2 compensates the typical misalignment of the two surrogates.

use crate::error::{Error, Result};
use crate::nonlinear::{nl_residual_dt, GnConfig, NonlinearOperator};
use crate::operators::{LinearOperator, Measurement};
use crate::priors::{DenoiseOutput, ScoreModel};
use crate::Vector;

/// Forward model used for conditioning.
#[derive(Debug, Clone)]
pub enum Forward {
    Linear(LinearOperator),
    Nonlinear { op: NonlinearOperator, gn: GnConfig },
}

impl Forward {
    pub fn in_dim(&self) -> usize {
        match self {
            Self::Linear(op) => op.in_dim(),
            Self::Nonlinear { op, .. } => op.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Self::Linear(op) => op.out_dim(),
            Self::Nonlinear { op, .. } => op.out_dim(),
        }
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        match self {
            Self::Linear(op) => op.apply(x),
            Self::Nonlinear { op, .. } => op.forward(x),
        }
    }

    /// `J^T (A(x) - y)`: gradient of `||A(x) - y||^2 / 2`.
    fn misfit_gradient(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        match self {
            Self::Linear(op) => op.adjoint(&(op.apply(x)? - y)),
            Self::Nonlinear { op, .. } => op.vjp(x, &(op.forward(x)? - y)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surrogate {
    Dps,
    Pgdm,
    Map,
}

impl std::str::FromStr for Surrogate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dps" => Ok(Self::Dps),
            "pgdm" => Ok(Self::Pgdm),
            "map" => Ok(Self::Map),
            other => Err(Error::Config(format!("unknown surrogate `{other}`"))),
        }
    }
}

impl std::fmt::Display for Surrogate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Dps => "dps",
            Self::Pgdm => "pgdm",
            Self::Map => "map",
        })
    }
}

/// How the guidance coefficient is chosen.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XiMode {
    /// `2 <d, g> / ||g||^2`.
    Adaptive,
    /// Constant coefficient.
    Fixed(f64),
    /// Adaptive coefficient along the averaged direction `(g + d) / 2`.
    Averaged,
}

impl std::str::FromStr for XiMode {
    type Err = Error;

    /// Accepts `adaptive`, `averaged`, `fixed(c)`, `fixed:c` or a bare number.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let fixed = |v: &str| -> Result<Self> {
            let c: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad fixed xi `{s}`")))?;
            Ok(Self::Fixed(c))
        };
        match t.as_str() {
            "adaptive" => Ok(Self::Adaptive),
            "averaged" => Ok(Self::Averaged),
            _ => {
                if let Some(inner) = t.strip_prefix("fixed(").and_then(|r| r.strip_suffix(')')) {
                    fixed(inner)
                } else if let Some(inner) = t.strip_prefix("fixed:") {
                    fixed(inner)
                } else {
                    fixed(&t)
                }
            }
        }
    }
}

impl std::fmt::Display for XiMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Adaptive => f.write_str("adaptive"),
            Self::Averaged => f.write_str("averaged"),
            Self::Fixed(c) => write!(f, "fixed({c})"),
        }
    }
}

/// Which surrogates play direction and magnitude, and how they are combined.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GuidanceSpec {
    pub g_kind: Surrogate,
    pub d_kind: Surrogate,
    pub xi_mode: XiMode,
    /// Rescale `g` to unit norm before computing the update.
    pub normalize_g: bool,
    /// Keep negative adaptive coefficients instead of zeroing them.
    pub allow_negative_xi: bool,
}

impl Default for GuidanceSpec {
    fn default() -> Self {
        Self {
            g_kind: Surrogate::Pgdm,
            d_kind: Surrogate::Map,
            xi_mode: XiMode::Adaptive,
            normalize_g: true,
            allow_negative_xi: false,
        }
    }
}

impl GuidanceSpec {
    pub fn validate(&self) -> Result<()> {
        if let XiMode::Fixed(c) = self.xi_mode {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(Error::Config(format!("fixed xi must be finite and >= 0, got {c}")));
            }
        }
        Ok(())
    }
}

/// Everything the sampler needs from one guidance evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceStep {
    /// Direction surrogate, after optional normalization.
    pub g: Vector,
    /// Magnitude surrogate.
    pub d: Vector,
    pub xi: f64,
    /// The vector `xi * g` (or `xi * (g + d) / 2` when averaged).
    pub update: Vector,
    /// `<d / ||d||, g / ||g||>`, zero when either vanishes.
    pub alignment: f64,
}

fn regularizer(sigma_y: f64, r_sq: f64) -> f64 {
    sigma_y * sigma_y / r_sq
}

fn check_interior(abar: f64) -> Result<()> {
    if !(abar > 0.0 && abar < 1.0) {
        return Err(Error::Precondition(format!(
            "alpha_bar {abar} must lie in (0, 1) so that r_t^2 = 1 - alpha_bar > 0"
        )));
    }
    Ok(())
}

/// `x0* = x0_hat + A^T (A A^T + sigma_y^2 / r^2 I)^{-1} (y - A x0_hat)`.
pub fn map_estimate(op: &LinearOperator, meas: &Measurement, x0_hat: &Vector, r_sq: f64) -> Result<Vector> {
    if !(r_sq > 0.0) {
        return Err(Error::Precondition(format!("r^2 = {r_sq} must be positive")));
    }
    let resid = &meas.y - op.apply(x0_hat)?;
    let z = op.gram_solve(regularizer(meas.sigma_y, r_sq), &resid)?;
    Ok(x0_hat + op.adjoint(&z)?)
}

/// `d_t = sqrt(abar)/sqrt(1-abar) A^T (A A^T + sigma_y^2 / r^2 I)^{-1} (A x0_hat - y)`.
pub fn surrogate_map_residual(op: &LinearOperator, meas: &Measurement, x0_hat: &Vector, abar: f64) -> Result<Vector> {
    check_interior(abar)?;
    let r_sq = 1.0 - abar;
    let resid = op.apply(x0_hat)? - &meas.y;
    let z = op.gram_solve(regularizer(meas.sigma_y, r_sq), &resid)?;
    Ok(op.adjoint(&z)? * (abar.sqrt() / r_sq.sqrt()))
}

/// MAP residual for either kind of forward model.
pub fn map_residual(fwd: &Forward, meas: &Measurement, x0_hat: &Vector, abar: f64) -> Result<Vector> {
    match fwd {
        Forward::Linear(op) => surrogate_map_residual(op, meas, x0_hat, abar),
        Forward::Nonlinear { op, gn } => nl_residual_dt(op, &meas.y, meas.sigma_y, x0_hat, abar, gn),
    }
}

fn dps_term(
    model: &ScoreModel,
    fwd: &Forward,
    meas: &Measurement,
    x_t: &Vector,
    abar: f64,
    den: &DenoiseOutput,
) -> Result<Vector> {
    let grad = fwd.misfit_gradient(&den.x0_hat, &meas.y)?;
    Ok(model.x0_vjp(x_t, abar, &grad)? * abar)
}

fn pgdm_term(
    model: &ScoreModel,
    fwd: &Forward,
    meas: &Measurement,
    x_t: &Vector,
    abar: f64,
    den: &DenoiseOutput,
) -> Result<Vector> {
    check_interior(abar)?;
    let Forward::Linear(op) = fwd else {
        return Err(Error::Config("the pgdm surrogate needs a linear operator".into()));
    };
    let r_sq = 1.0 - abar;
    let resid = op.apply(&den.x0_hat)? - &meas.y;
    let z = op.gram_solve(regularizer(meas.sigma_y, r_sq), &resid)?;
    Ok(model.x0_vjp(x_t, abar, &op.adjoint(&z)?)? * (abar / r_sq))
}

/// DPS noise-space term `abar (d x0_hat/d x_t)^T A^T (A x0_hat - y)`.
pub fn surrogate_dps(model: &ScoreModel, fwd: &Forward, meas: &Measurement, x_t: &Vector, abar: f64) -> Result<Vector> {
    let den = model.eps_theta(x_t, abar)?;
    dps_term(model, fwd, meas, x_t, abar, &den)
}

/// Pseudo-inverse-guided term
/// `abar / r^2 (d x0_hat/d x_t)^T A^T (A A^T + sigma_y^2 / r^2 I)^{-1} (A x0_hat - y)`.
pub fn surrogate_pgdm(
    model: &ScoreModel,
    fwd: &Forward,
    meas: &Measurement,
    x_t: &Vector,
    abar: f64,
) -> Result<Vector> {
    let den = model.eps_theta(x_t, abar)?;
    pgdm_term(model, fwd, meas, x_t, abar, &den)
}

/// Evaluates surrogate `kind` given a precomputed denoiser output at `x_t`.
pub fn surrogate(
    kind: Surrogate,
    model: &ScoreModel,
    fwd: &Forward,
    meas: &Measurement,
    x_t: &Vector,
    abar: f64,
    den: &DenoiseOutput,
) -> Result<Vector> {
    match kind {
        Surrogate::Dps => dps_term(model, fwd, meas, x_t, abar, den),
        Surrogate::Pgdm => pgdm_term(model, fwd, meas, x_t, abar, den),
        Surrogate::Map => map_residual(fwd, meas, &den.x0_hat, abar),
    }
}

/// `2 <d, g> / ||g||^2`, or 0 when `g` vanishes.
pub fn adaptive_xi(d: &Vector, g: &Vector) -> f64 {
    let gg = g.norm_squared();
    if gg == 0.0 {
        0.0
    } else {
        2.0 * d.dot(g) / gg
    }
}

/// Cosine between `d` and `g`, zero when either vanishes.
pub fn alignment(d: &Vector, g: &Vector) -> f64 {
    let (dn, gn) = (d.norm(), g.norm());
    if dn == 0.0 || gn == 0.0 {
        0.0
    } else {
        d.dot(g) / (dn * gn)
    }
}

/// Computes the guidance update for one sampler step.
pub fn guidance_step(
    spec: &GuidanceSpec,
    model: &ScoreModel,
    fwd: &Forward,
    meas: &Measurement,
    x_t: &Vector,
    abar: f64,
    den: &DenoiseOutput,
) -> Result<GuidanceStep> {
    let raw_g = surrogate(spec.g_kind, model, fwd, meas, x_t, abar, den)?;
    let d = if spec.d_kind == spec.g_kind {
        raw_g.clone()
    } else {
        surrogate(spec.d_kind, model, fwd, meas, x_t, abar, den)?
    };
    let g = if spec.normalize_g {
        let n = raw_g.norm();
        if n > 0.0 {
            raw_g / n
        } else {
            raw_g
        }
    } else {
        raw_g
    };
    let clamp = |xi: f64| if spec.allow_negative_xi { xi } else { xi.max(0.0) };
    let (xi, direction) = match spec.xi_mode {
        XiMode::Adaptive => (clamp(adaptive_xi(&d, &g)), None),
        XiMode::Fixed(c) => (c, None),
        XiMode::Averaged => {
            let avg = (&g + &d) * 0.5;
            (clamp(adaptive_xi(&d, &avg)), Some(avg))
        }
    };
    let update = match &direction {
        Some(avg) => avg * xi,
        None => &g * xi,
    };
    let alignment = alignment(&d, &g);
    Ok(GuidanceStep {
        g,
        d,
        xi,
        update,
        alignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::{GaussianPrior, GmmPrior};
    use nalgebra::DMatrix;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vector {
        Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn rand_mat(m: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn gmm_1d() -> ScoreModel {
        ScoreModel::Gmm(
            GmmPrior::new(
                vec![0.4, 0.6],
                vec![Vector::from_element(1, -1.0), Vector::from_element(1, 1.5)],
                vec![0.3, 0.2],
            )
            .unwrap(),
        )
    }

    fn gmm_nd(n: usize, rng: &mut ChaCha8Rng) -> ScoreModel {
        ScoreModel::Gmm(
            GmmPrior::new(vec![0.5, 0.5], vec![rand_vec(n, rng), rand_vec(n, rng)], vec![0.4, 0.7]).unwrap(),
        )
    }

    #[test]
    fn xi_reference_values() {
        let g = Vector::from_vec(vec![1.0, 1.0]);
        assert_eq!(adaptive_xi(&g, &g), 2.0);
        assert_eq!(adaptive_xi(&Vector::from_vec(vec![1.0, -1.0]), &g), 0.0);
        assert_eq!(adaptive_xi(&Vector::from_vec(vec![3.0, 0.0]), &g), 3.0);
        assert_eq!(adaptive_xi(&g, &Vector::zeros(2)), 0.0);
    }

    #[test]
    fn xi_mode_parsing() {
        assert_eq!("adaptive".parse::<XiMode>().unwrap(), XiMode::Adaptive);
        assert_eq!("fixed(1)".parse::<XiMode>().unwrap(), XiMode::Fixed(1.0));
        assert_eq!("fixed:2.5".parse::<XiMode>().unwrap(), XiMode::Fixed(2.5));
        assert_eq!("2".parse::<XiMode>().unwrap(), XiMode::Fixed(2.0));
        assert!("sometimes".parse::<XiMode>().is_err());
    }

    #[test]
    fn zero_residual_gives_zero_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = gmm_nd(4, &mut rng);
        let op = LinearOperator::dense(rand_mat(3, 4, &mut rng)).unwrap();
        let x_t = rand_vec(4, &mut rng);
        let abar = 0.4;
        let den = model.eps_theta(&x_t, abar).unwrap();
        let meas = Measurement::new(op.apply(&den.x0_hat).unwrap(), 0.1).unwrap();
        let fwd = Forward::Linear(op.clone());
        for kind in [Surrogate::Dps, Surrogate::Pgdm, Surrogate::Map] {
            let v = surrogate(kind, &model, &fwd, &meas, &x_t, abar, &den).unwrap();
            assert!(v.amax() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn dps_matches_finite_difference_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = gmm_nd(3, &mut rng);
        let op = LinearOperator::dense(rand_mat(2, 3, &mut rng)).unwrap();
        let y = rand_vec(2, &mut rng);
        let meas = Measurement::new(y.clone(), 0.05).unwrap();
        let x_t = rand_vec(3, &mut rng);
        let abar = 0.6;
        let fwd = Forward::Linear(op.clone());
        let term = surrogate_dps(&model, &fwd, &meas, &x_t, abar).unwrap();
        let loss = |x: &Vector| {
            let x0 = model.eps_theta(x, abar).unwrap().x0_hat;
            0.5 * (&y - op.apply(&x0).unwrap()).norm_squared()
        };
        let h = 1e-6;
        for i in 0..3 {
            let mut p = x_t.clone();
            p[i] += h;
            let mut m = x_t.clone();
            m[i] -= h;
            let fd = abar * (loss(&p) - loss(&m)) / (2.0 * h);
            assert!((term[i] - fd).abs() < 1e-4, "{} vs {fd}", term[i]);
        }
    }

    #[test]
    fn pgdm_identity_noiseless_reduces_to_scaled_vjp() {
        let model = gmm_1d();
        let fwd = Forward::Linear(LinearOperator::identity(1));
        let meas = Measurement::new(Vector::from_element(1, 0.8), 0.0).unwrap();
        let x_t = Vector::from_element(1, 0.1);
        let abar = 0.3;
        let den = model.eps_theta(&x_t, abar).unwrap();
        let term = surrogate_pgdm(&model, &fwd, &meas, &x_t, abar).unwrap();
        let expect = model.x0_vjp(&x_t, abar, &(&den.x0_hat - &meas.y)).unwrap() * (abar / (1.0 - abar));
        assert!((term - expect).amax() < 1e-14);
    }

    #[test]
    fn pgdm_matches_dense_reimplementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = gmm_1d();
        let a = rand_mat(3, 1, &mut rng);
        let fwd = Forward::Linear(LinearOperator::dense(a.clone()).unwrap());
        let meas = Measurement::new(rand_vec(3, &mut rng), 0.2).unwrap();
        let x_t = Vector::from_element(1, 0.7);
        let abar = 0.55;
        let r2 = 1.0 - abar;
        let den = model.eps_theta(&x_t, abar).unwrap();
        let gram = &a * a.transpose() + DMatrix::identity(3, 3) * (0.04 / r2);
        let z = gram.lu().solve(&(&a * &den.x0_hat - &meas.y)).unwrap();
        let expect = model.x0_vjp(&x_t, abar, &(a.transpose() * z)).unwrap() * (abar / r2);
        let got = surrogate_pgdm(&model, &fwd, &meas, &x_t, abar).unwrap();
        assert!((got - expect).amax() < 1e-8);
        assert!(surrogate_pgdm(&model, &fwd, &meas, &x_t, 1.0).is_err());
    }

    #[test]
    fn map_residual_scalar_case() {
        // identity, sigma_y^2 / r^2 = 1 with abar = 0.25: coefficient 0.5/sqrt(0.75)/2
        let op = LinearOperator::identity(2);
        let abar = 0.25;
        let sigma = (0.75f64).sqrt();
        let meas = Measurement::new(Vector::from_vec(vec![1.0, -2.0]), sigma).unwrap();
        let x0 = Vector::from_vec(vec![0.5, 0.5]);
        let d = surrogate_map_residual(&op, &meas, &x0, abar).unwrap();
        let expect = (&x0 - &meas.y) * 0.288_675_134_594_812_9;
        assert!((d - expect).amax() < 1e-12);
        let star = map_estimate(&op, &meas, &x0, 1.0 - abar).unwrap();
        assert!((star - (&x0 + &meas.y) / 2.0).amax() < 1e-14);
    }

    #[test]
    fn map_estimate_limits_and_primal_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = rand_mat(6, 10, &mut rng);
        let op = LinearOperator::dense(a.clone()).unwrap();
        let x0 = rand_vec(10, &mut rng);
        let meas = Measurement::new(rand_vec(6, &mut rng), 0.3).unwrap();
        let r_sq = 0.5;
        let lambda = 0.09 / r_sq;
        let star = map_estimate(&op, &meas, &x0, r_sq).unwrap();
        let primal = &a.transpose() * &a + DMatrix::identity(10, 10) * lambda;
        let direct = &x0 + primal.lu().solve(&(a.transpose() * (&meas.y - &a * &x0))).unwrap();
        assert!((&star - &direct).norm() / direct.norm() < 1e-10);
        // prior dominates
        let weak = Measurement::new(meas.y.clone(), 1e6).unwrap();
        assert!((map_estimate(&op, &weak, &x0, 1.0).unwrap() - &x0).amax() < 1e-6);
        // d_t equals the noise-space gap to x0*
        let abar = 0.7;
        let d = surrogate_map_residual(&op, &meas, &x0, abar).unwrap();
        let star = map_estimate(&op, &meas, &x0, 1.0 - abar).unwrap();
        let gap = (&x0 - star) * (abar.sqrt() / (1.0 - abar).sqrt());
        assert!((&d - &gap).norm() <= 1e-10 * gap.norm().max(1.0));
    }

    #[test]
    fn self_pair_doubles_the_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = gmm_nd(4, &mut rng);
        let fwd = Forward::Linear(LinearOperator::dense(rand_mat(2, 4, &mut rng)).unwrap());
        let meas = Measurement::new(rand_vec(2, &mut rng), 0.1).unwrap();
        let x_t = rand_vec(4, &mut rng);
        let den = model.eps_theta(&x_t, 0.5).unwrap();
        for kind in [Surrogate::Dps, Surrogate::Pgdm, Surrogate::Map] {
            let spec = GuidanceSpec {
                g_kind: kind,
                d_kind: kind,
                ..GuidanceSpec::default()
            };
            let step = guidance_step(&spec, &model, &fwd, &meas, &x_t, 0.5, &den).unwrap();
            assert!((&step.update - &step.d * 2.0).amax() < 1e-12);
            assert!((step.alignment - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_one_steps_along_unit_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = gmm_nd(3, &mut rng);
        let fwd = Forward::Linear(LinearOperator::identity(3));
        let meas = Measurement::new(rand_vec(3, &mut rng), 0.1).unwrap();
        let x_t = rand_vec(3, &mut rng);
        let den = model.eps_theta(&x_t, 0.5).unwrap();
        let spec = GuidanceSpec {
            xi_mode: XiMode::Fixed(1.0),
            ..GuidanceSpec::default()
        };
        let step = guidance_step(&spec, &model, &fwd, &meas, &x_t, 0.5, &den).unwrap();
        assert!((step.update.norm() - 1.0).abs() < 1e-14);
        assert_eq!(step.update, step.g);
    }

    #[test]
    fn orthogonal_surrogates_give_no_update() {
        let d = Vector::from_vec(vec![1.0, 0.0]);
        let g = Vector::from_vec(vec![0.0, 3.0]);
        assert_eq!(adaptive_xi(&d, &g), 0.0);
        assert_eq!(alignment(&d, &g), 0.0);
    }

    #[test]
    fn guidance_step_lowers_measurement_misfit() {
        // pins the sign: a small step along -update must shrink ||y - A x0_hat||
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = ScoreModel::Gaussian(
            GaussianPrior::new(rand_vec(5, &mut rng), Vector::from_fn(5, |i, _| 0.5 + 0.3 * i as f64)).unwrap(),
        );
        let op = LinearOperator::dense(rand_mat(3, 5, &mut rng)).unwrap();
        let fwd = Forward::Linear(op.clone());
        let meas = Measurement::new(rand_vec(3, &mut rng) * 3.0, 0.1).unwrap();
        let x_t = rand_vec(5, &mut rng);
        let abar = 0.5;
        let den = model.eps_theta(&x_t, abar).unwrap();
        let before = (&meas.y - op.apply(&den.x0_hat).unwrap()).norm();
        for g_kind in [Surrogate::Dps, Surrogate::Pgdm, Surrogate::Map] {
            let spec = GuidanceSpec {
                g_kind,
                ..GuidanceSpec::default()
            };
            let step = guidance_step(&spec, &model, &fwd, &meas, &x_t, abar, &den).unwrap();
            assert!(step.xi > 0.0);
            let moved = &x_t - &step.update * 1e-3;
            let x0 = model.eps_theta(&moved, abar).unwrap().x0_hat;
            let after = (&meas.y - op.apply(&x0).unwrap()).norm();
            assert!(after < before, "{g_kind}: {after} >= {before}");
        }
    }

    #[test]
    fn negative_alignment_is_clamped_unless_allowed() {
        // x0_hat = -x_t / sqrt(abar) has a negative Jacobian, so dps opposes d
        let model = ScoreModel::blackbox(2, |x, abar| x * (2.0 / (1.0 - abar).sqrt()));
        let fwd = Forward::Linear(LinearOperator::identity(2));
        let meas = Measurement::new(Vector::from_vec(vec![1.0, 1.0]), 0.1).unwrap();
        let x_t = Vector::from_vec(vec![0.2, -0.1]);
        let den = model.eps_theta(&x_t, 0.5).unwrap();
        let mut spec = GuidanceSpec {
            g_kind: Surrogate::Dps,
            ..GuidanceSpec::default()
        };
        let step = guidance_step(&spec, &model, &fwd, &meas, &x_t, 0.5, &den).unwrap();
        assert!(step.alignment < -0.99);
        assert_eq!(step.xi, 0.0);
        assert_eq!(step.update.amax(), 0.0);
        spec.allow_negative_xi = true;
        let step = guidance_step(&spec, &model, &fwd, &meas, &x_t, 0.5, &den).unwrap();
        assert!(step.xi < 0.0);
        assert!((&step.update - &step.d * 2.0).amax() < 1e-6);
    }

    #[test]
    fn averaged_mode_uses_midpoint_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = gmm_nd(3, &mut rng);
        let fwd = Forward::Linear(LinearOperator::dense(rand_mat(2, 3, &mut rng)).unwrap());
        let meas = Measurement::new(rand_vec(2, &mut rng), 0.1).unwrap();
        let x_t = rand_vec(3, &mut rng);
        let den = model.eps_theta(&x_t, 0.5).unwrap();
        let spec = GuidanceSpec {
            g_kind: Surrogate::Dps,
            xi_mode: XiMode::Averaged,
            ..GuidanceSpec::default()
        };
        let step = guidance_step(&spec, &model, &fwd, &meas, &x_t, 0.5, &den).unwrap();
        let avg = (&step.g + &step.d) * 0.5;
        let xi = adaptive_xi(&step.d, &avg).max(0.0);
        assert!((step.update - avg * xi).amax() < 1e-14);
    }

    #[test]
    fn pgdm_rejects_nonlinear_forward() {
        let model = ScoreModel::Gaussian(GaussianPrior::standard(2));
        let fwd = Forward::Nonlinear {
            op: NonlinearOperator::Tanh { dim: 2, a: 0.5, b: 1.0 },
            gn: GnConfig::default(),
        };
        let meas = Measurement::new(Vector::zeros(2), 0.1).unwrap();
        assert!(matches!(
            surrogate_pgdm(&model, &fwd, &meas, &Vector::zeros(2), 0.5),
            Err(Error::Config(_))
        ));
        assert!(surrogate_dps(&model, &fwd, &meas, &Vector::from_vec(vec![0.3, 0.1]), 0.5).is_ok());
    }
}
