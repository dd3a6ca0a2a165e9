//! Unconditional DDIM and the guided sampler.
//!
//! One step in Markovian form is
//! `x_{t-1} = x_t / sqrt(alpha_t) - gamma_t eps + sigma_t z`, and guidance
//! subtracts `gamma_t * update` on top of it. Chains run over the re-spaced
//! timesteps from `T` down to the first index, whose jump targets `abar_0 = 1`
//! and therefore returns a clean denoised estimate.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::guidance::{guidance_step, Forward, GuidanceSpec, GuidanceStep};
use crate::operators::Measurement;
use crate::priors::{DenoiseOutput, ScoreModel};
use crate::schedule::{respace, Respacing, Schedule, StepCoeffs};
use crate::Vector;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub steps: usize,
    pub eta: f64,
    pub guidance: Option<GuidanceSpec>,
    pub seed: u64,
    /// Keep `x_t` and `x0_hat` for every step in the trajectory.
    pub record_trajectory: bool,
    /// Clip `x0_hat` to `[-c, c]`; off for analytic priors.
    pub clip_denoised: Option<f64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            eta: 1.0,
            guidance: Some(GuidanceSpec::default()),
            seed: 0,
            record_trajectory: false,
            clip_denoised: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("sampler needs at least one step".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Config(format!("eta {} outside [0, 1]", self.eta)));
        }
        if let Some(g) = &self.guidance {
            g.validate()?;
        }
        Ok(())
    }
}

/// Diagnostics for one sampler step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: usize,
    pub xi: f64,
    pub d_norm: f64,
    pub alignment: f64,
    pub x_t: Option<Vector>,
    pub x0_hat: Option<Vector>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn mean_xi(&self) -> f64 {
        mean(self.records.iter().map(|r| r.xi))
    }

    pub fn mean_alignment(&self) -> f64 {
        mean(self.records.iter().map(|r| r.alignment))
    }

    /// CSV with columns `step,t,xi,d_norm,alignment`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,t,xi,d_norm,alignment\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e}\n",
                r.step, r.t, r.xi, r.d_norm, r.alignment
            ));
        }
        out
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Markovian DDIM step `x_t / sqrt(alpha) - gamma eps + sigma noise`.
pub fn ddim_step(x_t: &Vector, coeffs: &StepCoeffs, den: &DenoiseOutput, noise: &Vector) -> Vector {
    x_t / coeffs.alpha.sqrt() - &den.eps * coeffs.gamma + noise * coeffs.sigma
}

/// The same step written through the denoised estimate:
/// `sqrt(abar_prev) x0_hat + sqrt(1 - abar_prev - sigma^2) eps + sigma noise`.
pub fn ddim_step_x0_form(coeffs: &StepCoeffs, den: &DenoiseOutput, noise: &Vector) -> Vector {
    let rest = (1.0 - coeffs.abar_prev - coeffs.sigma * coeffs.sigma).max(0.0);
    &den.x0_hat * coeffs.abar_prev.sqrt() + &den.eps * rest.sqrt() + noise * coeffs.sigma
}

/// Guided step: the DDIM step minus `gamma_t` times the guidance update.
pub fn adaps_step(
    x_t: &Vector,
    coeffs: &StepCoeffs,
    den: &DenoiseOutput,
    gstep: &GuidanceStep,
    noise: &Vector,
) -> Vector {
    ddim_step(x_t, coeffs, den, noise) - &gstep.update * coeffs.gamma
}

/// Forward model and measurement for conditional sampling.
#[derive(Debug, Clone, Copy)]
pub struct Conditioning<'a> {
    pub forward: &'a Forward,
    pub measurement: &'a Measurement,
}

fn draw(n: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn clip(den: DenoiseOutput, x_t: &Vector, abar: f64, c: f64) -> DenoiseOutput {
    let x0_hat = den.x0_hat.map(|v| v.clamp(-c, c));
    let eps = (x_t - &x0_hat * abar.sqrt()) / (1.0 - abar).sqrt();
    DenoiseOutput { eps, x0_hat }
}

/// Runs one chain. `schedule` is the full schedule; it is re-spaced to `config.steps`.
///
/// The chain's generator is seeded with `config.seed`. It draws `x_T` first,
/// then one fresh noise vector per step after the denoiser call, whatever the
/// value of `sigma_t`, so chains with equal seeds share noise across `eta`.
pub fn sample(
    config: &SamplerConfig,
    schedule: &Schedule,
    model: &ScoreModel,
    conditioning: Option<Conditioning<'_>>,
) -> Result<(Vector, Trajectory)> {
    config.validate()?;
    if config.guidance.is_some() && conditioning.is_none() {
        return Err(Error::Config(
            "guided sampling needs an operator and a measurement".into(),
        ));
    }
    if let Some(c) = &conditioning {
        if c.forward.in_dim() != model.dim() || c.forward.out_dim() != c.measurement.y.len() {
            return Err(Error::Dimension {
                context: "conditioning",
                expected: model.dim(),
                got: c.forward.in_dim(),
            });
        }
    }
    let sched = respace(schedule, config.steps, Respacing::Uniform)?;
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x = draw(n, &mut rng);
    let mut records = Vec::with_capacity(config.steps);
    for (step, pos) in (0..config.steps).rev().enumerate() {
        let wrap = |e: Error| Error::Step {
            step,
            source: Box::new(e),
        };
        let coeffs = sched.step_coeffs(pos, config.eta).map_err(wrap)?;
        let mut den = model.eps_theta(&x, coeffs.abar).map_err(wrap)?;
        if let Some(c) = config.clip_denoised {
            den = clip(den, &x, coeffs.abar, c);
        }
        let gstep = match (&config.guidance, &conditioning) {
            (Some(spec), Some(cond)) => {
                Some(guidance_step(spec, model, cond.forward, cond.measurement, &x, coeffs.abar, &den).map_err(wrap)?)
            }
            _ => None,
        };
        let noise = draw(n, &mut rng);
        let next = match &gstep {
            Some(g) => adaps_step(&x, &coeffs, &den, g, &noise),
            None => ddim_step(&x, &coeffs, &den, &noise),
        };
        if !next.iter().all(|v| v.is_finite()) {
            return Err(wrap(Error::NonFinite {
                iteration: step,
                message: "sampler state".into(),
            }));
        }
        let (xi, d_norm, alignment) = gstep
            .as_ref()
            .map_or((0.0, 0.0, 0.0), |g| (g.xi, g.d.norm(), g.alignment));
        records.push(StepRecord {
            step,
            t: coeffs.t,
            xi,
            d_norm,
            alignment,
            x_t: config.record_trajectory.then(|| x.clone()),
            x0_hat: config.record_trajectory.then(|| den.x0_hat.clone()),
        });
        x = next;
    }
    Ok((x, Trajectory { records }))
}

/// Runs `chains` independent chains with seeds `config.seed + i`, using up to
/// `jobs` threads (0 = all cores). Output is ordered by chain index.
pub fn sample_chains(
    config: &SamplerConfig,
    schedule: &Schedule,
    model: &ScoreModel,
    conditioning: Option<Conditioning<'_>>,
    chains: usize,
    jobs: usize,
) -> Result<Vec<(Vector, Trajectory)>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..chains)
            .into_par_iter()
            .map(|i| {
                let cfg = SamplerConfig {
                    seed: config.seed.wrapping_add(i as u64),
                    ..config.clone()
                };
                sample(&cfg, schedule, model, conditioning)
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::XiMode;
    use crate::operators::LinearOperator;
    use crate::priors::{GaussianPrior, GmmPrior};
    use crate::schedule::coeffs_from_pair;

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vector {
        draw(n, rng)
    }

    #[test]
    fn zero_eps_is_pure_rescaling() {
        let c = coeffs_from_pair(5, 4, 0.5, 0.6, 0.0);
        let x = Vector::from_vec(vec![1.0, -2.0]);
        let den = DenoiseOutput {
            eps: Vector::zeros(2),
            x0_hat: &x / 0.5f64.sqrt(),
        };
        let out = ddim_step(&x, &c, &den, &Vector::zeros(2));
        assert!((out - &x / c.alpha.sqrt()).amax() < 1e-15);
    }

    #[test]
    fn deterministic_step_reproduces_clean_point() {
        let (abar, abar_prev) = (0.3f64, 0.5f64);
        let c = coeffs_from_pair(5, 4, abar, abar_prev, 0.0);
        let x0 = Vector::from_vec(vec![0.7, -0.2, 1.5]);
        let eps = Vector::from_vec(vec![0.1, 0.9, -0.4]);
        let x_t = &x0 * abar.sqrt() + &eps * (1.0 - abar).sqrt();
        let den = DenoiseOutput {
            eps: eps.clone(),
            x0_hat: x0.clone(),
        };
        let out = ddim_step(&x_t, &c, &den, &Vector::zeros(3));
        let expect = &x0 * abar_prev.sqrt() + &eps * (1.0 - abar_prev).sqrt();
        assert!((out - expect).amax() < 1e-12);
    }

    #[test]
    fn markov_and_x0_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sched = respace(&Schedule::default(), 50, Respacing::Uniform).unwrap();
        for eta in [0.0, 0.5, 1.0] {
            for pos in [0, 1, 20, 49] {
                let c = sched.step_coeffs(pos, eta).unwrap();
                let x_t = rand_vec(4, &mut rng);
                let eps = rand_vec(4, &mut rng);
                let x0_hat = (&x_t - &eps * c.sqrt_one_minus_abar) / c.sqrt_abar;
                let den = DenoiseOutput { eps, x0_hat };
                let z = rand_vec(4, &mut rng);
                let a = ddim_step(&x_t, &c, &den, &z);
                let b = ddim_step_x0_form(&c, &den, &z);
                assert!((&a - &b).norm() <= 1e-10 * b.norm().max(1.0));
            }
        }
    }

    #[test]
    fn zero_update_matches_ddim() {
        let c = coeffs_from_pair(3, 2, 0.4, 0.5, 0.7);
        let x = Vector::from_vec(vec![0.3, 0.4]);
        let den = DenoiseOutput {
            eps: Vector::from_vec(vec![0.5, -0.5]),
            x0_hat: Vector::zeros(2),
        };
        let g = GuidanceStep {
            g: Vector::zeros(2),
            d: Vector::zeros(2),
            xi: 0.0,
            update: Vector::zeros(2),
            alignment: 0.0,
        };
        let z = Vector::from_vec(vec![1.0, 1.0]);
        assert_eq!(adaps_step(&x, &c, &den, &g, &z), ddim_step(&x, &c, &den, &z));
        let mut nonzero = g.clone();
        nonzero.update = Vector::from_vec(vec![3.0, 3.0]);
        let flat = StepCoeffs { gamma: 0.0, ..c };
        assert_eq!(
            adaps_step(&x, &flat, &den, &nonzero, &z),
            ddim_step(&x, &flat, &den, &z)
        );
    }

    #[test]
    fn single_step_is_pure_denoise() {
        let model = ScoreModel::Gmm(
            GmmPrior::new(
                vec![0.5, 0.5],
                vec![Vector::from_element(1, -1.0), Vector::from_element(1, 1.0)],
                vec![0.1, 0.1],
            )
            .unwrap(),
        );
        let sched = Schedule::default();
        let cfg = SamplerConfig {
            steps: 1,
            guidance: None,
            seed: 9,
            record_trajectory: true,
            ..SamplerConfig::default()
        };
        let (x, traj) = sample(&cfg, &sched, &model, None).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.records[0].t, 1000);
        let x0_hat = traj.records[0].x0_hat.as_ref().unwrap();
        assert!((x - x0_hat).amax() < 1e-9);
    }

    #[test]
    fn determinism_and_guidance_off_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model =
            ScoreModel::Gaussian(GaussianPrior::new(rand_vec(3, &mut rng), Vector::from_element(3, 0.5)).unwrap());
        let fwd = Forward::Linear(LinearOperator::identity(3));
        let meas = Measurement::new(rand_vec(3, &mut rng), 0.1).unwrap();
        let cond = Conditioning {
            forward: &fwd,
            measurement: &meas,
        };
        let sched = Schedule::default();
        let cfg = SamplerConfig {
            steps: 20,
            seed: 4,
            ..SamplerConfig::default()
        };
        let a = sample(&cfg, &sched, &model, Some(cond)).unwrap();
        let b = sample(&cfg, &sched, &model, Some(cond)).unwrap();
        assert_eq!(a, b);

        let off = SamplerConfig {
            guidance: None,
            ..cfg.clone()
        };
        let zero = SamplerConfig {
            guidance: Some(GuidanceSpec {
                xi_mode: XiMode::Fixed(0.0),
                ..GuidanceSpec::default()
            }),
            ..cfg
        };
        let (x_off, _) = sample(&off, &sched, &model, None).unwrap();
        let (x_zero, _) = sample(&zero, &sched, &model, Some(cond)).unwrap();
        assert_eq!(x_off, x_zero);
    }

    #[test]
    fn guided_sampling_requires_conditioning() {
        let model = ScoreModel::Gaussian(GaussianPrior::standard(2));
        assert!(sample(&SamplerConfig::default(), &Schedule::default(), &model, None).is_err());
        let bad = SamplerConfig {
            steps: 0,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn step_errors_carry_index() {
        let model = ScoreModel::Gaussian(GaussianPrior::standard(2));
        let fwd = Forward::Linear(
            LinearOperator::dense(nalgebra::DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0])).unwrap(),
        );
        // sigma_y = 0 makes A A^T singular on the spectral backend
        let meas = Measurement::new(Vector::from_vec(vec![1.0, 2.0, 3.0]), 0.0).unwrap();
        let cfg = SamplerConfig {
            steps: 5,
            ..SamplerConfig::default()
        };
        let err = sample(
            &cfg,
            &Schedule::default(),
            &model,
            Some(Conditioning {
                forward: &fwd,
                measurement: &meas,
            }),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Step { step: 0, .. }), "{err}");
    }

    #[test]
    fn noiseless_adaptive_terminal_step_reflects_through_measurement() {
        // with sigma_y = 0 the last step has gamma * d = x0_hat - y, and the
        // adaptive rule applies twice that
        let model = ScoreModel::Gaussian(GaussianPrior::new(Vector::zeros(4), Vector::from_element(4, 0.25)).unwrap());
        let fwd = Forward::Linear(LinearOperator::identity(4));
        let meas = Measurement::new(Vector::from_vec(vec![0.5, -0.3, 0.1, 0.9]), 0.0).unwrap();
        let cfg = SamplerConfig {
            steps: 20,
            record_trajectory: true,
            ..SamplerConfig::default()
        };
        let (x, traj) = sample(
            &cfg,
            &Schedule::default(),
            &model,
            Some(Conditioning {
                forward: &fwd,
                measurement: &meas,
            }),
        )
        .unwrap();
        let last = traj.records.last().unwrap();
        assert!((last.xi - 2.0 * last.d_norm).abs() < 1e-9 * last.d_norm.max(1.0));
        let x0_hat = last.x0_hat.as_ref().unwrap();
        assert!((&x - (&meas.y * 2.0 - x0_hat)).amax() < 1e-10);
    }

    #[test]
    fn chains_are_ordered_and_reproducible() {
        let model = ScoreModel::Gaussian(GaussianPrior::standard(2));
        let cfg = SamplerConfig {
            steps: 10,
            guidance: None,
            seed: 100,
            ..SamplerConfig::default()
        };
        let sched = Schedule::default();
        let par = sample_chains(&cfg, &sched, &model, None, 8, 4).unwrap();
        for (i, out) in par.iter().enumerate() {
            let single = sample(
                &SamplerConfig {
                    seed: 100 + i as u64,
                    ..cfg.clone()
                },
                &sched,
                &model,
                None,
            )
            .unwrap();
            assert_eq!(*out, single);
        }
    }
}
