//! Posterior sampling on a linear-Gaussian problem, compared with the exact
//! conjugate posterior. Prints the mean and covariance errors for several
//! guidance variants.

use adaps::guidance::{Forward, GuidanceSpec, Surrogate, XiMode};
use adaps::operators::{synthesize, LinearOperator};
use adaps::oracle::gaussian_posterior;
use adaps::priors::{GaussianPrior, ScoreModel};
use adaps::sampler::{sample_chains, Conditioning, SamplerConfig};
use adaps::schedule::Schedule;
use adaps::Vector;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> adaps::Result<()> {
    let (n, m, sigma, chains) = (16, 8, 0.1, 2000);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    let a = DMatrix::from_fn(m, n, |_, _| z() / (n as f64).sqrt());
    let mu0 = Vector::zeros(n);
    let var0 = Vector::from_element(n, 1.0);
    let model = ScoreModel::Gaussian(GaussianPrior::new(mu0.clone(), var0.clone())?);
    let truth = Vector::from_fn(n, |_, _| z());
    let op = LinearOperator::dense(a.clone())?;
    let meas = synthesize(&op, &truth, sigma, 12)?;
    let post = gaussian_posterior(&mu0, &var0, &a, &meas.y, sigma)?;
    let fwd = Forward::Linear(op);
    let cond = Conditioning {
        forward: &fwd,
        measurement: &meas,
    };

    let variants = [
        ("adaptive pgdm/map", GuidanceSpec::default()),
        (
            "fixed(1) pgdm/map",
            GuidanceSpec {
                xi_mode: XiMode::Fixed(1.0),
                ..GuidanceSpec::default()
            },
        ),
        (
            "fixed(1) map/map, raw g",
            GuidanceSpec {
                g_kind: Surrogate::Map,
                xi_mode: XiMode::Fixed(1.0),
                normalize_g: false,
                ..GuidanceSpec::default()
            },
        ),
    ];
    for (name, spec) in variants {
        let cfg = SamplerConfig {
            guidance: Some(spec),
            seed: 100,
            ..SamplerConfig::default()
        };
        let xs: Vec<Vector> = sample_chains(&cfg, &Schedule::default(), &model, Some(cond), chains, 0)?
            .into_iter()
            .map(|(x, _)| x)
            .collect();
        let k = chains as f64;
        let mean = xs.iter().fold(Vector::zeros(n), |acc, x| acc + x) / k;
        let cov = xs.iter().fold(DMatrix::zeros(n, n), |acc, x| {
            acc + (x - &mean) * (x - &mean).transpose()
        }) / (k - 1.0);
        let max_z = (0..n)
            .map(|i| (mean[i] - post.mean[i]).abs() / (post.cov[(i, i)] / k).sqrt())
            .fold(0.0, f64::max);
        let frob = (&cov - &post.cov).norm() / post.cov.norm();
        println!("{name:<26} max mean error {max_z:>6.2} SE   covariance rel. error {frob:.3}");
    }
    Ok(())
}
