//! Unconditional DDIM sampling from a two-dimensional Gaussian mixture prior
//! at several step counts and stochasticity levels.

use adaps::priors::{GmmPrior, ScoreModel};
use adaps::sampler::{sample_chains, SamplerConfig};
use adaps::schedule::Schedule;
use adaps::Vector;

fn main() -> adaps::Result<()> {
    let model = ScoreModel::Gmm(GmmPrior::new(
        vec![0.3, 0.7],
        vec![Vector::from_vec(vec![-1.0, 0.5]), Vector::from_vec(vec![1.0, -0.5])],
        vec![0.1, 0.2],
    )?);
    // Prior mean (0.4, -0.2); second moment of the first coordinate 1.17.
    for (steps, eta) in [(25, 0.0), (100, 0.0), (100, 1.0), (1000, 1.0)] {
        let cfg = SamplerConfig {
            steps,
            eta,
            seed: 3,
            guidance: None,
            ..SamplerConfig::default()
        };
        let xs = sample_chains(&cfg, &Schedule::default(), &model, None, 2000, 0)?;
        let k = xs.len() as f64;
        let mean = xs.iter().fold(Vector::zeros(2), |acc, (x, _)| acc + x) / k;
        let m2 = xs.iter().map(|(x, _)| x[0] * x[0]).sum::<f64>() / k;
        let right = xs.iter().filter(|(x, _)| x[0] > 0.0).count() as f64 / k;
        println!(
            "N={steps:<5} eta={eta}  mean=({:.3}, {:.3})  E[x1^2]={m2:.3}  P(x1>0)={right:.3}",
            mean[0], mean[1]
        );
    }
    Ok(())
}
