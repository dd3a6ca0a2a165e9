//! Analytic score models: the Tweedie denoiser of a Gaussian mixture and its
//! vector-Jacobian product.

use adaps::priors::{GmmPrior, ScoreModel};
use adaps::Vector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> adaps::Result<()> {
    let gmm = GmmPrior::new(
        vec![0.4, 0.6],
        vec![Vector::from_vec(vec![-0.8]), Vector::from_vec(vec![0.7])],
        vec![0.05, 0.08],
    )?;
    let model = ScoreModel::Gmm(gmm);

    println!("{:>6} {:>8} {:>10} {:>10}", "abar", "x_t", "x0_hat", "dx0/dx_t");
    for abar in [0.05, 0.5, 0.95] {
        for x in [-1.0, 0.0, 1.0] {
            let x_t = Vector::from_vec(vec![x]);
            let den = model.eps_theta(&x_t, abar)?;
            let jac = model.x0_vjp(&x_t, abar, &Vector::from_vec(vec![1.0]))?;
            println!("{abar:>6} {x:>8} {:>10.4} {:>10.4}", den.x0_hat[0], jac[0]);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws: Vec<f64> = (0..5)
        .map(|_| model.sample_prior(&mut rng).map(|v| v[0]))
        .collect::<adaps::Result<_>>()?;
    println!("prior draws: {draws:.3?}");
    Ok(())
}
