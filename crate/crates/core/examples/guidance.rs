//! One guidance evaluation: the DPS, PGDM and MAP surrogates at a single
//! diffusion state, and the adaptive step size that combines them.

use adaps::guidance::{adaptive_xi, alignment, surrogate, Forward, Surrogate};
use adaps::operators::{LinearOperator, Measurement};
use adaps::priors::{GaussianPrior, ScoreModel};
use adaps::Vector;
use nalgebra::DMatrix;

fn main() -> adaps::Result<()> {
    let model = ScoreModel::Gaussian(GaussianPrior::new(
        Vector::zeros(3),
        Vector::from_vec(vec![0.5, 1.0, 2.0]),
    )?);
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, 0.0, 1.0, -1.0]);
    let fwd = Forward::Linear(LinearOperator::dense(a)?);
    let meas = Measurement::new(Vector::from_vec(vec![0.8, -0.3]), 0.1)?;
    let x_t = Vector::from_vec(vec![0.2, -0.5, 1.1]);

    for abar in [0.1, 0.5, 0.9] {
        let den = model.eps_theta(&x_t, abar)?;
        let get = |s| surrogate(s, &model, &fwd, &meas, &x_t, abar, &den);
        let (dps, pgdm, map) = (get(Surrogate::Dps)?, get(Surrogate::Pgdm)?, get(Surrogate::Map)?);
        println!("abar = {abar}");
        for (name, g) in [("dps", &dps), ("pgdm", &pgdm)] {
            let unit = g / g.norm();
            println!(
                "  g = {name:<4}  |g| = {:>9.4}  align(map, g) = {:>7.4}  xi = {:>7.4}  |d - xi g| = {:.4}",
                g.norm(),
                alignment(&map, g),
                adaptive_xi(&map, &unit),
                (&map - &unit * adaptive_xi(&map, &unit)).norm()
            );
        }
    }
    Ok(())
}
