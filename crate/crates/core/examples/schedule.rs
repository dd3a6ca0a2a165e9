//! Noise schedule, uniform respacing and the per-step DDIM coefficients.

use adaps::schedule::{respace, Respacing, Schedule};

fn main() -> adaps::Result<()> {
    let full = Schedule::default();
    println!(
        "T = {}, alpha_bar(1) = {:.6}, alpha_bar(T) = {:.3e}",
        full.num_train_steps(),
        full.alpha_bar(1),
        full.alpha_bar(1000)
    );

    let sched = respace(&full, 10, Respacing::Uniform)?;
    println!("respaced timesteps: {:?}", sched.respaced_timesteps());
    println!(
        "{:>5} {:>5} {:>10} {:>10} {:>10} {:>10}",
        "t", "prev", "abar", "alpha", "gamma", "sigma(1)"
    );
    for pos in (0..sched.num_sampling_steps()).rev() {
        let c = sched.step_coeffs(pos, 1.0)?;
        println!(
            "{:>5} {:>5} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            c.t, c.t_prev, c.abar, c.alpha, c.gamma, c.sigma
        );
    }
    Ok(())
}
