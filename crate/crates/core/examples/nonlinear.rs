//! The Gauss-Newton MAP step for nonlinear forward models, on its own and
//! inside the sampler on the tanh toy task.

use adaps::harness::{run_experiment, ExperimentConfig, Task};
use adaps::nonlinear::{nl_map_estimate_traced, GnConfig, NonlinearOperator};
use adaps::operators::LinearOperator;
use adaps::Vector;

fn main() -> adaps::Result<()> {
    let square = NonlinearOperator::Squared(LinearOperator::identity(1));
    let cfg = GnConfig {
        iterations: 12,
        ..GnConfig::default()
    };
    let trace = nl_map_estimate_traced(
        &square,
        &Vector::from_element(1, 4.0),
        0.1,
        &Vector::from_element(1, 1.9),
        1.0,
        &cfg,
    )?;
    println!("x^2 = 4 from 1.9: x* = {:.6}", trace.x[0]);
    println!("objective: {:.4?}", trace.objective);

    for iterations in [1, 5, 20] {
        let mut c = ExperimentConfig::for_task(Task::NonlinearToy);
        c.gn.iterations = iterations;
        let m = run_experiment(&c)?.metrics;
        println!(
            "tanh toy, K={iterations:<3} W1/std {:.3}  mean xi {:.3}",
            m.w1.unwrap_or(f64::NAN) / m.posterior_std.unwrap_or(f64::NAN),
            m.mean_xi
        );
    }
    Ok(())
}
