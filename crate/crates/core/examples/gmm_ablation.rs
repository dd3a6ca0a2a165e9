//! The paired-seed ablations on the one-dimensional mixture task, scored by
//! the 1-Wasserstein distance to the quadrature posterior.

use adaps::harness::{run_ablation, AblationAxis, ExperimentConfig, Task};

fn main() -> adaps::Result<()> {
    let base = ExperimentConfig::for_task(Task::Gmm1d);
    let sweeps: [(AblationAxis, &[&str]); 4] = [
        (AblationAxis::XiMode, &["adaptive", "fixed(1)", "fixed(2)", "averaged"]),
        (AblationAxis::Steps, &["25", "50", "100", "200", "400"]),
        (AblationAxis::Eta, &["0", "0.5", "1"]),
        (
            AblationAxis::GdPairing,
            &["pgdm:map", "dps:map", "map:map", "pgdm:pgdm"],
        ),
    ];
    for (axis, values) in sweeps {
        let values: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        let table = run_ablation(&base, axis, &values)?;
        println!("{axis:?}");
        for (v, r) in values.iter().zip(&table.rows) {
            let w1 = r.w1.unwrap_or(f64::NAN) / r.posterior_std.unwrap_or(f64::NAN);
            println!("  {v:<10} W1/std {w1:.3}  mean xi {:.3}", r.mean_xi);
        }
    }
    Ok(())
}
