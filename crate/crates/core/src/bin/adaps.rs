use std::path::PathBuf;
use std::process::ExitCode;

use adaps::guidance::Forward;
use adaps::harness::checks::{run_check, CHECK_IDS};
use adaps::harness::{build_problem, run_ablation, run_experiment, AblationAxis, ExperimentConfig, Task};
use adaps::schedule::{make_linear_schedule, respace, Respacing};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaps", version, about = "Adaptive posterior diffusion sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// INI config file; without it the task defaults apply.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task used when no config file is given.
    #[arg(long, default_value = "gmm-1d")]
    task: Task,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for chains, 0 for all cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> adaps::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::for_task(self.task),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and print its metrics as JSON.
    Run(Common),
    /// Sweep one axis with paired seeds and print the table as CSV.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// steps, eta, sigma_y, xi_mode or gd_pairing.
        #[arg(long)]
        axis: AblationAxis,
        /// Comma-separated axis values.
        #[arg(long, default_value = "")]
        values: String,
    },
    /// Run the oracle and property suite.
    OracleCheck {
        /// Only these criteria (comma-separated), default all.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Print schedule and operator diagnostics.
    Info(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ADAPS_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> adaps::Result<bool> {
    match cmd {
        Command::Run(common) => {
            let out = run_experiment(&common.load()?)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&out.metrics).expect("metrics serialize")
            );
            eprintln!("wall time {:.2}s", out.timing.wall_seconds);
            Ok(true)
        }
        Command::Ablate { common, axis, values } => {
            let values: Vec<String> = values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(String::from)
                .collect();
            let table = run_ablation(&common.load()?, axis, &values)?;
            print!("{}", table.to_csv());
            Ok(true)
        }
        Command::OracleCheck { only, jobs } => {
            let ids: Vec<u8> = if only.is_empty() { CHECK_IDS.to_vec() } else { only };
            let mut all = true;
            for id in ids {
                match run_check(id, jobs) {
                    Ok(o) => {
                        all &= o.passed;
                        println!("{o}");
                    }
                    Err(e) => {
                        all = false;
                        println!("criterion {id}: ERROR {e}");
                    }
                }
            }
            Ok(all)
        }
        Command::Info(common) => {
            info(&common.load()?)?;
            Ok(true)
        }
    }
}

fn info(cfg: &ExperimentConfig) -> adaps::Result<()> {
    let s = &cfg.schedule;
    let full = make_linear_schedule(s.train_steps, s.beta_start, s.beta_end)?;
    let sched = respace(&full, s.steps, Respacing::Uniform)?;
    let ts = sched.respaced_timesteps();
    println!("task            {}", cfg.task);
    println!(
        "schedule        T={} beta=[{}, {}] alpha_bar(T)={:.3e}",
        s.train_steps,
        s.beta_start,
        s.beta_end,
        full.alpha_bar(s.train_steps)
    );
    println!(
        "sampling        N={} eta={} timesteps {}..{} (first {:?})",
        s.steps,
        s.eta,
        ts.first().copied().unwrap_or(0),
        ts.last().copied().unwrap_or(0),
        &ts[..ts.len().min(4)]
    );
    let p = build_problem(cfg)?;
    match &p.forward {
        Forward::Linear(op) => {
            println!("operator        {} backend {:?}", op.description(), op.backend());
        }
        Forward::Nonlinear { op, gn } => {
            println!("operator        {op:?} (Gauss-Newton K={})", gn.iterations);
        }
    }
    println!("dimensions      x: {}  y: {}", p.forward.in_dim(), p.forward.out_dim());
    println!(
        "sigma_y         {} (effective {})",
        cfg.sigma_y,
        cfg.effective_sigma_y()
    );
    match &cfg.guidance {
        Some(g) => println!("guidance        g={} d={} xi={}", g.g_kind, g.d_kind, g.xi_mode),
        None => println!("guidance        off"),
    }
    if let Some(o) = &p.oracle {
        let std: Vec<String> = o.std().iter().map(|v| format!("{v:.4}")).collect();
        println!("oracle          quadrature, posterior std [{}]", std.join(", "));
    }
    println!("chains          {} (jobs {})", cfg.chains, cfg.jobs);
    Ok(())
}
