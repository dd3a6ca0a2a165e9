use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{ExperimentConfig, PriorKind, SrKernel, Task};
use super::io::{read_tensor, write_pgm, write_tensor, Tensor};
use super::metrics::{psnr_capped, MetricsRecord, Timing};
use crate::error::{Error, Result};
use crate::guidance::{Forward, GuidanceSpec, Surrogate};
use crate::nonlinear::NonlinearOperator;
use crate::operators::kernels::{linear_motion_kernel, read_kernel, read_matrix};
use crate::operators::{make_operator, synthesize, LinearOperator, Measurement, OperatorSpec, Shape};
use crate::oracle::{wasserstein1_1d, wasserstein1_discrete, QuadraturePosterior};
use crate::priors::{GaussianPrior, GmmPrior, ScoreModel};
use crate::sampler::{sample_chains, Conditioning, SamplerConfig, Trajectory};
use crate::schedule::make_linear_schedule;
use crate::Vector;

/// A fully instantiated inverse problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: ScoreModel,
    pub forward: Forward,
    pub measurement: Measurement,
    pub truth: Vector,
    /// `(height, width)` for image tasks.
    pub image: Option<(usize, usize)>,
    /// Quadrature posterior when the task has one.
    pub oracle: Option<QuadraturePosterior>,
}

/// Six synthetic `size x size` patterns with values in `[-1, 1]`: disc, square,
/// ring, stripes, diagonal ramp and cross.
pub fn template_images(size: usize) -> Vec<Vector> {
    let s = size as f64;
    let c = (s - 1.0) / 2.0;
    let shape = |f: &dyn Fn(f64, f64) -> bool| -> Vector {
        Vector::from_fn(size * size, |idx, _| {
            let (r, q) = ((idx / size) as f64, (idx % size) as f64);
            if f(r - c, q - c) {
                1.0
            } else {
                -1.0
            }
        })
    };
    let mut out = vec![
        shape(&|r, q| r * r + q * q <= (0.3 * s).powi(2)),
        shape(&|r, q| r.abs() <= 0.25 * s && q.abs() <= 0.25 * s),
        shape(&|r, q| {
            let d = (r * r + q * q).sqrt();
            d >= 0.2 * s && d <= 0.35 * s
        }),
        shape(&|r, _| ((r + c) / (s / 8.0)).floor() as i64 % 2 == 0),
    ];
    out.push(Vector::from_fn(size * size, |idx, _| {
        let (r, q) = ((idx / size) as f64, (idx % size) as f64);
        (r + q) / (2.0 * (s - 1.0).max(1.0)) * 2.0 - 1.0
    }));
    out.push(shape(&|r, q| r.abs() <= 0.08 * s || q.abs() <= 0.08 * s));
    out
}

fn broadcast(v: &[f64], n: usize, what: &str) -> Result<Vector> {
    match v.len() {
        1 => Ok(Vector::from_element(n, v[0])),
        k if k == n => Ok(Vector::from_column_slice(v)),
        k => Err(Error::Config(format!("{what} has {k} entries, expected 1 or {n}"))),
    }
}

fn build_model(cfg: &ExperimentConfig) -> Result<(ScoreModel, Option<(usize, usize)>)> {
    let p = &cfg.prior;
    let mut image = cfg
        .task
        .is_image()
        .then_some((cfg.operator.image_size, cfg.operator.image_size));
    let model = match p.kind {
        PriorKind::Gmm => {
            let means = p.means.iter().map(|m| Vector::from_column_slice(m)).collect();
            ScoreModel::Gmm(GmmPrior::new(p.weights.clone(), means, p.vars.clone())?)
        }
        PriorKind::Gaussian => {
            let n = match image {
                Some((h, w)) => h * w,
                None => p.mean.len().max(p.var.len()),
            };
            ScoreModel::Gaussian(GaussianPrior::new(
                broadcast(&p.mean, n, "prior mean")?,
                broadcast(&p.var, n, "prior var")?,
            )?)
        }
        PriorKind::Templates => {
            let templates = match &p.template_file {
                Some(path) => {
                    let t = read_tensor(path)?;
                    let [k, h, w] = t.dims[..] else {
                        return Err(Error::Config(format!(
                            "template tensor must be K x H x W, got {:?}",
                            t.dims
                        )));
                    };
                    image = Some((h, w));
                    (0..k)
                        .map(|i| Vector::from_column_slice(&t.data[i * h * w..(i + 1) * h * w]))
                        .collect()
                }
                None => {
                    let (h, _) = image.ok_or_else(|| Error::Config("template priors need an image task".into()))?;
                    template_images(h)
                }
            };
            let k = templates.len();
            ScoreModel::Gmm(GmmPrior::new(
                vec![1.0 / k as f64; k],
                templates,
                vec![p.template_var; k],
            )?)
        }
    };
    Ok((model, image))
}

fn build_linear(cfg: &ExperimentConfig, n: usize, image: Option<(usize, usize)>) -> Result<LinearOperator> {
    let o = &cfg.operator;
    let shape = match image {
        Some((h, w)) => Shape::new(1, h, w),
        None => Shape::flat(n),
    };
    let matrix = match (&o.matrix_file, &o.matrix) {
        (Some(path), _) => Some(read_matrix(path)?),
        (None, m) => m.clone(),
    };
    let spec = match cfg.task {
        Task::IdentityDenoise => OperatorSpec::Identity,
        Task::GaussianDeblur => OperatorSpec::GaussianBlur {
            size: o.kernel_size,
            std: o.kernel_std,
        },
        Task::MotionDeblur => OperatorSpec::MotionBlur(match &o.kernel_file {
            Some(path) => read_kernel(path)?,
            None => linear_motion_kernel(o.kernel_size, o.motion_length, o.motion_angle.to_radians())?,
        }),
        Task::Sr => match o.sr_kernel {
            SrKernel::Bicubic => OperatorSpec::SrBicubic { factor: o.factor },
            SrKernel::Box => OperatorSpec::SrPool { factor: o.factor },
        },
        Task::Gmm1d | Task::Gmm2d | Task::NonlinearToy => match matrix {
            Some(m) => OperatorSpec::Dense(m),
            None => OperatorSpec::Identity,
        },
    };
    let op = make_operator(&spec, shape)?;
    match o.backend {
        Some(b) => op.with_backend(b),
        None => Ok(op),
    }
}

fn tanh_forward(a: f64, b: f64) -> impl Fn(&[f64]) -> Vec<f64> {
    move |x| x.iter().map(|v| v + a * (b * v).tanh()).collect()
}

/// Builds prior, operator, ground truth, measurement and oracle from `cfg`.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    cfg.validate()?;
    let (model, image) = build_model(cfg)?;
    let n = model.dim();
    let truth = model.sample_prior(&mut ChaCha8Rng::seed_from_u64(cfg.truth_seed))?;
    let sigma = cfg.effective_sigma_y();
    let (forward, measurement) = if cfg.task == Task::NonlinearToy {
        let (a, b) = (cfg.operator.tanh_a, cfg.operator.tanh_b);
        let op = NonlinearOperator::Tanh { dim: n, a, b };
        let mut y = op.forward(&truth)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.noise_seed);
        for v in y.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
        (Forward::Nonlinear { op, gn: cfg.gn }, Measurement::new(y, sigma)?)
    } else {
        let op = build_linear(cfg, n, image)?;
        let meas = synthesize(&op, &truth, sigma, cfg.noise_seed)?;
        (Forward::Linear(op), meas)
    };
    let oracle = match (&model, cfg.task) {
        (ScoreModel::Gmm(g), Task::Gmm1d | Task::Gmm2d) if n <= 2 && sigma > 0.0 => {
            let Forward::Linear(op) = &forward else { unreachable!() };
            Some(QuadraturePosterior::gmm(g, &op.to_dense()?, &measurement.y, sigma)?)
        }
        (ScoreModel::Gmm(g), Task::NonlinearToy) if n <= 2 && sigma > 0.0 => {
            let (a, b) = (cfg.operator.tanh_a, cfg.operator.tanh_b);
            Some(QuadraturePosterior::gmm_nonlinear(
                g,
                tanh_forward(a, b),
                &measurement.y,
                sigma,
            )?)
        }
        _ => None,
    };
    Ok(Problem {
        model,
        forward,
        measurement,
        truth,
        image,
        oracle,
    })
}

/// Samples, per-chain diagnostics and summary metrics of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub timing: Timing,
    pub samples: Vec<Vector>,
    pub trajectories: Vec<Trajectory>,
    pub problem: Problem,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// W1 to the oracle: exact in 1D, the mean of the per-axis marginal distances in 2D.
pub fn oracle_w1(samples: &[Vector], oracle: &QuadraturePosterior) -> Result<f64> {
    if oracle.dim() == 1 {
        let xs: Vec<f64> = samples.iter().map(|x| x[0]).collect();
        return wasserstein1_1d(&xs, oracle);
    }
    let mut total = 0.0;
    for axis in 0..oracle.dim() {
        let xs: Vec<f64> = samples.iter().map(|x| x[axis]).collect();
        let (nodes, w) = oracle.marginal(axis);
        total += wasserstein1_discrete(&xs, &vec![1.0; xs.len()], &nodes, &w);
    }
    Ok(total / oracle.dim() as f64)
}

/// Runs all chains of `cfg` and, when an output directory is set, writes
/// `metrics.json`, `timing.json`, `config.ini`, `samples/` and `traj/`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let problem = build_problem(cfg)?;
    let s = &cfg.schedule;
    let schedule = make_linear_schedule(s.train_steps, s.beta_start, s.beta_end)?;
    let sampler = SamplerConfig {
        steps: s.steps,
        eta: s.eta,
        guidance: cfg.guidance,
        seed: cfg.seed,
        record_trajectory: false,
        clip_denoised: s.clip_denoised,
    };
    let cond = cfg.guidance.map(|_| Conditioning {
        forward: &problem.forward,
        measurement: &problem.measurement,
    });
    info!("{}: {} chains x {} steps", cfg.task, cfg.chains, s.steps);
    let (samples, trajectories): (Vec<Vector>, Vec<Trajectory>) =
        sample_chains(&sampler, &schedule, &problem.model, cond, cfg.chains, cfg.jobs)?
            .into_iter()
            .unzip();
    let n = problem.truth.len() as f64;
    let mse = mean(samples.iter().map(|x| (x - &problem.truth).norm_squared() / n));
    let psnr = match problem.image {
        Some(_) => {
            let range = problem.truth.max() - problem.truth.min();
            let peak = if range > 0.0 { range } else { 2.0 };
            let vals = samples
                .iter()
                .map(|x| psnr_capped(x, &problem.truth, peak))
                .collect::<Result<Vec<_>>>()?;
            Some(mean(vals.into_iter()))
        }
        None => None,
    };
    let (w1, posterior_std) = match &problem.oracle {
        Some(o) => (Some(oracle_w1(&samples, o)?), Some(mean(o.std().iter().copied()))),
        None => (None, None),
    };
    let g = cfg.guidance;
    let metrics = MetricsRecord {
        task: cfg.task.to_string(),
        seed: cfg.seed,
        chains: cfg.chains,
        steps: s.steps,
        eta: s.eta,
        sigma_y: cfg.sigma_y,
        xi_mode: g.map_or("off".into(), |g| g.xi_mode.to_string()),
        g: g.map_or("off".into(), |g| g.g_kind.to_string()),
        d: g.map_or("off".into(), |g| g.d_kind.to_string()),
        psnr,
        mse,
        w1,
        posterior_std,
        mean_xi: mean(trajectories.iter().map(Trajectory::mean_xi)),
        mean_alignment: mean(trajectories.iter().map(Trajectory::mean_alignment)),
    };
    let timing = Timing {
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    let out = RunOutput {
        metrics,
        timing,
        samples,
        trajectories,
        problem,
    };
    if let Some(dir) = &cfg.output.dir {
        write_artifacts(cfg, &out, dir)?;
    }
    info!("{}: done in {:.2}s", cfg.task, out.timing.wall_seconds);
    Ok(out)
}

fn write_artifacts(cfg: &ExperimentConfig, out: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(&out.metrics)? + "\n",
    )?;
    fs::write(
        dir.join("timing.json"),
        serde_json::to_string_pretty(&out.timing)? + "\n",
    )?;
    fs::write(dir.join("config.ini"), cfg.to_ini_string())?;
    if cfg.output.save_samples {
        let sdir = dir.join("samples");
        fs::create_dir_all(&sdir)?;
        let n = out.problem.truth.len();
        let mut dims = vec![out.samples.len()];
        match out.problem.image {
            Some((h, w)) => dims.extend([h, w]),
            None => dims.push(n),
        }
        let data: Vec<f64> = out.samples.iter().flat_map(|x| x.iter().copied()).collect();
        write_tensor(&sdir.join("samples.tensor"), &Tensor::new(dims, data)?)?;
        let truth_dims = match out.problem.image {
            Some((h, w)) => vec![h, w],
            None => vec![n],
        };
        write_tensor(
            &sdir.join("truth.tensor"),
            &Tensor::new(truth_dims, out.problem.truth.as_slice().to_vec())?,
        )?;
        let y = &out.problem.measurement.y;
        write_tensor(
            &sdir.join("measurement.tensor"),
            &Tensor::new(vec![y.len()], y.as_slice().to_vec())?,
        )?;
        if let Some((h, w)) = out.problem.image {
            write_pgm(&sdir.join("truth.pgm"), h, w, out.problem.truth.as_slice(), -1.0, 1.0)?;
            for (i, x) in out.samples.iter().take(4).enumerate() {
                write_pgm(&sdir.join(format!("chain_{i:04}.pgm")), h, w, x.as_slice(), -1.0, 1.0)?;
            }
            if let Forward::Linear(op) = &out.problem.forward {
                if let Some(os) = op.output_shape() {
                    write_pgm(
                        &sdir.join("measurement.pgm"),
                        os.height,
                        os.width,
                        y.as_slice(),
                        -1.0,
                        1.0,
                    )?;
                }
            }
        }
    }
    if cfg.output.trajectory_chains > 0 {
        let tdir = dir.join("traj");
        fs::create_dir_all(&tdir)?;
        for (i, t) in out.trajectories.iter().take(cfg.output.trajectory_chains).enumerate() {
            fs::write(tdir.join(format!("chain_{i:04}.csv")), t.to_csv())?;
        }
    }
    Ok(())
}

/// Config dimension swept by [`run_ablation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    Steps,
    Eta,
    SigmaY,
    XiMode,
    /// Values are `g:d` pairs such as `pgdm:map`.
    GdPairing,
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "steps" => Ok(Self::Steps),
            "eta" => Ok(Self::Eta),
            "sigma_y" => Ok(Self::SigmaY),
            "xi_mode" | "xi" => Ok(Self::XiMode),
            "gd_pairing" | "pairing" => Ok(Self::GdPairing),
            _ => Err(Error::Config(format!("unknown ablation axis `{s}`"))),
        }
    }
}

fn parse_value<T: FromStr>(axis: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad {axis} value `{v}`")))
}

/// `cfg` with the swept setting replaced by `value`.
pub fn apply_axis(cfg: &ExperimentConfig, axis: AblationAxis, value: &str) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    match axis {
        AblationAxis::Steps => c.schedule.steps = parse_value("steps", value)?,
        AblationAxis::Eta => c.schedule.eta = parse_value("eta", value)?,
        AblationAxis::SigmaY => c.sigma_y = parse_value("sigma_y", value)?,
        AblationAxis::XiMode => {
            let mut g = c.guidance.unwrap_or_default();
            g.xi_mode = value.parse()?;
            c.guidance = Some(g);
        }
        AblationAxis::GdPairing => {
            let (g_kind, d_kind) = value
                .split_once([':', '/'])
                .ok_or_else(|| Error::Config(format!("pairing `{value}` is not of the form g:d")))?;
            let mut g = c.guidance.unwrap_or_default();
            g.g_kind = Surrogate::from_str(g_kind)?;
            g.d_kind = Surrogate::from_str(d_kind)?;
            c.guidance = Some(g);
        }
    }
    c.validate()?;
    Ok(c)
}

pub const CSV_HEADER: &str =
    "task,seed,chains,steps,eta,sigma_y,xi_mode,g,d,psnr,mse,w1,posterior_std,mean_xi,mean_alignment";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn csv_row(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.task,
        r.seed,
        r.chains,
        r.steps,
        r.eta,
        r.sigma_y,
        r.xi_mode,
        r.g,
        r.d,
        opt(r.psnr),
        r.mse,
        opt(r.w1),
        opt(r.posterior_std),
        r.mean_xi,
        r.mean_alignment
    )
}

/// One row per value of `axis`, all with the seeds of `cfg`, so chains share
/// their initial states and per-step noise across rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub values: Vec<String>,
    pub rows: Vec<MetricsRecord>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&csv_row(r));
            out.push('\n');
        }
        out
    }
}

/// Sweeps `axis` over `values`. With an output directory, `ablation.csv` is
/// written row by row, so a failing row leaves the completed rows on disk.
pub fn run_ablation(cfg: &ExperimentConfig, axis: AblationAxis, values: &[String]) -> Result<AblationTable> {
    let mut file = match &cfg.output.dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut f = fs::File::create(dir.join("ablation.csv"))?;
            writeln!(f, "{CSV_HEADER}")?;
            Some(f)
        }
        None => None,
    };
    let mut table = AblationTable {
        axis,
        values: values.to_vec(),
        rows: Vec::with_capacity(values.len()),
    };
    for value in values {
        let mut c = apply_axis(cfg, axis, value)?;
        c.output.dir = None;
        let rec = run_experiment(&c)
            .map_err(|e| Error::Config(format!("ablation row `{value}` failed: {e}")))?
            .metrics;
        if let Some(f) = file.as_mut() {
            writeln!(f, "{}", csv_row(&rec))?;
            f.flush()?;
        }
        table.rows.push(rec);
    }
    Ok(table)
}

/// Guidance spec with the direction `g`, magnitude `d` and mode given by name.
pub fn guidance_from_names(g: &str, d: &str, xi: &str) -> Result<GuidanceSpec> {
    Ok(GuidanceSpec {
        g_kind: g.parse()?,
        d_kind: d.parse()?,
        xi_mode: xi.parse()?,
        ..GuidanceSpec::default()
    })
}
