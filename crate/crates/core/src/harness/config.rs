//! Experiment configuration in INI form, one section per module.
//!
//! Every task starts from built-in defaults ([`ExperimentConfig::for_task`]);
//! a config file only needs `[task] name` plus the keys it overrides. Unknown
//! sections or keys are rejected so that typos do not silently fall back to
//! defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::guidance::{GuidanceSpec, Surrogate};
use crate::nonlinear::GnConfig;
use crate::operators::GramBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Sr,
    GaussianDeblur,
    MotionDeblur,
    IdentityDenoise,
    Gmm1d,
    Gmm2d,
    NonlinearToy,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::Sr,
        Task::GaussianDeblur,
        Task::MotionDeblur,
        Task::IdentityDenoise,
        Task::Gmm1d,
        Task::Gmm2d,
        Task::NonlinearToy,
    ];

    /// Image tasks work on `[-1, 1]` pixels and report PSNR.
    pub fn is_image(self) -> bool {
        matches!(
            self,
            Task::Sr | Task::GaussianDeblur | Task::MotionDeblur | Task::IdentityDenoise
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Sr => "sr",
            Task::GaussianDeblur => "gaussian-deblur",
            Task::MotionDeblur => "motion-deblur",
            Task::IdentityDenoise => "identity-denoise",
            Task::Gmm1d => "gmm-1d",
            Task::Gmm2d => "gmm-2d",
            Task::NonlinearToy => "nonlinear-toy",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrKernel {
    Bicubic,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    /// Isotropic Gaussian mixture with explicit components.
    Gmm,
    /// Diagonal Gaussian with broadcast `mean` and `var`.
    Gaussian,
    /// Mixture centred on synthetic (or loaded) template images.
    Templates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub steps: usize,
    pub eta: f64,
    pub clip_denoised: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorConfig {
    /// Side length of the square images used by image tasks.
    pub image_size: usize,
    pub kernel_size: usize,
    pub kernel_std: f64,
    pub factor: usize,
    pub sr_kernel: SrKernel,
    pub motion_length: f64,
    /// Degrees, counter-clockwise from the horizontal.
    pub motion_angle: f64,
    pub kernel_file: Option<PathBuf>,
    pub matrix: Option<DMatrix<f64>>,
    pub matrix_file: Option<PathBuf>,
    pub backend: Option<GramBackend>,
    pub tanh_a: f64,
    pub tanh_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    pub kind: PriorKind,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub template_var: f64,
    pub template_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub save_samples: bool,
    /// Chains whose per-step diagnostics are written to `traj/`.
    pub trajectory_chains: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Base chain seed; chain `i` uses `seed + i`.
    pub seed: u64,
    pub chains: usize,
    pub jobs: usize,
    pub truth_seed: u64,
    pub noise_seed: u64,
    pub schedule: ScheduleConfig,
    /// In `[0, 1]` intensity units; image tasks double it for `[-1, 1]` pixels.
    pub sigma_y: f64,
    pub guidance: Option<GuidanceSpec>,
    pub operator: OperatorConfig,
    pub prior: PriorConfig,
    pub gn: GnConfig,
    pub output: OutputConfig,
}

fn mixture_1d() -> PriorConfig {
    PriorConfig {
        kind: PriorKind::Gmm,
        weights: vec![0.4, 0.6],
        means: vec![vec![-0.8], vec![0.7]],
        vars: vec![0.05, 0.08],
        mean: vec![0.0],
        var: vec![1.0],
        template_var: 0.01,
        template_file: None,
    }
}

impl ExperimentConfig {
    pub fn for_task(task: Task) -> Self {
        let image = task.is_image();
        let mut prior = mixture_1d();
        let mut operator = OperatorConfig {
            image_size: 32,
            kernel_size: 5,
            kernel_std: 10.0,
            factor: 4,
            sr_kernel: SrKernel::Bicubic,
            motion_length: 5.0,
            motion_angle: 30.0,
            kernel_file: None,
            matrix: None,
            matrix_file: None,
            backend: None,
            tanh_a: 0.5,
            tanh_b: 2.0,
        };
        let mut guidance = GuidanceSpec::default();
        match task {
            Task::Gmm2d => {
                prior.weights = vec![0.3, 0.3, 0.4];
                prior.means = vec![vec![-1.0, 0.0], vec![0.8, 0.6], vec![0.2, -0.9]];
                prior.vars = vec![0.05, 0.08, 0.04];
                operator.matrix = Some(DMatrix::from_row_slice(1, 2, &[1.0, 0.5]));
            }
            Task::NonlinearToy => {
                // pgdm needs a linear operator
                guidance.g_kind = Surrogate::Dps;
            }
            Task::MotionDeblur => {
                prior.kind = PriorKind::Templates;
                operator.kernel_size = 9;
                operator.motion_length = 7.0;
            }
            _ if image => prior.kind = PriorKind::Templates,
            _ => {}
        }
        Self {
            task,
            seed: 0,
            chains: if image { 4 } else { 2000 },
            jobs: 0,
            truth_seed: 1,
            noise_seed: 2,
            schedule: ScheduleConfig {
                train_steps: crate::schedule::DEFAULT_T,
                beta_start: crate::schedule::DEFAULT_BETA_START,
                beta_end: crate::schedule::DEFAULT_BETA_END,
                steps: 100,
                eta: 1.0,
                clip_denoised: None,
            },
            sigma_y: if image { 0.05 } else { 0.1 },
            guidance: Some(guidance),
            operator,
            prior,
            gn: GnConfig::default(),
            output: OutputConfig {
                dir: None,
                save_samples: true,
                trajectory_chains: 1,
            },
        }
    }

    /// Noise standard deviation in signal units.
    pub fn effective_sigma_y(&self) -> f64 {
        if self.task.is_image() {
            2.0 * self.sigma_y
        } else {
            self.sigma_y
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if !(self.sigma_y >= 0.0) || !self.sigma_y.is_finite() {
            return Err(Error::Config(format!(
                "sigma_y {} must be finite and >= 0",
                self.sigma_y
            )));
        }
        let s = &self.schedule;
        if s.steps == 0 || s.steps > s.train_steps {
            return Err(Error::Config(format!(
                "steps {} must lie in 1..={}",
                s.steps, s.train_steps
            )));
        }
        if !(0.0..=1.0).contains(&s.eta) {
            return Err(Error::Config(format!("eta {} outside [0, 1]", s.eta)));
        }
        if let Some(g) = &self.guidance {
            g.validate()?;
        }
        self.gn.validate()?;
        let p = &self.prior;
        if p.kind == PriorKind::Gmm && (p.weights.len() != p.means.len() || p.weights.len() != p.vars.len()) {
            return Err(Error::Config(
                "prior weights, means and vars must have one entry per component".into(),
            ));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_ini_str(&text, base)
    }

    /// Parses INI text; relative file paths are resolved against `base`.
    pub fn from_ini_str(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        let task: Task = ini
            .section(Some("task"))
            .and_then(|s| s.get("name"))
            .ok_or_else(|| Error::Config("config needs `[task] name`".into()))?
            .parse()?;
        let mut cfg = Self::for_task(task);
        let mut guidance = cfg.guidance.unwrap_or_default();
        let mut guidance_on = cfg.guidance.is_some();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, value) in props.iter() {
                let value = value.trim();
                cfg.apply(section, key, value, base, &mut guidance, &mut guidance_on)?;
            }
        }
        cfg.guidance = guidance_on.then_some(guidance);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(
        &mut self,
        section: &str,
        key: &str,
        value: &str,
        base: &Path,
        guidance: &mut GuidanceSpec,
        guidance_on: &mut bool,
    ) -> Result<()> {
        let path = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let (op, pr) = (&mut self.operator, &mut self.prior);
        match (section, key) {
            ("task", "name") => {}
            ("task", "seed") => self.seed = num(key, value)?,
            ("task", "chains") => self.chains = num(key, value)?,
            ("task", "jobs") => self.jobs = num(key, value)?,
            ("task", "truth_seed") => self.truth_seed = num(key, value)?,
            ("task", "noise_seed") => self.noise_seed = num(key, value)?,
            ("schedule", "train_steps") => self.schedule.train_steps = num(key, value)?,
            ("schedule", "beta_start") => self.schedule.beta_start = num(key, value)?,
            ("schedule", "beta_end") => self.schedule.beta_end = num(key, value)?,
            ("schedule", "steps") => self.schedule.steps = num(key, value)?,
            ("schedule", "eta") => self.schedule.eta = num(key, value)?,
            ("schedule", "clip_denoised") => {
                self.schedule.clip_denoised = if value == "none" { None } else { Some(num(key, value)?) }
            }
            ("measurement", "sigma_y") => self.sigma_y = num(key, value)?,
            ("guidance", "enabled") => *guidance_on = boolean(key, value)?,
            ("guidance", "g") => guidance.g_kind = value.parse()?,
            ("guidance", "d") => guidance.d_kind = value.parse()?,
            ("guidance", "xi") => guidance.xi_mode = value.parse()?,
            ("guidance", "normalize_g") => guidance.normalize_g = boolean(key, value)?,
            ("guidance", "allow_negative_xi") => guidance.allow_negative_xi = boolean(key, value)?,
            ("operator", "image_size") => op.image_size = num(key, value)?,
            ("operator", "kernel_size") => op.kernel_size = num(key, value)?,
            ("operator", "kernel_std") => op.kernel_std = num(key, value)?,
            ("operator", "factor") => op.factor = num(key, value)?,
            ("operator", "sr_kernel") => {
                op.sr_kernel = match value {
                    "bicubic" => SrKernel::Bicubic,
                    "box" => SrKernel::Box,
                    other => return Err(Error::Config(format!("unknown sr_kernel `{other}`"))),
                }
            }
            ("operator", "motion_length") => op.motion_length = num(key, value)?,
            ("operator", "motion_angle") => op.motion_angle = num(key, value)?,
            ("operator", "kernel_file") => op.kernel_file = Some(path(value)),
            ("operator", "matrix") => op.matrix = Some(parse_matrix_rows(value)?),
            ("operator", "matrix_file") => op.matrix_file = Some(path(value)),
            ("operator", "backend") => op.backend = Some(value.parse()?),
            ("operator", "tanh_a") => op.tanh_a = num(key, value)?,
            ("operator", "tanh_b") => op.tanh_b = num(key, value)?,
            ("prior", "kind") => {
                pr.kind = match value {
                    "gmm" => PriorKind::Gmm,
                    "gaussian" => PriorKind::Gaussian,
                    "templates" => PriorKind::Templates,
                    other => return Err(Error::Config(format!("unknown prior kind `{other}`"))),
                }
            }
            ("prior", "weights") => pr.weights = list(value)?,
            ("prior", "means") => pr.means = value.split(';').map(list).collect::<Result<_>>()?,
            ("prior", "vars") => pr.vars = list(value)?,
            ("prior", "mean") => pr.mean = list(value)?,
            ("prior", "var") => pr.var = list(value)?,
            ("prior", "template_var") => pr.template_var = num(key, value)?,
            ("prior", "template_file") => pr.template_file = Some(path(value)),
            ("nonlinear", "iterations") => self.gn.iterations = num(key, value)?,
            ("nonlinear", "damping") => self.gn.damping = num(key, value)?,
            ("nonlinear", "residual_floor") => self.gn.residual_floor = num(key, value)?,
            ("nonlinear", "max_halvings") => self.gn.max_halvings = num(key, value)?,
            ("output", "dir") => self.output.dir = Some(path(value)),
            ("output", "save_samples") => self.output.save_samples = boolean(key, value)?,
            ("output", "trajectory_chains") => self.output.trajectory_chains = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key `[{section}] {key}`"))),
        }
        Ok(())
    }

    /// The resolved configuration as INI text, every key spelled out.
    pub fn to_ini_string(&self) -> String {
        let mut ini = Ini::new();
        ini.with_section(Some("task"))
            .set("name", self.task.name())
            .set("seed", self.seed.to_string())
            .set("chains", self.chains.to_string())
            .set("jobs", self.jobs.to_string())
            .set("truth_seed", self.truth_seed.to_string())
            .set("noise_seed", self.noise_seed.to_string());
        let s = &self.schedule;
        ini.with_section(Some("schedule"))
            .set("train_steps", s.train_steps.to_string())
            .set("beta_start", s.beta_start.to_string())
            .set("beta_end", s.beta_end.to_string())
            .set("steps", s.steps.to_string())
            .set("eta", s.eta.to_string())
            .set(
                "clip_denoised",
                s.clip_denoised.map_or("none".to_string(), |c| c.to_string()),
            );
        ini.with_section(Some("measurement"))
            .set("sigma_y", self.sigma_y.to_string());
        let g = self.guidance.unwrap_or_default();
        ini.with_section(Some("guidance"))
            .set("enabled", self.guidance.is_some().to_string())
            .set("g", g.g_kind.to_string())
            .set("d", g.d_kind.to_string())
            .set("xi", g.xi_mode.to_string())
            .set("normalize_g", g.normalize_g.to_string())
            .set("allow_negative_xi", g.allow_negative_xi.to_string());
        let o = &self.operator;
        let mut sec = ini.with_section(Some("operator"));
        sec.set("image_size", o.image_size.to_string())
            .set("kernel_size", o.kernel_size.to_string())
            .set("kernel_std", o.kernel_std.to_string())
            .set("factor", o.factor.to_string())
            .set(
                "sr_kernel",
                match o.sr_kernel {
                    SrKernel::Bicubic => "bicubic",
                    SrKernel::Box => "box",
                },
            )
            .set("motion_length", o.motion_length.to_string())
            .set("motion_angle", o.motion_angle.to_string())
            .set("tanh_a", o.tanh_a.to_string())
            .set("tanh_b", o.tanh_b.to_string());
        if let Some(p) = &o.kernel_file {
            sec.set("kernel_file", p.display().to_string());
        }
        if let Some(m) = &o.matrix {
            sec.set("matrix", format_matrix_rows(m));
        }
        if let Some(p) = &o.matrix_file {
            sec.set("matrix_file", p.display().to_string());
        }
        if let Some(b) = o.backend {
            sec.set("backend", backend_name(b));
        }
        let p = &self.prior;
        let mut sec = ini.with_section(Some("prior"));
        sec.set(
            "kind",
            match p.kind {
                PriorKind::Gmm => "gmm",
                PriorKind::Gaussian => "gaussian",
                PriorKind::Templates => "templates",
            },
        )
        .set("weights", join(&p.weights))
        .set("means", p.means.iter().map(|m| join(m)).collect::<Vec<_>>().join(";"))
        .set("vars", join(&p.vars))
        .set("mean", join(&p.mean))
        .set("var", join(&p.var))
        .set("template_var", p.template_var.to_string());
        if let Some(f) = &p.template_file {
            sec.set("template_file", f.display().to_string());
        }
        ini.with_section(Some("nonlinear"))
            .set("iterations", self.gn.iterations.to_string())
            .set("damping", self.gn.damping.to_string())
            .set("residual_floor", self.gn.residual_floor.to_string())
            .set("max_halvings", self.gn.max_halvings.to_string());
        let mut sec = ini.with_section(Some("output"));
        sec.set("save_samples", self.output.save_samples.to_string())
            .set("trajectory_chains", self.output.trajectory_chains.to_string());
        if let Some(d) = &self.output.dir {
            sec.set("dir", d.display().to_string());
        }
        let mut buf = Vec::new();
        ini.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ini output is utf-8")
    }
}

fn backend_name(b: GramBackend) -> &'static str {
    match b {
        GramBackend::Direct => "direct",
        GramBackend::Spectral => "spectral",
        GramBackend::Fft => "fft",
        GramBackend::Polyphase => "polyphase",
        GramBackend::Cg => "cg",
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value `{value}` for `{key}`: {e}")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

/// Comma-separated floats.
pub fn list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| num("list", v))
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Rows separated by `;`, entries by `,`.
fn parse_matrix_rows(value: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = value.split(';').map(list).collect::<Result<_>>()?;
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!("ragged or empty matrix `{value}`")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn format_matrix_rows(m: &DMatrix<f64>) -> String {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| m[(i, j)].to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(";")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_task_defaults() {
        let cfg = ExperimentConfig::from_ini_str("[task]\nname = gmm-1d\n", Path::new(".")).unwrap();
        assert_eq!(cfg, ExperimentConfig::for_task(Task::Gmm1d));
        assert_eq!(cfg.chains, 2000);
        assert_eq!(cfg.effective_sigma_y(), 0.1);
    }

    #[test]
    fn image_noise_is_doubled() {
        let cfg = ExperimentConfig::for_task(Task::Sr);
        assert_eq!(cfg.effective_sigma_y(), 0.1);
    }

    #[test]
    fn overrides_and_guidance_switch() {
        let text = "[task]\nname = gmm-2d\nseed = 9\n[schedule]\nsteps = 25\neta = 0.5\n\
                    [guidance]\nxi = fixed(2)\ng = dps\n[prior]\nmeans = 0,1;2,3;4,5\n\
                    [operator]\nmatrix = 1,0;0,1\n";
        let cfg = ExperimentConfig::from_ini_str(text, Path::new(".")).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.schedule.steps, 25);
        let g = cfg.guidance.unwrap();
        assert_eq!(g.xi_mode, crate::guidance::XiMode::Fixed(2.0));
        assert_eq!(g.g_kind, Surrogate::Dps);
        assert_eq!(cfg.prior.means[2], vec![4.0, 5.0]);
        assert_eq!(cfg.operator.matrix.unwrap(), DMatrix::identity(2, 2));
        let off =
            ExperimentConfig::from_ini_str("[task]\nname=gmm-1d\n[guidance]\nenabled=false\n", Path::new(".")).unwrap();
        assert!(off.guidance.is_none());
    }

    #[test]
    fn rejects_unknown_and_invalid_keys() {
        for text in [
            "[schedule]\nsteps = 10\n",
            "[task]\nname = gmm-1d\n[schedule]\nstep = 10\n",
            "[task]\nname = gmm-1d\n[schedule]\nsteps = 0\n",
            "[task]\nname = gmm-1d\n[schedule]\neta = 2\n",
            "[task]\nname = denoise\n",
            "[task]\nname = gmm-1d\n[guidance]\nenabled = maybe\n",
        ] {
            assert!(ExperimentConfig::from_ini_str(text, Path::new(".")).is_err(), "{text}");
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        for task in Task::ALL {
            let mut cfg = ExperimentConfig::for_task(task);
            cfg.schedule.clip_denoised = Some(1.0);
            cfg.operator.backend = Some(GramBackend::Cg);
            let text = cfg.to_ini_string();
            assert_eq!(
                ExperimentConfig::from_ini_str(&text, Path::new(".")).unwrap(),
                cfg,
                "{task}"
            );
        }
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let text = "[task]\nname = motion-deblur\n[operator]\nkernel_file = k.txt\n";
        let cfg = ExperimentConfig::from_ini_str(text, Path::new("/data/run")).unwrap();
        assert_eq!(cfg.operator.kernel_file.unwrap(), PathBuf::from("/data/run/k.txt"));
    }
}
