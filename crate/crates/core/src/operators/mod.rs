//! Linear measurement operators `A`, their adjoints, and the regularized
//! measurement-space solve `(A A^T + lambda I)^{-1}`.
//!
//! Convolutions use periodic boundaries so blur operators are exactly circulant
//! and diagonalized by the 2D DFT. Super-resolution is `S H`: a circulant
//! anti-aliasing filter followed by stride subsampling.

mod cg;
mod fft;
pub mod kernels;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

pub use cg::{conjugate_gradient, CgConfig};
pub use kernels::Kernel;

use crate::error::{check_dim, Error, Result};
use crate::Vector;
use fft::Fft2;

/// Layout of an image signal: `channels` planes of `height x width`, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    /// A flat 1D signal of length `n`.
    pub fn flat(n: usize) -> Self {
        Self::new(1, 1, n)
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.channels * self.plane()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Periodic 2D convolution applied to every channel independently.
#[derive(Debug, Clone)]
pub struct Circulant {
    shape: Shape,
    kernel: Kernel,
    fft: Fft2,
    spectrum: Vec<Complex64>,
}

impl Circulant {
    pub fn new(shape: Shape, kernel: Kernel) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::Config("circulant operator on an empty grid".into()));
        }
        // kernels wider than the grid wrap around periodically
        let (h, w) = (shape.height, shape.width);
        let mut column = vec![Complex64::new(0.0, 0.0); h * w];
        let (oy, ox) = kernel.origin;
        for r in 0..kernel.rows {
            for c in 0..kernel.cols {
                let jr = (r + h - oy % h) % h;
                let jc = (c + w - ox % w) % w;
                column[jr * w + jc] += kernel.get(r, c);
            }
        }
        let fft = Fft2::new(h, w);
        fft.forward(&mut column);
        Ok(Self {
            shape,
            kernel,
            fft,
            spectrum: column,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Eigenvalues of `H H^T` in DFT order.
    pub fn gram_spectrum(&self) -> Vec<f64> {
        self.spectrum.iter().map(|c| c.norm_sqr()).collect()
    }

    fn per_channel(&self, x: &[f64], mask: impl Fn(usize, Complex64) -> Complex64 + Copy) -> Vec<f64> {
        x.chunks_exact(self.shape.plane())
            .flat_map(|plane| self.fft.filter(plane, mask))
            .collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.per_channel(x, |i, v| v * self.spectrum[i])
    }

    pub fn adjoint(&self, x: &[f64]) -> Vec<f64> {
        self.per_channel(x, |i, v| v * self.spectrum[i].conj())
    }
}

/// Anti-aliasing filter followed by stride subsampling.
#[derive(Debug, Clone)]
pub struct Subsampled {
    filter: Circulant,
    stride: (usize, usize),
    out: Shape,
}

impl Subsampled {
    pub fn new(shape: Shape, kernel: Kernel, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Config("subsampling factor must be positive".into()));
        }
        let sy = if shape.height == 1 { 1 } else { factor };
        let sx = factor;
        if shape.height % sy != 0 || shape.width % sx != 0 {
            return Err(Error::Config(format!(
                "factor {factor} does not divide {}x{}",
                shape.height, shape.width
            )));
        }
        let out = Shape::new(shape.channels, shape.height / sy, shape.width / sx);
        Ok(Self {
            filter: Circulant::new(shape, kernel)?,
            stride: (sy, sx),
            out,
        })
    }

    pub fn output_shape(&self) -> Shape {
        self.out
    }

    fn decimate(&self, full: &[f64]) -> Vec<f64> {
        let s = self.filter.shape;
        let (sy, sx) = self.stride;
        let mut y = Vec::with_capacity(self.out.len());
        for ch in 0..s.channels {
            for r in 0..self.out.height {
                for c in 0..self.out.width {
                    y.push(full[ch * s.plane() + r * sy * s.width + c * sx]);
                }
            }
        }
        y
    }

    fn zero_insert(&self, y: &[f64]) -> Vec<f64> {
        let s = self.filter.shape;
        let (sy, sx) = self.stride;
        let mut full = vec![0.0; s.len()];
        let mut it = y.iter();
        for ch in 0..s.channels {
            for r in 0..self.out.height {
                for c in 0..self.out.width {
                    full[ch * s.plane() + r * sy * s.width + c * sx] = *it.next().unwrap();
                }
            }
        }
        full
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.decimate(&self.filter.apply(x))
    }

    pub fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.filter.adjoint(&self.zero_insert(y))
    }

    /// Spectrum of `S H H^T S^T`, itself circulant on the low-resolution grid:
    /// the aliased sum of `|H|^2` over the `sy * sx` polyphase shifts.
    pub fn polyphase_spectrum(&self) -> Vec<f64> {
        let full = self.filter.gram_spectrum();
        let s = self.filter.shape;
        let (sy, sx) = self.stride;
        let (lh, lw) = (self.out.height, self.out.width);
        let scale = 1.0 / (sy * sx) as f64;
        let mut out = vec![0.0; lh * lw];
        for k1 in 0..lh {
            for k2 in 0..lw {
                let mut acc = 0.0;
                for a in 0..sy {
                    for b in 0..sx {
                        acc += full[(k1 + a * lh) * s.width + k2 + b * lw];
                    }
                }
                out[k1 * lw + k2] = acc * scale;
            }
        }
        out
    }
}

/// Which algorithm `gram_solve` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramBackend {
    /// Identity operator: scalar division.
    Direct,
    /// Eigendecomposition of the materialized `A A^T` (equivalently the SVD of `A`).
    Spectral,
    /// DFT diagonalization of a circulant operator.
    Fft,
    /// Closed form for subsampled circulant operators on the low-resolution grid.
    Polyphase,
    /// Matrix-free conjugate gradients.
    Cg,
}

impl std::str::FromStr for GramBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "direct" => Self::Direct,
            "spectral" | "svd" => Self::Spectral,
            "fft" => Self::Fft,
            "polyphase" => Self::Polyphase,
            "cg" => Self::Cg,
            other => return Err(Error::Config(format!("unknown gram backend `{other}`"))),
        })
    }
}

#[derive(Debug, Clone)]
enum OpKind {
    Identity(usize),
    Dense(DMatrix<f64>),
    Circulant(Circulant),
    Subsampled(Subsampled),
    /// Applied first to last.
    Composed(Vec<LinearOperator>),
}

#[derive(Debug)]
struct SpectralGram {
    basis: DMatrix<f64>,
    eigenvalues: DVector<f64>,
}

/// A linear measurement operator with a chosen gram-solve backend.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    kind: OpKind,
    backend: GramBackend,
    spectral: Option<Arc<SpectralGram>>,
    cg: CgConfig,
}

impl LinearOperator {
    fn with_kind(kind: OpKind, backend: GramBackend) -> Result<Self> {
        Self {
            kind,
            backend: GramBackend::Cg,
            spectral: None,
            cg: CgConfig::default(),
        }
        .with_backend(backend)
    }

    pub fn identity(n: usize) -> Self {
        Self::with_kind(OpKind::Identity(n), GramBackend::Direct).expect("identity is always valid")
    }

    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Config("dense operator must be non-empty".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("dense operator has non-finite entries".into()));
        }
        Self::with_kind(OpKind::Dense(matrix), GramBackend::Spectral)
    }

    pub fn circulant(shape: Shape, kernel: Kernel) -> Result<Self> {
        Self::with_kind(OpKind::Circulant(Circulant::new(shape, kernel)?), GramBackend::Fft)
    }

    pub fn subsampled(shape: Shape, kernel: Kernel, factor: usize) -> Result<Self> {
        Self::with_kind(
            OpKind::Subsampled(Subsampled::new(shape, kernel, factor)?),
            GramBackend::Cg,
        )
    }

    /// `ops[last] * ... * ops[0]`.
    pub fn composed(ops: Vec<LinearOperator>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::Config("composition of zero operators".into()));
        }
        for pair in ops.windows(2) {
            check_dim("composed operator", pair[0].out_dim(), pair[1].in_dim())?;
        }
        Self::with_kind(OpKind::Composed(ops), GramBackend::Cg)
    }

    /// Switches the gram-solve backend, validating that it applies to this operator.
    pub fn with_backend(mut self, backend: GramBackend) -> Result<Self> {
        let ok = match backend {
            GramBackend::Direct => matches!(self.kind, OpKind::Identity(_)),
            GramBackend::Fft => matches!(self.kind, OpKind::Circulant(_)),
            GramBackend::Polyphase => matches!(self.kind, OpKind::Subsampled(_)),
            GramBackend::Spectral | GramBackend::Cg => true,
        };
        if !ok {
            return Err(Error::Config(format!(
                "backend {backend:?} does not apply to this operator"
            )));
        }
        self.spectral = if backend == GramBackend::Spectral {
            let a = self.to_dense()?;
            let eig = SymmetricEigen::new(&a * a.transpose());
            Some(Arc::new(SpectralGram {
                basis: eig.eigenvectors,
                eigenvalues: eig.eigenvalues,
            }))
        } else {
            None
        };
        self.backend = backend;
        Ok(self)
    }

    pub fn with_cg_config(mut self, cfg: CgConfig) -> Self {
        self.cg = cfg;
        self
    }

    pub fn backend(&self) -> GramBackend {
        self.backend
    }

    pub fn in_dim(&self) -> usize {
        match &self.kind {
            OpKind::Identity(n) => *n,
            OpKind::Dense(m) => m.ncols(),
            OpKind::Circulant(c) => c.shape.len(),
            OpKind::Subsampled(s) => s.filter.shape.len(),
            OpKind::Composed(ops) => ops[0].in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match &self.kind {
            OpKind::Identity(n) => *n,
            OpKind::Dense(m) => m.nrows(),
            OpKind::Circulant(c) => c.shape.len(),
            OpKind::Subsampled(s) => s.out.len(),
            OpKind::Composed(ops) => ops[ops.len() - 1].out_dim(),
        }
    }

    /// Image layout of the measurement, when the operator has one.
    pub fn output_shape(&self) -> Option<Shape> {
        match &self.kind {
            OpKind::Circulant(c) => Some(c.shape),
            OpKind::Subsampled(s) => Some(s.out),
            OpKind::Composed(ops) => ops[ops.len() - 1].output_shape(),
            _ => None,
        }
    }

    pub fn description(&self) -> String {
        match &self.kind {
            OpKind::Identity(n) => format!("identity(n={n})"),
            OpKind::Dense(m) => format!("dense({}x{})", m.nrows(), m.ncols()),
            OpKind::Circulant(c) => format!(
                "circulant({}x{}x{}, kernel {}x{})",
                c.shape.channels, c.shape.height, c.shape.width, c.kernel.rows, c.kernel.cols
            ),
            OpKind::Subsampled(s) => format!(
                "subsampled({}x{}x{} -> {}x{}, kernel {}x{})",
                s.filter.shape.channels,
                s.filter.shape.height,
                s.filter.shape.width,
                s.out.height,
                s.out.width,
                s.filter.kernel.rows,
                s.filter.kernel.cols
            ),
            OpKind::Composed(ops) => format!("composed[{}]", ops.len()),
        }
    }

    /// `A x`.
    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        check_dim("operator input", self.in_dim(), x.len())?;
        Ok(match &self.kind {
            OpKind::Identity(_) => x.clone(),
            OpKind::Dense(m) => m * x,
            OpKind::Circulant(c) => Vector::from_vec(c.apply(x.as_slice())),
            OpKind::Subsampled(s) => Vector::from_vec(s.apply(x.as_slice())),
            OpKind::Composed(ops) => {
                let mut v = x.clone();
                for op in ops {
                    v = op.apply(&v)?;
                }
                v
            }
        })
    }

    /// `A^T v`.
    pub fn adjoint(&self, v: &Vector) -> Result<Vector> {
        check_dim("operator adjoint input", self.out_dim(), v.len())?;
        Ok(match &self.kind {
            OpKind::Identity(_) => v.clone(),
            OpKind::Dense(m) => m.tr_mul(v),
            OpKind::Circulant(c) => Vector::from_vec(c.adjoint(v.as_slice())),
            OpKind::Subsampled(s) => Vector::from_vec(s.adjoint(v.as_slice())),
            OpKind::Composed(ops) => {
                let mut u = v.clone();
                for op in ops.iter().rev() {
                    u = op.adjoint(&u)?;
                }
                u
            }
        })
    }

    /// `(A A^T + lambda I) v`.
    pub fn gram_apply(&self, lambda: f64, v: &Vector) -> Result<Vector> {
        let mut out = self.apply(&self.adjoint(v)?)?;
        out.axpy(lambda, v, 1.0);
        Ok(out)
    }

    /// `(A A^T + lambda I)^{-1} v`.
    ///
    /// `lambda = 0` is accepted by the direct, spectral, FFT and polyphase
    /// backends when `A A^T` is nonsingular.
    pub fn gram_solve(&self, lambda: f64, v: &Vector) -> Result<Vector> {
        check_dim("gram solve input", self.out_dim(), v.len())?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Precondition(format!(
                "regularizer {lambda} must be finite and >= 0"
            )));
        }
        match self.backend {
            GramBackend::Direct => Ok(v / (1.0 + lambda)),
            GramBackend::Spectral => {
                let sg = self
                    .spectral
                    .as_ref()
                    .expect("spectral backend carries its factorization");
                let scale = sg.eigenvalues.amax().max(1.0);
                let coeffs = sg.basis.tr_mul(v);
                let mut scaled = coeffs;
                for (c, &e) in scaled.iter_mut().zip(sg.eigenvalues.iter()) {
                    let d = e.max(0.0) + lambda;
                    if d <= 1e-13 * scale {
                        return Err(Error::Singular(format!("A A^T + {lambda} I has eigenvalue {d:.3e}")));
                    }
                    *c /= d;
                }
                Ok(&sg.basis * scaled)
            }
            GramBackend::Fft => {
                let OpKind::Circulant(c) = &self.kind else {
                    unreachable!("validated in with_backend")
                };
                diagonal_solve(&c.fft, c.shape.channels, &c.gram_spectrum(), lambda, v)
            }
            GramBackend::Polyphase => {
                let OpKind::Subsampled(s) = &self.kind else {
                    unreachable!("validated in with_backend")
                };
                let fft = Fft2::new(s.out.height, s.out.width);
                diagonal_solve(&fft, s.out.channels, &s.polyphase_spectrum(), lambda, v)
            }
            GramBackend::Cg => {
                if lambda == 0.0 {
                    return Err(Error::Precondition(
                        "conjugate-gradient gram solve needs lambda > 0".into(),
                    ));
                }
                conjugate_gradient(|u| self.gram_apply(lambda, u), v, &self.cg)
            }
        }
    }

    /// Materializes `A` column by column.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if let OpKind::Dense(m) = &self.kind {
            return Ok(m.clone());
        }
        let n = self.in_dim();
        let mut out = DMatrix::zeros(self.out_dim(), n);
        let mut e = Vector::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            out.set_column(j, &self.apply(&e)?);
            e[j] = 0.0;
        }
        Ok(out)
    }
}

fn diagonal_solve(fft: &Fft2, channels: usize, spectrum: &[f64], lambda: f64, v: &Vector) -> Result<Vector> {
    let scale = spectrum.iter().cloned().fold(1.0, f64::max);
    if let Some(d) = spectrum.iter().map(|s| s + lambda).find(|d| *d <= 1e-13 * scale) {
        return Err(Error::Singular(format!("A A^T + {lambda} I has eigenvalue {d:.3e}")));
    }
    let plane = fft.len();
    debug_assert_eq!(v.len(), plane * channels);
    let out: Vec<f64> = v
        .as_slice()
        .chunks_exact(plane)
        .flat_map(|ch| fft.filter(ch, |i, z| z / (spectrum[i] + lambda)))
        .collect();
    Ok(Vector::from_vec(out))
}

/// Parameters for the built-in operator families.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    Identity,
    Dense(DMatrix<f64>),
    GaussianBlur {
        size: usize,
        std: f64,
    },
    /// Explicit kernel, e.g. loaded from an `ADAPS-KERNEL v1` file.
    MotionBlur(Kernel),
    SrBicubic {
        factor: usize,
    },
    /// Box-filter average pooling followed by subsampling.
    SrPool {
        factor: usize,
    },
}

/// Builds an operator on signals laid out as `shape`, picking the cheapest exact backend.
pub fn make_operator(spec: &OperatorSpec, shape: Shape) -> Result<LinearOperator> {
    match spec {
        OperatorSpec::Identity => Ok(LinearOperator::identity(shape.len())),
        OperatorSpec::Dense(m) => {
            check_dim("dense operator columns", shape.len(), m.ncols())?;
            LinearOperator::dense(m.clone())
        }
        OperatorSpec::GaussianBlur { size, std } => {
            let k = kernels::gaussian_kernel(*size, *std)?;
            LinearOperator::circulant(shape, flatten_for(shape, k)?)
        }
        OperatorSpec::MotionBlur(k) => {
            if k.rows % 2 == 0 || k.cols % 2 == 0 {
                return Err(Error::Config("motion kernel sizes must be odd".into()));
            }
            if (k.sum() - 1.0).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "motion kernel must sum to 1, sums to {}",
                    k.sum()
                )));
            }
            LinearOperator::circulant(shape, k.clone())
        }
        OperatorSpec::SrBicubic { factor } => {
            let (taps, origin) = kernels::bicubic_taps(*factor);
            LinearOperator::subsampled(shape, separable_for(shape, &taps, origin), *factor)
        }
        OperatorSpec::SrPool { factor } => {
            let (taps, origin) = kernels::box_taps(*factor);
            LinearOperator::subsampled(shape, separable_for(shape, &taps, origin), *factor)
        }
    }
}

// 2D kernels collapse to their central row on 1D signals
fn flatten_for(shape: Shape, k: Kernel) -> Result<Kernel> {
    if shape.height > 1 {
        return Ok(k);
    }
    let row: Vec<f64> = (0..k.cols).map(|c| (0..k.rows).map(|r| k.get(r, c)).sum()).collect();
    Ok(Kernel {
        rows: 1,
        cols: k.cols,
        data: row,
        origin: (0, k.origin.1),
    })
}

fn separable_for(shape: Shape, taps: &[f64], origin: usize) -> Kernel {
    if shape.height > 1 {
        Kernel::separable(taps, taps, (origin, origin))
    } else {
        Kernel::separable(&[1.0], taps, (0, origin))
    }
}

/// Observed data `y` together with its noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub y: Vector,
    pub sigma_y: f64,
}

impl Measurement {
    pub fn new(y: Vector, sigma_y: f64) -> Result<Self> {
        if !(sigma_y >= 0.0) || !sigma_y.is_finite() {
            return Err(Error::Config(format!("sigma_y {sigma_y} must be finite and >= 0")));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("measurement has non-finite entries".into()));
        }
        Ok(Self { y, sigma_y })
    }
}

/// Draws `y = A x0 + sigma_y z` with `z ~ N(0, I)` from a generator seeded by `seed`.
pub fn synthesize(op: &LinearOperator, x0: &Vector, sigma_y: f64, seed: u64) -> Result<Measurement> {
    let mut y = op.apply(x0)?;
    if sigma_y > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in y.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma_y * z;
        }
    }
    Measurement::new(y, sigma_y)
}
