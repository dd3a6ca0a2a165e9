//! Blur, motion-blur and super-resolution operators, and the three ways of
//! solving `(A A^T + lambda I) u = v` they support.

use std::time::Instant;

use adaps::operators::kernels::{bicubic_taps, gaussian_kernel, linear_motion_kernel, Kernel};
use adaps::operators::{CgConfig, GramBackend, LinearOperator, Shape};
use adaps::Vector;

fn solve_all(name: &str, op: &LinearOperator, backends: &[GramBackend]) -> adaps::Result<()> {
    let v = Vector::from_fn(op.out_dim(), |i, _| ((i * 37 % 101) as f64 / 50.0) - 1.0);
    let mut reference: Option<Vector> = None;
    for &b in backends {
        let op = op.clone().with_backend(b)?;
        let start = Instant::now();
        let u = op.gram_solve(0.05, &v)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let diff = reference.as_ref().map_or(0.0, |r| (&u - r).amax());
        println!("{name:<28} {:<9} {ms:>8.2} ms   max diff {diff:.1e}", format!("{b:?}"));
        reference.get_or_insert(u);
    }
    Ok(())
}

fn main() -> adaps::Result<()> {
    let shape = Shape::new(1, 32, 32);
    let tight = CgConfig {
        max_iter: 2000,
        rel_tol: 1e-13,
    };
    let all = [GramBackend::Fft, GramBackend::Spectral, GramBackend::Cg];

    let blur = LinearOperator::circulant(shape, gaussian_kernel(9, 2.0)?)?.with_cg_config(tight);
    solve_all("gaussian blur 9x9", &blur, &all)?;

    let motion = LinearOperator::circulant(shape, linear_motion_kernel(9, 7.0, 30.0)?)?.with_cg_config(tight);
    solve_all("motion blur 9x9", &motion, &all)?;

    let (taps, origin) = bicubic_taps(4);
    let sr =
        LinearOperator::subsampled(shape, Kernel::separable(&taps, &taps, (origin, origin)), 4)?.with_cg_config(tight);
    solve_all(
        "bicubic x4 downsampling",
        &sr,
        &[GramBackend::Spectral, GramBackend::Cg],
    )?;
    Ok(())
}
