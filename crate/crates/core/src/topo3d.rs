//! Helicity and Beltrami diagnostics for divergence-free fields on the 3-torus `[0, 2π)³`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{curl_hat, project_divfree, Grid3, VelocityField3D};

/// Smallest grid accepted by [`abc_field`].
pub const MIN_ABC_GRID: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopoError {
    #[error("grid {0}^3 is below the minimum {MIN_ABC_GRID}^3")]
    GridTooSmall(usize),
    #[error("field has a nonzero mean {0:?}; constant fields have no inverse curl")]
    NonzeroMean([f64; 3]),
    #[error("field is not divergence-free (max |k.u_k| = {0:e})")]
    NotDivergenceFree(f64),
    #[error("zero field")]
    ZeroField,
}

pub type Result<T> = std::result::Result<T, TopoError>;

/// `u = (A sin z + C cos y, B sin x + A cos z, C sin y + B cos x)`.
pub fn abc_field(grid: Grid3, a: f64, b: f64, c: f64) -> Result<VelocityField3D> {
    if grid.n < MIN_ABC_GRID {
        return Err(TopoError::GridTooSmall(grid.n));
    }
    Ok(VelocityField3D::from_fn(grid, |[x, y, z]| {
        [a * z.sin() + c * y.cos(), b * x.sin() + a * z.cos(), c * y.sin() + b * x.cos()]
    }))
}

fn scale_of(u: &VelocityField3D) -> f64 {
    u.components.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn check_invertible(u: &VelocityField3D) -> Result<[Vec<Complex64>; 3]> {
    let scale = scale_of(u).max(1e-300);
    let mean = u.mean();
    if mean.iter().any(|m| m.abs() > 1e-12 * scale) {
        return Err(TopoError::NonzeroMean(mean));
    }
    let div = u.spectral_divergence();
    if div > 1e-10 * scale {
        return Err(TopoError::NotDivergenceFree(div));
    }
    Ok(u.to_spectral())
}

/// `ŵ_k = i k × û_k / |k|²`: the divergence-free `w` with `curl w = u`.
pub fn inv_curl(u: &VelocityField3D) -> Result<VelocityField3D> {
    let grid = u.grid;
    let hat = check_invertible(u)?;
    let mut w = curl_hat(&grid, &hat);
    for idx in 0..grid.len() {
        let k = grid.deriv_k(idx);
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        for c in w.iter_mut() {
            c[idx] = if k2 > 0.0 { c[idx] / k2 } else { Complex64::default() };
        }
    }
    Ok(VelocityField3D::from_spectral(grid, &w))
}

/// `H(u) = ⟨u, curl⁻¹ u⟩`.
pub fn helicity(u: &VelocityField3D) -> Result<f64> {
    Ok(u.inner(&inv_curl(u)?))
}

/// `⟨curl v, v⟩`, the helicity of the vorticity of a velocity field `v`.
pub fn velocity_helicity(v: &VelocityField3D) -> f64 {
    v.curl().inner(v)
}

/// `½‖u‖²`.
pub fn energy3d(u: &VelocityField3D) -> f64 {
    0.5 * u.inner(u)
}

/// `‖curl u − λu‖ / ‖u‖`.
pub fn beltrami_residual(u: &VelocityField3D, lambda: f64) -> Result<f64> {
    let n = u.l2_norm();
    if n == 0.0 {
        return Err(TopoError::ZeroField);
    }
    Ok(u.curl().sub(&u.scale(lambda)).l2_norm() / n)
}

/// Mirror image under `x ↦ −x`: `u'(x,y,z) = (−u₁, u₂, u₃)(−x, y, z)`.
pub fn mirror_x(u: &VelocityField3D) -> VelocityField3D {
    let n = u.grid.n;
    let mut out = VelocityField3D::zeros(u.grid);
    for idx in 0..u.grid.len() {
        let (zy, ix) = (idx / n, idx % n);
        let src = zy * n + (n - ix) % n;
        out.components[0][idx] = -u.components[0][src];
        out.components[1][idx] = u.components[1][src];
        out.components[2][idx] = u.components[2][src];
    }
    out
}

/// Torus translation by whole grid cells.
pub fn translate(u: &VelocityField3D, shift: [usize; 3]) -> VelocityField3D {
    let n = u.grid.n;
    let mut out = VelocityField3D::zeros(u.grid);
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                let dst = (((iz + shift[2]) % n) * n + (iy + shift[1]) % n) * n + (ix + shift[0]) % n;
                let src = (iz * n + iy) * n + ix;
                for c in 0..3 {
                    out.components[c][dst] = u.components[c][src];
                }
            }
        }
    }
    out
}

/// Random mean-free divergence-free field with modes `0 < |k| ≤ kmax`.
pub fn random_divfree_field(grid: Grid3, seed: u64, kmax: f64) -> VelocityField3D {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut hat: [Vec<Complex64>; 3] = std::array::from_fn(|_| vec![Complex64::default(); grid.len()]);
    for idx in 1..grid.len() {
        let m = grid.mode(idx);
        let k2 = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64;
        if k2 <= kmax * kmax {
            for c in hat.iter_mut() {
                c[idx] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
    }
    // Hermitian part gives a real field
    let raw = VelocityField3D::from_spectral(grid, &hat);
    let mut u = project_divfree(&raw);
    let mean = u.mean();
    for c in 0..3 {
        u.components[c].iter_mut().for_each(|x| *x -= mean[c]);
    }
    u
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopoSummary {
    pub energy: f64,
    pub helicity: f64,
    pub beltrami_residual: f64,
    pub divergence: f64,
}

/// Energy, helicity and Beltrami residual at `λ` in one pass.
pub fn summarize(u: &VelocityField3D, lambda: f64) -> Result<TopoSummary> {
    Ok(TopoSummary {
        energy: energy3d(u),
        helicity: helicity(u)?,
        beltrami_residual: beltrami_residual(u, lambda)?,
        divergence: u.spectral_divergence(),
    })
}
