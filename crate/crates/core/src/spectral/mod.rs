//! Spectral calculus on periodic grids.
//!
//! Sign conventions used throughout the crate:
//!
//! * vorticity `ω = ∂x u₂ − ∂y u₁`
//! * stream function `ψ` with `ω = −Δψ` and `u = (∂yψ, −∂xψ)`
//!
//! All integrals use the rectangle rule on the uniform grid.

mod fft;
mod field3d;

pub use fft::{derivative_index, signed_index, FftNd};
pub use field3d::{project_divfree, Grid3, VelocityField3D};
pub(crate) use field3d::curl_hat;

use std::f64::consts::TAU;

use num_complex::Complex64;
use thiserror::Error;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("grid size {0} must be a power of two and at least {1}")]
    BadGridSize(usize, usize),
    #[error("domain length must be positive, got {0}")]
    BadLength(f64),
    #[error("sample count {got} does not match grid ({expected})")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("casimir moment order {0} outside 1..=8")]
    MomentOrder(u32),
    #[error("field has a nonzero mean component; curl is not invertible on it")]
    NonzeroMean,
}

pub type Result<T> = std::result::Result<T, SpectralError>;

/// Uniform periodic grid on the 2-torus `[0,lx) x [0,ly)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2 {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

pub(crate) fn check_pow2(n: usize, min: usize) -> Result<()> {
    if n < min || !n.is_power_of_two() {
        return Err(SpectralError::BadGridSize(n, min));
    }
    Ok(())
}

impl Grid2 {
    pub const MIN_POINTS: usize = 16;

    /// `nx x ny` grid on the `2π x 2π` torus.
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        Self::with_lengths(nx, ny, TAU, TAU)
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn with_lengths(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        check_pow2(nx, Self::MIN_POINTS)?;
        check_pow2(ny, Self::MIN_POINTS)?;
        for l in [lx, ly] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(SpectralError::BadLength(l));
            }
        }
        Ok(Self { nx, ny, lx, ly })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Physical coordinates of grid node `idx` (row-major, x fastest).
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let (iy, ix) = (idx / self.nx, idx % self.nx);
        (ix as f64 * self.dx(), iy as f64 * self.dy())
    }

    /// Integer wavevector of spectral slot `idx`.
    pub fn mode(&self, idx: usize) -> (i64, i64) {
        let (iy, ix) = (idx / self.nx, idx % self.nx);
        (signed_index(ix, self.nx), signed_index(iy, self.ny))
    }

    /// Slot index of integer wavevector `(mx, my)` (taken modulo the grid).
    pub fn slot(&self, mx: i64, my: i64) -> usize {
        let ix = mx.rem_euclid(self.nx as i64) as usize;
        let iy = my.rem_euclid(self.ny as i64) as usize;
        iy * self.nx + ix
    }

    /// Physical wavevector used for first derivatives (Nyquist zeroed).
    pub fn deriv_k(&self, idx: usize) -> (f64, f64) {
        let (iy, ix) = (idx / self.nx, idx % self.nx);
        (
            derivative_index(ix, self.nx) as f64 * TAU / self.lx,
            derivative_index(iy, self.ny) as f64 * TAU / self.ly,
        )
    }

    /// `|k|²` with physical scaling; used by the Laplacian.
    pub fn k2(&self, idx: usize) -> f64 {
        let (mx, my) = self.mode(idx);
        let kx = mx as f64 * TAU / self.lx;
        let ky = my as f64 * TAU / self.ly;
        kx * kx + ky * ky
    }

    /// Largest physical wavenumber magnitude on either axis.
    pub fn k_max(&self) -> f64 {
        (self.nx as f64 / 2.0 * TAU / self.lx).max(self.ny as f64 / 2.0 * TAU / self.ly)
    }

    /// True when the mode survives the 2/3 truncation.
    pub fn in_dealias_band(&self, idx: usize) -> bool {
        let (mx, my) = self.mode(idx);
        3 * mx.unsigned_abs() as usize <= self.nx && 3 * my.unsigned_abs() as usize <= self.ny
    }

    pub fn fft(&self) -> FftNd {
        FftNd::new(&[self.ny, self.nx])
    }
}

/// Scalar vorticity on the 2-torus, stored as Fourier-series coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct VorticityField2D {
    grid: Grid2,
    omega_hat: Vec<Complex64>,
}

impl VorticityField2D {
    pub fn zeros(grid: Grid2) -> Self {
        Self {
            grid,
            omega_hat: vec![ZERO; grid.len()],
        }
    }

    /// Builds the field from coefficients, pinning the mean mode to zero.
    pub fn from_spectral(grid: Grid2, mut omega_hat: Vec<Complex64>) -> Result<Self> {
        if omega_hat.len() != grid.len() {
            return Err(SpectralError::ShapeMismatch {
                expected: grid.len(),
                got: omega_hat.len(),
            });
        }
        omega_hat[0] = ZERO;
        Ok(Self { grid, omega_hat })
    }

    pub fn from_physical(grid: Grid2, samples: &[f64]) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(SpectralError::ShapeMismatch {
                expected: grid.len(),
                got: samples.len(),
            });
        }
        Self::from_spectral(grid, grid.fft().forward_real(samples))
    }

    /// Samples `f(x, y)` on the grid.
    pub fn from_fn(grid: Grid2, f: impl Fn(f64, f64) -> f64) -> Self {
        let samples: Vec<f64> = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.coords(i);
                f(x, y)
            })
            .collect();
        Self::from_physical(grid, &samples).expect("shape matches grid")
    }

    /// Vorticity of the stream function `ψ(x, y)`, i.e. `ω = −Δψ`.
    pub fn from_stream_fn(grid: Grid2, psi: impl Fn(f64, f64) -> f64) -> Self {
        let mut w = Self::from_fn(grid, psi);
        for (i, c) in w.omega_hat.iter_mut().enumerate() {
            *c *= grid.k2(i);
        }
        w.omega_hat[0] = ZERO;
        w
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.omega_hat
    }

    /// Mutable coefficient access. Callers must keep the array Hermitian;
    /// the mean mode is re-pinned by [`VorticityField2D::pin_mean`].
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.omega_hat
    }

    pub fn pin_mean(&mut self) {
        self.omega_hat[0] = ZERO;
    }

    pub fn to_physical(&self) -> Vec<f64> {
        self.grid.fft().inverse_real(&self.omega_hat)
    }

    /// Stream function coefficients, `ψ̂ = ω̂/|k|²`.
    pub fn stream_hat(&self) -> Vec<Complex64> {
        self.omega_hat
            .iter()
            .enumerate()
            .map(|(i, &w)| if i == 0 { ZERO } else { w / self.grid.k2(i) })
            .collect()
    }

    pub fn stream_function(&self) -> Vec<f64> {
        self.grid.fft().inverse_real(&self.stream_hat())
    }

    /// `(∂xω, ∂yω)` on the grid.
    pub fn gradient(&self) -> (Vec<f64>, Vec<f64>) {
        let fft = self.grid.fft();
        let mut gx = Vec::with_capacity(self.grid.len());
        let mut gy = Vec::with_capacity(self.grid.len());
        for (i, &w) in self.omega_hat.iter().enumerate() {
            let (kx, ky) = self.grid.deriv_k(i);
            gx.push(Complex64::new(0.0, kx) * w);
            gy.push(Complex64::new(0.0, ky) * w);
        }
        (fft.inverse_real(&gx), fft.inverse_real(&gy))
    }

    /// Largest pointwise `|∇ω|`.
    pub fn max_gradient(&self) -> f64 {
        let (gx, gy) = self.gradient();
        gx.iter()
            .zip(&gy)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    /// L² norm of the coefficient array (Parseval, up to the domain area).
    pub fn coeff_norm(&self) -> f64 {
        self.omega_hat.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Spectral velocity `(û, v̂)` of a 2D field.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity2D {
    pub grid: Grid2,
    pub u_hat: Vec<Complex64>,
    pub v_hat: Vec<Complex64>,
}

impl Velocity2D {
    pub fn to_physical(&self) -> (Vec<f64>, Vec<f64>) {
        let fft = self.grid.fft();
        (fft.inverse_real(&self.u_hat), fft.inverse_real(&self.v_hat))
    }

    /// Spectral curl `∂x v − ∂y u`.
    pub fn curl_hat(&self) -> Vec<Complex64> {
        (0..self.grid.len())
            .map(|i| {
                let (kx, ky) = self.grid.deriv_k(i);
                Complex64::new(0.0, kx) * self.v_hat[i] - Complex64::new(0.0, ky) * self.u_hat[i]
            })
            .collect()
    }

    /// Spectral divergence `∂x u + ∂y v`.
    pub fn divergence_hat(&self) -> Vec<Complex64> {
        (0..self.grid.len())
            .map(|i| {
                let (kx, ky) = self.grid.deriv_k(i);
                Complex64::new(0.0, kx) * self.u_hat[i] + Complex64::new(0.0, ky) * self.v_hat[i]
            })
            .collect()
    }

    /// Evaluates the trigonometric interpolant of the velocity at `(x, y)`.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        let g = &self.grid;
        let (mut u, mut v) = (0.0, 0.0);
        // precompute phase factors per axis
        let ex: Vec<Complex64> = (0..g.nx)
            .map(|ix| {
                let k = derivative_index(ix, g.nx) as f64 * TAU / g.lx;
                Complex64::from_polar(1.0, k * x)
            })
            .collect();
        for iy in 0..g.ny {
            let ky = derivative_index(iy, g.ny) as f64 * TAU / g.ly;
            let ey = Complex64::from_polar(1.0, ky * y);
            let row = iy * g.nx;
            let (mut su, mut sv) = (ZERO, ZERO);
            for ix in 0..g.nx {
                su += self.u_hat[row + ix] * ex[ix];
                sv += self.v_hat[row + ix] * ex[ix];
            }
            u += (su * ey).re;
            v += (sv * ey).re;
        }
        (u, v)
    }
}

/// Biot–Savart in Fourier space: `û = i k_y ψ̂`, `v̂ = −i k_x ψ̂`.
pub fn velocity_from_vorticity(w: &VorticityField2D) -> Velocity2D {
    let grid = *w.grid();
    let psi = w.stream_hat();
    let mut u_hat = Vec::with_capacity(grid.len());
    let mut v_hat = Vec::with_capacity(grid.len());
    for (i, &p) in psi.iter().enumerate() {
        let (kx, ky) = grid.deriv_k(i);
        u_hat.push(Complex64::new(0.0, ky) * p);
        v_hat.push(Complex64::new(0.0, -kx) * p);
    }
    Velocity2D { grid, u_hat, v_hat }
}

/// `½∫|u|²`.
pub fn energy2d(w: &VorticityField2D) -> f64 {
    let (u, v) = velocity_from_vorticity(w).to_physical();
    let sum: f64 = u.iter().zip(&v).map(|(a, b)| a * a + b * b).sum();
    0.5 * sum * w.grid().cell_area()
}

/// `∫ω²`.
pub fn enstrophy(w: &VorticityField2D) -> f64 {
    let omega = w.to_physical();
    omega.iter().map(|x| x * x).sum::<f64>() * w.grid().cell_area()
}

/// `∫ωᵖ` for `p` in `1..=8`.
pub fn casimir_moment(w: &VorticityField2D, p: u32) -> Result<f64> {
    if !(1..=8).contains(&p) {
        return Err(SpectralError::MomentOrder(p));
    }
    let omega = w.to_physical();
    Ok(moment_of_samples(&omega, p) * w.grid().cell_area())
}

pub(crate) fn moment_of_samples(samples: &[f64], p: u32) -> f64 {
    samples.iter().map(|x| x.powi(p as i32)).sum()
}

/// 2/3-rule truncation: zeroes every mode with `|k_i| > n_i/3`.
pub fn dealias(w: &VorticityField2D) -> VorticityField2D {
    let mut out = w.clone();
    dealias_in_place(&w.grid, &mut out.omega_hat);
    out
}

pub(crate) fn dealias_in_place(grid: &Grid2, coeffs: &mut [Complex64]) {
    for (i, c) in coeffs.iter_mut().enumerate() {
        if !grid.in_dealias_band(i) {
            *c = ZERO;
        }
    }
}
