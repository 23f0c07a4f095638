//! Pseudo-spectral integration of the 2D Euler equation in vorticity form,
//!
//! `∂tω + u·∇ω = −ν_h (−Δ)ᵖ ω`,
//!
//! with RK4 for the advection term and an exact integrating factor for the
//! hyperviscous term.

mod blobs;
mod steady;
mod tracers;

pub use blobs::{detect_blobs, Blob, BlobSummary, DEFAULT_BLOB_THRESHOLD};
pub use steady::{steady_functional_fit, SteadyFit, FIT_BINS};
pub use tracers::{advect_tracers, gradient_growth, GrowthFit, TracerFrame, TracerPoint};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{
    casimir_moment, dealias_in_place, energy2d, enstrophy, velocity_from_vorticity, FftNd, Grid2,
    SpectralError, VorticityField2D,
};

/// CFL bound enforced at runtime: `dt·max|u|·k_max ≤ 0.5`.
pub const CFL_LIMIT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EulerError {
    #[error("CFL violation at t = {t}: dt·max|u|·k_max = {cfl:.4} > {limit}")]
    Cfl { t: f64, cfl: f64, limit: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stream function is constant; no functional relation to fit")]
    DegenerateStream,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerConfig {
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Hyperviscosity coefficient ν_h ≥ 0.
    pub nu_h: f64,
    /// Hyperviscosity order p, the operator is (−Δ)ᵖ.
    pub hyper_order: u32,
    /// Diagnostics are recorded every `diag_every` steps.
    pub diag_every: usize,
    /// Snapshots are kept every `snapshot_every` steps (0 disables).
    pub snapshot_every: usize,
    pub blob_threshold: f64,
    pub seed: u64,
}

impl Default for EulerConfig {
    fn default() -> Self {
        Self {
            nx: 128,
            ny: 128,
            dt: 1e-3,
            t_end: 1.0,
            nu_h: 0.0,
            hyper_order: 4,
            diag_every: 10,
            snapshot_every: 0,
            blob_threshold: DEFAULT_BLOB_THRESHOLD,
            seed: 0,
        }
    }
}

impl EulerConfig {
    pub fn grid(&self) -> Result<Grid2, EulerError> {
        Ok(Grid2::new(self.nx, self.ny)?)
    }

    pub fn validate(&self) -> Result<(), EulerError> {
        self.grid()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(EulerError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) {
            return Err(EulerError::Config(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        if !(self.nu_h >= 0.0) {
            return Err(EulerError::Config(format!("nu_h must be nonnegative, got {}", self.nu_h)));
        }
        if self.hyper_order == 0 {
            return Err(EulerError::Config("hyper_order must be at least 1".into()));
        }
        if self.diag_every == 0 {
            return Err(EulerError::Config("diag_every must be at least 1".into()));
        }
        if !(self.blob_threshold > 0.0 && self.blob_threshold < 1.0) {
            return Err(EulerError::Config(format!(
                "blob_threshold must lie in (0,1), got {}",
                self.blob_threshold
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Solver workspace for one grid; cheap to clone, one per execution context.
#[derive(Debug, Clone)]
pub struct EulerSolver {
    grid: Grid2,
    fft: FftNd,
    nu_h: f64,
    hyper_order: u32,
}

impl EulerSolver {
    pub fn new(grid: Grid2, nu_h: f64, hyper_order: u32) -> Self {
        Self {
            grid,
            fft: grid.fft(),
            nu_h,
            hyper_order,
        }
    }

    pub fn inviscid(grid: Grid2) -> Self {
        Self::new(grid, 0.0, 4)
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    fn damping_rate(&self, idx: usize) -> f64 {
        if self.nu_h == 0.0 {
            0.0
        } else {
            self.nu_h * self.grid.k2(idx).powi(self.hyper_order as i32)
        }
    }

    /// Dealiased advection term `−u·∇ω` in spectral form; also returns max|u|.
    fn advection(&self, omega_hat: &[Complex64]) -> (Vec<Complex64>, f64) {
        let g = &self.grid;
        let mut w = omega_hat.to_vec();
        dealias_in_place(g, &mut w);
        let n = g.len();
        let mut u = vec![Complex64::default(); n];
        let mut v = vec![Complex64::default(); n];
        let mut wx = vec![Complex64::default(); n];
        let mut wy = vec![Complex64::default(); n];
        for i in 1..n {
            let (kx, ky) = g.deriv_k(i);
            let psi = w[i] / g.k2(i);
            u[i] = Complex64::new(0.0, ky) * psi;
            v[i] = Complex64::new(0.0, -kx) * psi;
            wx[i] = Complex64::new(0.0, kx) * w[i];
            wy[i] = Complex64::new(0.0, ky) * w[i];
        }
        for buf in [&mut u, &mut v, &mut wx, &mut wy] {
            self.fft.inverse(buf);
        }
        let mut umax = 0.0f64;
        let mut prod: Vec<Complex64> = (0..n)
            .map(|i| {
                let (ur, vr) = (u[i].re, v[i].re);
                umax = umax.max(ur.hypot(vr));
                Complex64::new(-(ur * wx[i].re + vr * wy[i].re), 0.0)
            })
            .collect();
        self.fft.forward(&mut prod);
        dealias_in_place(g, &mut prod);
        prod[0] = Complex64::default();
        (prod, umax)
    }

    /// Full right-hand side `dω̂/dt`, including hyperviscosity.
    pub fn rhs(&self, w: &VorticityField2D) -> Vec<Complex64> {
        let (mut out, _) = self.advection(w.coeffs());
        for (i, c) in out.iter_mut().enumerate() {
            *c -= w.coeffs()[i] * self.damping_rate(i);
        }
        out
    }

    /// Courant number `dt·max|u|·k_max` of a field.
    pub fn cfl_number(&self, w: &VorticityField2D, dt: f64) -> f64 {
        let (u, v) = velocity_from_vorticity(w).to_physical();
        let umax = u.iter().zip(&v).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
        dt * umax * self.grid.k_max()
    }

    /// One integrating-factor RK4 step. Returns the new field and the CFL
    /// number measured on the initial stage.
    pub fn step_rk4_checked(&self, w: &VorticityField2D, dt: f64) -> (VorticityField2D, f64) {
        let n = self.grid.len();
        let v0 = w.coeffs();
        let (e_half, e_full): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|i| {
                let r = self.damping_rate(i);
                ((-0.5 * r * dt).exp(), (-r * dt).exp())
            })
            .unzip();
        let (k1, umax) = self.advection(v0);
        let stage: Vec<Complex64> = (0..n).map(|i| e_half[i] * (v0[i] + 0.5 * dt * k1[i])).collect();
        let (k2, _) = self.advection(&stage);
        let stage: Vec<Complex64> = (0..n).map(|i| e_half[i] * v0[i] + 0.5 * dt * k2[i]).collect();
        let (k3, _) = self.advection(&stage);
        let stage: Vec<Complex64> = (0..n).map(|i| e_full[i] * v0[i] + dt * e_half[i] * k3[i]).collect();
        let (k4, _) = self.advection(&stage);
        let mut next: Vec<Complex64> = (0..n)
            .map(|i| {
                e_full[i] * v0[i]
                    + dt / 6.0 * (e_full[i] * k1[i] + 2.0 * e_half[i] * (k2[i] + k3[i]) + k4[i])
            })
            .collect();
        dealias_in_place(&self.grid, &mut next);
        let field = VorticityField2D::from_spectral(self.grid, next).expect("shape preserved");
        (field, dt * umax * self.grid.k_max())
    }

    pub fn step_rk4(&self, w: &VorticityField2D, dt: f64) -> VorticityField2D {
        self.step_rk4_checked(w, dt).0
    }
}

/// One row of `diagnostics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub energy: f64,
    pub enstrophy: f64,
    pub c3: f64,
    pub c4: f64,
    pub max_grad: f64,
    pub n_blobs: usize,
}

impl DiagnosticRow {
    pub const CSV_HEADER: &'static str = "t,E,Omega,C3,C4,maxgrad,nblobs";

    pub fn measure(t: f64, w: &VorticityField2D, blob_threshold: f64) -> Self {
        Self {
            t,
            energy: energy2d(w),
            enstrophy: enstrophy(w),
            c3: casimir_moment(w, 3).expect("order in range"),
            c4: casimir_moment(w, 4).expect("order in range"),
            max_grad: w.max_gradient(),
            n_blobs: detect_blobs(w, blob_threshold).count(),
        }
    }

    pub fn csv(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.t, self.energy, self.enstrophy, self.c3, self.c4, self.max_grad, self.n_blobs
        )
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub field: VorticityField2D,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: Vec<DiagnosticRow>,
    pub snapshots: Vec<Snapshot>,
    pub final_field: VorticityField2D,
    pub max_cfl: f64,
}

/// Integrates `w0` to `config.t_end`. Aborts on a CFL violation.
pub fn run(config: &EulerConfig, w0: &VorticityField2D) -> Result<RunOutput, EulerError> {
    config.validate()?;
    let grid = config.grid()?;
    if *w0.grid() != grid {
        return Err(EulerError::Config("initial field grid differs from config grid".into()));
    }
    let solver = EulerSolver::new(grid, config.nu_h, config.hyper_order);
    let mut w = w0.clone();
    dealias_in_place(&grid, w.coeffs_mut());
    let steps = config.n_steps();
    let mut series = vec![DiagnosticRow::measure(0.0, &w, config.blob_threshold)];
    let mut snapshots = Vec::new();
    if config.snapshot_every > 0 {
        snapshots.push(Snapshot { t: 0.0, field: w.clone() });
    }
    let mut max_cfl = 0.0f64;
    for step in 1..=steps {
        let t_prev = (step - 1) as f64 * config.dt;
        let (next, cfl) = solver.step_rk4_checked(&w, config.dt);
        if cfl > CFL_LIMIT {
            return Err(EulerError::Cfl {
                t: t_prev,
                cfl,
                limit: CFL_LIMIT,
            });
        }
        max_cfl = max_cfl.max(cfl);
        w = next;
        let t = step as f64 * config.dt;
        if step % config.diag_every == 0 || step == steps {
            series.push(DiagnosticRow::measure(t, &w, config.blob_threshold));
        }
        if config.snapshot_every > 0 && (step % config.snapshot_every == 0 || step == steps) {
            snapshots.push(Snapshot { t, field: w.clone() });
        }
    }
    Ok(RunOutput {
        series,
        snapshots,
        final_field: w,
        max_cfl,
    })
}

/// Random vorticity with isotropic spectrum `|ω̂_k| ∝ |k|³ exp(−(|k|/k0)²)`,
/// uniform random phases, restricted to the dealiased band and scaled to
/// unit kinetic energy.
pub fn random_vorticity(grid: Grid2, seed: u64, k0: f64) -> VorticityField2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![Complex64::default(); grid.len()];
    // walk the upper half plane in a fixed order, mirroring into the lower
    for idx in 0..grid.len() {
        let (mx, my) = grid.mode(idx);
        let upper = my > 0 || (my == 0 && mx > 0);
        if !upper || !grid.in_dealias_band(idx) {
            continue;
        }
        let k = ((mx * mx + my * my) as f64).sqrt();
        let amp = k.powi(3) * (-(k / k0).powi(2)).exp();
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let c = Complex64::from_polar(amp, phase);
        coeffs[idx] = c;
        coeffs[grid.slot(-mx, -my)] = c.conj();
    }
    let mut w = VorticityField2D::from_spectral(grid, coeffs).expect("shape matches");
    let e = energy2d(&w);
    if e > 0.0 {
        let s = 1.0 / e.sqrt();
        w.coeffs_mut().iter_mut().for_each(|c| *c *= s);
    }
    w
}
