//! SU(N) sine-bracket truncation of 2D Euler on the flat torus.
//!
//! Construction (N odd, `ζ = exp(4πi/N)`):
//!
//! * clock `h = diag(ζ⁰, ζ¹, …, ζᴺ⁻¹)` and shift `g e_j = e_{j+1}`, so `h g = ζ g h`
//! * `T_m = ζ^{m₁m₂/2} g^{m₂} h^{m₁}` with `ζ^{1/2} := exp(2πi/N)`; each `T_m`
//!   is unitary, `T_m† = T_{−m}`, `tr(T_m† T_l) = N δ_{ml}`, and `T_(1,0) = h`
//! * `[T_k, T_l] = 2i sin(2π(k×l)/N) T_{k+l}` with `k×l = k₁l₂ − k₂l₁`
//!
//! A band-limited vorticity `ω = Σ ω̂_k e^{ik·x}` maps to the skew-Hermitian,
//! traceless matrix `W = −i (N/4π) Σ ω̂_k T_k`. With this scaling the Lax
//! equation `Ẇ = [P, W]`, `Δ_N P = W`, reproduces `∂tω = {ψ, ω}` (with
//! `ω = −Δψ`) as `N → ∞`. `Δ_N` is diagonal on `T_k` with eigenvalue `−|k̄|²`,
//! `k̄` the symmetric representative in `[−(N−1)/2, (N−1)/2]²`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::spectral::{Grid2, VorticityField2D};

pub type CMatrix = DMatrix<Complex64>;

/// Fixed-point iterations allowed in [`step_isospectral`].
pub const MAX_FIXED_POINT_ITERS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZeitlinError {
    #[error("matrix size N = {0} must be odd and at least 3")]
    BadSize(usize),
    #[error("wavevector ({0}, {1}) is zero modulo N")]
    ZeroMode(i64, i64),
    #[error("field has energy in mode ({0}, {1}) outside the band |k_i| <= {2}")]
    BandLimit(i64, i64, i64),
    #[error("grid {0}x{1} cannot hold the band of N = {2} (needs 2π-periodic grid with n > N)")]
    Grid(usize, usize, usize),
    #[error("matrix is not skew-Hermitian/traceless (deviation {0:e})")]
    NotSkewHermitian(f64),
    #[error("isospectral fixed-point iteration did not converge in {0} iterations (last change {1:e})")]
    NotConverged(usize, f64),
}

pub type Result<T> = std::result::Result<T, ZeitlinError>;

fn check_n(n: usize) -> Result<()> {
    if n < 3 || n % 2 == 0 {
        return Err(ZeitlinError::BadSize(n));
    }
    Ok(())
}

/// Symmetric representative of `m mod n` in `[−(n−1)/2, (n−1)/2]`.
fn sym(m: i64, n: usize) -> i64 {
    let n = n as i64;
    let r = m.rem_euclid(n);
    if r > n / 2 {
        r - n
    } else {
        r
    }
}

/// Explicit `T_k`. Mostly for tests and small N; the dynamics never build it.
pub fn basis_matrix(n: usize, k: (i64, i64)) -> Result<CMatrix> {
    check_n(n)?;
    let (k1, k2) = (k.0.rem_euclid(n as i64), k.1.rem_euclid(n as i64));
    if k1 == 0 && k2 == 0 {
        return Err(ZeitlinError::ZeroMode(k.0, k.1));
    }
    let mut t = CMatrix::zeros(n, n);
    for b in 0..n {
        let a = (b as i64 + k2).rem_euclid(n as i64) as usize;
        let phase = TAU * ((k1 * k2 + 2 * k1 * b as i64).rem_euclid(n as i64) as f64) / n as f64;
        t[(a, b)] = Complex64::from_polar(1.0, phase);
    }
    Ok(t)
}

/// `[T_k, T_l] = c T_{k+l}` rescaled by `N/4πi`, which tends to `k×l` as `N → ∞`.
pub fn bracket_structure_constant(n: usize, k: (i64, i64), l: (i64, i64)) -> Result<f64> {
    let tk = basis_matrix(n, k)?;
    let tl = basis_matrix(n, l)?;
    let tkl = basis_matrix(n, (k.0 + l.0, k.1 + l.1))?;
    let comm = &tk * &tl - &tl * &tk;
    let c = (tkl.adjoint() * comm).trace() / n as f64;
    Ok((c * Complex64::new(0.0, -(n as f64) / (4.0 * PI))).re)
}

/// Quantized vorticity: N×N skew-Hermitian traceless matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeitlinState {
    pub n: usize,
    pub w: CMatrix,
}

impl ZeitlinState {
    pub fn new(w: CMatrix) -> Result<Self> {
        let n = w.nrows();
        check_n(n)?;
        let dev = skew_deviation(&w);
        if dev > 1e-10 * w.camax().max(1.0) {
            return Err(ZeitlinError::NotSkewHermitian(dev));
        }
        Ok(Self { n, w })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(Self {
            n,
            w: CMatrix::zeros(n, n),
        })
    }

    /// Deviation from skew-Hermitian plus |trace|.
    pub fn structure_deviation(&self) -> f64 {
        skew_deviation(&self.w)
    }
}

fn skew_deviation(w: &CMatrix) -> f64 {
    let herm = (w + w.adjoint()).camax();
    herm + w.trace().norm() / w.nrows() as f64
}

fn reproject(w: &mut CMatrix) {
    let n = w.nrows();
    let a = w.adjoint();
    *w = (&*w - a) * Complex64::new(0.5, 0.0);
    let tr = w.trace() / n as f64;
    for i in 0..n {
        w[(i, i)] -= tr;
    }
}

/// Precomputed transforms between mode coefficients and matrices for one N.
#[derive(Clone)]
pub struct ZeitlinModel {
    n: usize,
    scale: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ZeitlinModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZeitlinModel").field("n", &self.n).finish()
    }
}

/// Mode coefficients indexed `[m1 mod N][m2 mod N]`.
pub type ModeArray = Vec<Complex64>;

impl ZeitlinModel {
    pub fn new(n: usize) -> Result<Self> {
        check_n(n)?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            scale: n as f64 / (4.0 * PI),
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `N/4π`, the factor between `W` and `−i Σ ω̂_k T_k`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn slot(&self, m1: i64, m2: i64) -> usize {
        let n = self.n as i64;
        (m1.rem_euclid(n) * n + m2.rem_euclid(n)) as usize
    }

    /// `W = −i·scale·Σ c_m T_m`.
    pub fn matrix_from_modes(&self, modes: &[Complex64]) -> CMatrix {
        let n = self.n;
        let mut w = CMatrix::zeros(n, n);
        let mut line = vec![Complex64::default(); n];
        let two_inv = (n + 1) / 2; // inverse of 2 mod n
        // T_m lives on the m2-th subdiagonal; along it the phase is a DFT in m1
        for m2 in 0..n {
            for (j, slot) in line.iter_mut().enumerate() {
                let m1 = (j * two_inv) % n;
                let phase = TAU * ((m1 * m2) % n) as f64 / n as f64;
                *slot = modes[m1 * n + m2] * Complex64::from_polar(1.0, phase);
            }
            self.inv.process(&mut line);
            for (b, v) in line.iter().enumerate() {
                w[((b + m2) % n, b)] = Complex64::new(0.0, -self.scale) * v;
            }
        }
        w
    }

    /// Inverse of [`ZeitlinModel::matrix_from_modes`]: `c_m = tr(T_m† W)/(−i·scale·N)`.
    pub fn modes_from_matrix(&self, w: &CMatrix) -> ModeArray {
        let n = self.n;
        let mut modes = vec![Complex64::default(); n * n];
        let mut line = vec![Complex64::default(); n];
        let two_inv = (n + 1) / 2;
        let norm = Complex64::new(0.0, -self.scale * n as f64);
        for m2 in 0..n {
            for (b, slot) in line.iter_mut().enumerate() {
                *slot = w[((b + m2) % n, b)];
            }
            self.fwd.process(&mut line);
            for (j, v) in line.iter().enumerate() {
                let m1 = (j * two_inv) % n;
                let phase = -TAU * ((m1 * m2) % n) as f64 / n as f64;
                modes[m1 * n + m2] = v * Complex64::from_polar(1.0, phase) / norm;
            }
        }
        modes
    }

    /// Eigenvalue of `Δ_N` on `T_m`.
    pub fn laplacian_eigenvalue(&self, m1: usize, m2: usize) -> f64 {
        let (a, b) = (sym(m1 as i64, self.n), sym(m2 as i64, self.n));
        -((a * a + b * b) as f64)
    }

    /// `P = Δ_N⁻¹ W`.
    pub fn stream_matrix(&self, w: &CMatrix) -> CMatrix {
        let mut modes = self.modes_from_matrix(w);
        let n = self.n;
        for m1 in 0..n {
            for m2 in 0..n {
                let idx = m1 * n + m2;
                if m1 == 0 && m2 == 0 {
                    modes[idx] = Complex64::default();
                } else {
                    modes[idx] /= self.laplacian_eigenvalue(m1, m2);
                }
            }
        }
        self.matrix_from_modes(&modes)
    }

    /// `dW/dt = [P, W]`.
    pub fn rhs(&self, w: &CMatrix) -> CMatrix {
        let p = self.stream_matrix(w);
        &p * w - w * &p
    }

    /// Quantized kinetic energy `−2π² tr(P†W)/(scale² N)`; equals `½∫|u|²`
    /// of the corresponding band-limited field.
    pub fn energy(&self, w: &CMatrix) -> f64 {
        let p = self.stream_matrix(w);
        let tr = (p.adjoint() * w).trace();
        -2.0 * PI * PI * tr.re / (self.scale * self.scale * self.n as f64)
    }

    pub fn to_matrix(&self, field: &VorticityField2D) -> Result<ZeitlinState> {
        let grid = field.grid();
        let n = self.n;
        if (grid.lx - TAU).abs() > 1e-12 || (grid.ly - TAU).abs() > 1e-12 || grid.nx <= n || grid.ny <= n {
            return Err(ZeitlinError::Grid(grid.nx, grid.ny, n));
        }
        let band = ((n - 1) / 2) as i64;
        let coeffs = field.coeffs();
        let tol = 1e-12 * field.coeff_norm().max(1e-300);
        let mut modes = vec![Complex64::default(); n * n];
        for (idx, c) in coeffs.iter().enumerate() {
            let (mx, my) = grid.mode(idx);
            if mx.abs() > band || my.abs() > band {
                if c.norm() > tol {
                    return Err(ZeitlinError::BandLimit(mx, my, band));
                }
                continue;
            }
            modes[self.slot(mx, my)] = *c;
        }
        modes[0] = Complex64::default();
        Ok(ZeitlinState {
            n,
            w: self.matrix_from_modes(&modes),
        })
    }

    pub fn from_matrix(&self, state: &ZeitlinState, grid: Grid2) -> Result<VorticityField2D> {
        let n = self.n;
        if (grid.lx - TAU).abs() > 1e-12 || (grid.ly - TAU).abs() > 1e-12 || grid.nx <= n || grid.ny <= n {
            return Err(ZeitlinError::Grid(grid.nx, grid.ny, n));
        }
        let modes = self.modes_from_matrix(&state.w);
        let mut coeffs = vec![Complex64::default(); grid.len()];
        for m1 in 0..n {
            for m2 in 0..n {
                let (a, b) = (sym(m1 as i64, n), sym(m2 as i64, n));
                coeffs[grid.slot(a, b)] = modes[m1 * n + m2];
            }
        }
        Ok(VorticityField2D::from_spectral(grid, coeffs).expect("shape matches"))
    }
}

/// Convenience wrapper: `to_matrix(w, N)`.
pub fn to_matrix(field: &VorticityField2D, n: usize) -> Result<ZeitlinState> {
    ZeitlinModel::new(n)?.to_matrix(field)
}

/// Convenience wrapper: `from_matrix(W)` on an `nx x ny` 2π-torus grid.
pub fn from_matrix(state: &ZeitlinState, grid: Grid2) -> Result<VorticityField2D> {
    ZeitlinModel::new(state.n)?.from_matrix(state, grid)
}

pub fn zeitlin_rhs(state: &ZeitlinState) -> Result<CMatrix> {
    Ok(ZeitlinModel::new(state.n)?.rhs(&state.w))
}

/// Real Casimirs `tr((−iW)^k)` for `k = 2..=5` (−iW is Hermitian).
pub fn casimir_traces(w: &CMatrix) -> [f64; 4] {
    let h = w * Complex64::new(0.0, -1.0);
    let mut p = h.clone();
    let mut out = [0.0; 4];
    for slot in out.iter_mut() {
        p = &p * &h;
        *slot = p.trace().re;
    }
    out
}

/// Eigenvalues of the Hermitian matrix `−iW`, ascending.
pub fn spectrum(w: &CMatrix) -> Vec<f64> {
    let h = w * Complex64::new(0.0, -1.0);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Isospectral midpoint step: solve `W = (I − h/2 P̃) W̃ (I + h/2 P̃)` for `W̃` by
/// fixed-point iteration, then return `Q W Q†` with the Cayley transform
/// `Q = (I − h/2 P̃)⁻¹ (I + h/2 P̃)`.
pub fn step_isospectral(model: &ZeitlinModel, state: &ZeitlinState, dt: f64) -> Result<ZeitlinState> {
    let n = state.n;
    let w = &state.w;
    let half = Complex64::new(0.5 * dt, 0.0);
    let quarter = Complex64::new(0.25 * dt * dt, 0.0);
    let scale = w.camax().max(1e-300);
    let mut wt = w.clone();
    let mut p = model.stream_matrix(&wt);
    let mut converged = false;
    let mut last = f64::INFINITY;
    for _ in 0..MAX_FIXED_POINT_ITERS {
        let comm = &p * &wt - &wt * &p;
        let next = w + comm * half + (&p * &wt * &p) * quarter;
        last = (&next - &wt).camax() / scale;
        wt = next;
        p = model.stream_matrix(&wt);
        if last <= 1e-14 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ZeitlinError::NotConverged(MAX_FIXED_POINT_ITERS, last));
    }
    let id = identity(n);
    let plus = &id + &p * half;
    let minus = &id - &p * half;
    let minus_inv = minus.try_inverse().ok_or(ZeitlinError::NotConverged(0, f64::NAN))?;
    let q = minus_inv * plus;
    let mut next = &q * w * q.adjoint();
    reproject(&mut next);
    Ok(ZeitlinState { n, w: next })
}

/// Classical RK4 on the Lax equation; kept as a cross-check of the isospectral scheme.
pub fn step_rk4(model: &ZeitlinModel, state: &ZeitlinState, dt: f64) -> ZeitlinState {
    let w = &state.w;
    let h = Complex64::new(dt, 0.0);
    let half = Complex64::new(0.5 * dt, 0.0);
    let k1 = model.rhs(w);
    let k2 = model.rhs(&(w + &k1 * half));
    let k3 = model.rhs(&(w + &k2 * half));
    let k4 = model.rhs(&(w + &k3 * h));
    let mut next = w + (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4) * (h / 6.0);
    reproject(&mut next);
    ZeitlinState { n: state.n, w: next }
}

/// Random band-limited state with mode amplitudes decaying like `exp(−|k|²/k0²)`,
/// scaled to unit quantized energy.
pub fn random_state(model: &ZeitlinModel, seed: u64, k0: f64) -> ZeitlinState {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let n = model.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = vec![Complex64::default(); n * n];
    let band = ((n - 1) / 2) as i64;
    for a in -band..=band {
        for b in -band..=band {
            let upper = b > 0 || (b == 0 && a > 0);
            if !upper {
                continue;
            }
            let k2 = (a * a + b * b) as f64;
            let amp = (-k2 / (k0 * k0)).exp();
            let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * amp;
            modes[model.slot(a, b)] = c;
            modes[model.slot(-a, -b)] = c.conj();
        }
    }
    let w = model.matrix_from_modes(&modes);
    let e = model.energy(&w);
    ZeitlinState {
        n,
        w: w * Complex64::new(1.0 / e.sqrt(), 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Isospectral,
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeitlinConfig {
    pub n: usize,
    pub dt: f64,
    pub steps: usize,
    pub diag_every: usize,
    pub integrator: Integrator,
}

impl Default for ZeitlinConfig {
    fn default() -> Self {
        Self {
            n: 33,
            dt: 0.01,
            steps: 1000,
            diag_every: 10,
            integrator: Integrator::Isospectral,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeitlinDiagnostic {
    pub t: f64,
    pub energy: f64,
    /// `tr((−iW)^k)` for k = 2..5.
    pub traces: [f64; 4],
}

impl ZeitlinDiagnostic {
    pub const CSV_HEADER: &'static str = "t,energy,tr2,tr3,tr4,tr5";

    pub fn measure(model: &ZeitlinModel, t: f64, state: &ZeitlinState) -> Self {
        Self {
            t,
            energy: model.energy(&state.w),
            traces: casimir_traces(&state.w),
        }
    }

    pub fn csv(&self) -> String {
        let mut v = vec![self.t, self.energy];
        v.extend_from_slice(&self.traces);
        crate::io::csv_row(&v)
    }
}

/// Largest relative deviation of each diagnostic column from its initial value.
pub fn relative_drift(series: &[ZeitlinDiagnostic]) -> (f64, [f64; 4]) {
    let first = series[0];
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let mut e = 0.0f64;
    let mut tr = [0.0f64; 4];
    for row in series {
        e = e.max(rel(row.energy, first.energy));
        for k in 0..4 {
            tr[k] = tr[k].max(rel(row.traces[k], first.traces[k]));
        }
    }
    (e, tr)
}

pub fn run(config: &ZeitlinConfig, initial: &ZeitlinState) -> Result<(Vec<ZeitlinDiagnostic>, ZeitlinState)> {
    let model = ZeitlinModel::new(config.n)?;
    if initial.n != config.n {
        return Err(ZeitlinError::BadSize(initial.n));
    }
    let every = config.diag_every.max(1);
    let mut state = initial.clone();
    let mut series = vec![ZeitlinDiagnostic::measure(&model, 0.0, &state)];
    for step in 1..=config.steps {
        state = match config.integrator {
            Integrator::Isospectral => step_isospectral(&model, &state, config.dt)?,
            Integrator::Rk4 => step_rk4(&model, &state, config.dt),
        };
        if step % every == 0 || step == config.steps {
            series.push(ZeitlinDiagnostic::measure(&model, step as f64 * config.dt, &state));
        }
    }
    Ok((series, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cross(k: (i64, i64), l: (i64, i64)) -> i64 {
        k.0 * l.1 - k.1 * l.0
    }

    #[test]
    fn basis_matrices_are_unitary_and_orthogonal() {
        let n = 5;
        let id = CMatrix::identity(n, n);
        for k1 in 0..5 {
            for k2 in 0..5 {
                if k1 == 0 && k2 == 0 {
                    assert!(basis_matrix(n, (k1, k2)).is_err());
                    continue;
                }
                let t = basis_matrix(n, (k1, k2)).unwrap();
                assert!((t.adjoint() * &t - &id).camax() < 1e-14);
                let tm = basis_matrix(n, (-k1, -k2)).unwrap();
                assert!((t.adjoint() - &tm).camax() < 1e-14);
                assert!(t.trace().norm() < 1e-14);
            }
        }
        assert!(basis_matrix(4, (1, 0)).is_err());
    }

    #[test]
    fn k10_is_the_clock_matrix() {
        let t = basis_matrix(5, (0, 1)).unwrap();
        for b in 0..5 {
            assert!((t[((b + 1) % 5, b)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let h = basis_matrix(5, (1, 0)).unwrap();
        let zeta = Complex64::from_polar(1.0, 2.0 * TAU / 5.0);
        for j in 0..5 {
            assert!((h[(j, j)] - zeta.powi(j as i32)).norm() < 1e-14);
        }
        assert!((h.clone() - CMatrix::from_diagonal(&h.diagonal())).camax() < 1e-15);
    }

    #[test]
    fn sine_bracket_by_direct_multiplication() {
        let n = 5;
        for k in [(1, 0), (1, 2), (2, 3), (4, 1)] {
            for l in [(0, 1), (2, 1), (3, 3), (1, 4)] {
                if (k.0 + l.0) % 5 == 0 && (k.1 + l.1) % 5 == 0 {
                    continue;
                }
                let tk = basis_matrix(n, k).unwrap();
                let tl = basis_matrix(n, l).unwrap();
                let tkl = basis_matrix(n, (k.0 + l.0, k.1 + l.1)).unwrap();
                let lhs = &tk * &tl - &tl * &tk;
                let coeff = Complex64::new(0.0, 2.0 * (TAU * cross(k, l) as f64 / n as f64).sin());
                let rhs = tkl * coeff;
                assert!((lhs - rhs).camax() < 1e-13, "k={k:?} l={l:?}");
            }
        }
    }

    #[test]
    fn structure_constant_converges_at_second_order() {
        let (k, l) = ((1, 0), (1, 1));
        let exact = cross(k, l) as f64;
        let errs: Vec<f64> = [17, 33, 65]
            .iter()
            .map(|&n| ((bracket_structure_constant(n, k, l).unwrap() - exact) / exact).abs())
            .collect();
        for (w, ns) in errs.windows(2).zip([(17.0f64, 33.0f64), (33.0, 65.0)]) {
            let order = (w[0] / w[1]).ln() / (ns.1 / ns.0).ln();
            assert!(order > 1.9, "order {order}");
        }
    }

    #[test]
    fn mode_transforms_match_explicit_basis() {
        let model = ZeitlinModel::new(5).unwrap();
        let mut modes = vec![Complex64::default(); 25];
        modes[model.slot(1, 2)] = Complex64::new(0.3, -0.2);
        modes[model.slot(-1, -2)] = Complex64::new(0.3, 0.2);
        modes[model.slot(2, 0)] = Complex64::new(0.0, 0.5);
        modes[model.slot(-2, 0)] = Complex64::new(0.0, -0.5);
        let w = model.matrix_from_modes(&modes);
        let mut explicit = CMatrix::zeros(5, 5);
        for (a, b) in [(1, 2), (-1, -2), (2, 0), (-2, 0)] {
            explicit += basis_matrix(5, (a, b)).unwrap() * modes[model.slot(a, b)];
        }
        explicit *= Complex64::new(0.0, -model.scale());
        assert!((&w - &explicit).camax() < 1e-14);
        let back = model.modes_from_matrix(&w);
        for (x, y) in back.iter().zip(&modes) {
            assert!((x - y).norm() < 1e-14);
        }
        assert!(ZeitlinState::new(w).is_ok());
    }

    #[test]
    fn field_round_trip() {
        let grid = Grid2::square(32).unwrap();
        let n = 9;
        let field = crate::spectral::dealias(&crate::euler2d::random_vorticity(grid, 3, 2.0));
        // strip modes above the band
        let mut coeffs = field.coeffs().to_vec();
        for (i, c) in coeffs.iter_mut().enumerate() {
            let (a, b) = grid.mode(i);
            if a.abs() > 4 || b.abs() > 4 {
                *c = Complex64::default();
            }
        }
        let field = VorticityField2D::from_spectral(grid, coeffs).unwrap();
        let state = to_matrix(&field, n).unwrap();
        let back = from_matrix(&state, grid).unwrap();
        let err = field
            .coeffs()
            .iter()
            .zip(back.coeffs())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12 * field.coeff_norm());
        // single mode → proportional to T_(1,0)
        let cos_x = VorticityField2D::from_fn(grid, |x, _| x.cos());
        let w = to_matrix(&cos_x, 5).unwrap().w;
        let expected = (basis_matrix(5, (1, 0)).unwrap() + basis_matrix(5, (-1, 0)).unwrap())
            * Complex64::new(0.0, -0.5 * 5.0 / (4.0 * PI));
        assert!((w - expected).camax() < 1e-14);
        // band violation
        let high = VorticityField2D::from_fn(grid, |x, _| (5.0 * x).cos());
        assert!(matches!(to_matrix(&high, 9), Err(ZeitlinError::BandLimit(..))));
        assert_eq!(to_matrix(&VorticityField2D::zeros(grid), 9).unwrap().w, CMatrix::zeros(9, 9));
    }

    #[test]
    fn single_mode_is_steady() {
        let model = ZeitlinModel::new(7).unwrap();
        let w = (basis_matrix(7, (2, 1)).unwrap() + basis_matrix(7, (-2, -1)).unwrap()) * Complex64::new(0.0, 1.0);
        let state = ZeitlinState::new(w.clone()).unwrap();
        assert!(model.rhs(&w).camax() < 1e-13);
        let next = step_isospectral(&model, &state, 0.1).unwrap();
        assert!((next.w - w).camax() < 1e-12);
    }

    /// Hand-expanded sine bracket for a two-mode state.
    #[test]
    fn two_mode_rhs_matches_sine_bracket() {
        let n = 5;
        let model = ZeitlinModel::new(n).unwrap();
        let (k, l) = ((1i64, 0i64), (0i64, 1i64));
        let (a, b) = (0.7, -0.4);
        let mut modes = vec![Complex64::default(); 25];
        for (m, c) in [(k, a), (l, b)] {
            modes[model.slot(m.0, m.1)] = Complex64::new(c, 0.0);
            modes[model.slot(-m.0, -m.1)] = Complex64::new(c, 0.0);
        }
        let w = model.matrix_from_modes(&modes);
        // P = −i s Σ p_m T_m with p_m = c_m / (−|m|²); both modes have |m|² = 1
        // [P, W] = (−i s)² Σ_{m,m'} p_m c_m' [T_m, T_m'] = −s² Σ p_m c_m' (2i sin(2π m×m'/N)) T_{m+m'}
        let s = model.scale();
        let mut expected = CMatrix::zeros(n, n);
        let terms = [(k, a), ((-k.0, -k.1), a), (l, b), ((-l.0, -l.1), b)];
        for &(m, cm) in &terms {
            for &(mp, cmp) in &terms {
                let x = cross(m, mp);
                if x % n as i64 == 0 {
                    continue;
                }
                let coeff = -s * s * (-cm) * cmp * Complex64::new(0.0, 2.0 * (TAU * x as f64 / n as f64).sin());
                expected += basis_matrix(n, (m.0 + mp.0, m.1 + mp.1)).unwrap() * coeff;
            }
        }
        assert!((model.rhs(&w) - expected).camax() < 1e-13);
    }

    /// The matrix tendency approaches the pseudo-spectral Euler tendency at rate 1/N².
    #[test]
    fn rhs_converges_to_euler_tendency() {
        let grid = Grid2::square(64).unwrap();
        let field = VorticityField2D::from_fn(grid, |x, y| x.cos() + 0.6 * (x + y).sin() + 0.3 * (2.0 * y).cos());
        let euler = crate::euler2d::EulerSolver::inviscid(grid).rhs(&field);
        let norm = euler.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let errs: Vec<f64> = [17usize, 33]
            .iter()
            .map(|&n| {
                let model = ZeitlinModel::new(n).unwrap();
                let w = model.to_matrix(&field).unwrap();
                let rhs = ZeitlinState { n, w: model.rhs(&w.w) };
                let back = model.from_matrix(&rhs, grid).unwrap();
                back.coeffs().iter().zip(&euler).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / norm
            })
            .collect();
        assert!(errs[1] < 0.05, "{errs:?}");
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn invariants_have_zero_directional_derivative() {
        let model = ZeitlinModel::new(9).unwrap();
        let state = random_state(&model, 5, 3.0);
        let rhs = model.rhs(&state.w);
        assert!(skew_deviation(&rhs) < 1e-12);
        let eps = 1e-6;
        let plus = &state.w + &rhs * Complex64::new(eps, 0.0);
        let minus = &state.w - &rhs * Complex64::new(eps, 0.0);
        let e_scale = model.energy(&state.w);
        let de = (model.energy(&plus) - model.energy(&minus)) / (2.0 * eps);
        assert!(de.abs() < 1e-7 * e_scale, "{de}");
        let (cp, cm, c0) = (casimir_traces(&plus), casimir_traces(&minus), casimir_traces(&state.w));
        for k in 0..4 {
            let d = (cp[k] - cm[k]) / (2.0 * eps);
            assert!(d.abs() < 1e-6 * c0[k].abs().max(1e-3), "k={} d={d}", k + 2);
        }
    }

    #[test]
    fn energy_matches_continuum_energy() {
        let grid = Grid2::square(32).unwrap();
        let field = VorticityField2D::from_fn(grid, |x, y| x.cos() + 0.5 * (x + 2.0 * y).sin());
        let model = ZeitlinModel::new(9).unwrap();
        let state = model.to_matrix(&field).unwrap();
        let e = crate::spectral::energy2d(&field);
        assert!((model.energy(&state.w) - e).abs() < 1e-12 * e);
    }

    #[test]
    fn isospectral_step_preserves_spectrum_and_structure() {
        let model = ZeitlinModel::new(11).unwrap();
        let mut state = random_state(&model, 2, 3.0);
        let ev0 = spectrum(&state.w);
        for _ in 0..200 {
            state = step_isospectral(&model, &state, 0.02).unwrap();
        }
        let ev1 = spectrum(&state.w);
        let scale = ev0.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in ev0.iter().zip(&ev1) {
            assert!((a - b).abs() < 1e-12 * scale.max(1.0));
        }
        assert!(state.structure_deviation() < 1e-13);
    }

    #[test]
    fn run_conserves_casimirs_and_energy() {
        let config = ZeitlinConfig {
            n: 17,
            dt: 0.01,
            steps: 300,
            diag_every: 10,
            integrator: Integrator::Isospectral,
        };
        let model = ZeitlinModel::new(17).unwrap();
        let (series, _) = run(&config, &random_state(&model, 11, 3.0)).unwrap();
        assert_eq!(series.len(), 31);
        let (e, tr) = relative_drift(&series);
        assert!(e < 1e-6, "{e}");
        assert!(tr.iter().all(|&x| x < 1e-10), "{tr:?}");
    }

    #[test]
    fn isospectral_and_rk4_agree_for_short_times() {
        let model = ZeitlinModel::new(9).unwrap();
        let s0 = random_state(&model, 8, 3.0);
        let (mut a, mut b) = (s0.clone(), s0);
        for _ in 0..50 {
            a = step_isospectral(&model, &a, 0.005).unwrap();
            b = step_rk4(&model, &b, 0.005);
        }
        assert!((&a.w - &b.w).camax() < 1e-5 * b.w.camax());
    }
}
