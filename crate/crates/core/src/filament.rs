//! Vortex filaments under the binormal (localized induction) equation
//! `γ_t = γ_s × γ_ss`, curvature/torsion, and the Hasimoto map
//! `ψ(s) = κ(s)·exp(i∫₀ˢ τ)`.
//!
//! A filament is sampled at `M` points of a parameter `u ∈ [0,1)`. Closed
//! curves are periodic; a curve may also repeat up to a translation
//! (`γ(u+1) = γ(u) + shift`), which is how helices are represented.
//! Derivatives are spectral on the periodic part.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::madelung::WaveFunction1D;
use crate::spectral::{derivative_index, signed_index, FftNd};

pub const MIN_POINTS: usize = 16;
/// Largest tolerated ratio between adjacent edge lengths before a step aborts.
pub const MAX_EDGE_RATIO: f64 = 4.0;
/// Curvature bound `|dt|·max κ² < 0.1`.
pub const CURVATURE_CFL: f64 = 0.1;
/// Dispersive bound `|dt|·k_max² < 2.5` (RK4 on the imaginary axis reaches 2√2).
pub const DISPERSIVE_CFL: f64 = 2.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilamentError {
    #[error("invalid filament: {0}")]
    Invalid(String),
    #[error("degenerate edge at vertex {0}")]
    DegenerateEdge(usize),
    #[error("resolution lost: adjacent edge ratio {ratio:.3} exceeds {MAX_EDGE_RATIO}")]
    ResolutionLost { ratio: f64 },
    #[error("time step {dt} too large: {reason}")]
    StepTooLarge { dt: f64, reason: String },
    #[error("curvature vanishes near vertex {index} (kappa = {kappa:e})")]
    VanishingCurvature { index: usize, kappa: f64 },
}

pub type Result<T> = std::result::Result<T, FilamentError>;

pub type Vec3 = [f64; 3];

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filament {
    pub points: Vec<Vec3>,
    /// Translation after one period; zero for closed curves.
    pub shift: Vec3,
}

/// Periodic part `γ(u) − shift·u` in Fourier space, one coefficient vector per component.
struct Series {
    m: usize,
    coeffs: [Vec<Complex64>; 3],
    shift: Vec3,
}

impl Series {
    fn new(f: &Filament, fft: &FftNd) -> Self {
        let m = f.points.len();
        let coeffs = std::array::from_fn(|c| {
            let periodic: Vec<f64> = (0..m).map(|j| f.points[j][c] - f.shift[c] * j as f64 / m as f64).collect();
            fft.forward_real(&periodic)
        });
        Self {
            m,
            coeffs,
            shift: f.shift,
        }
    }

    /// `order`-th u-derivative at the grid points (shift contributes to the first derivative only).
    fn derivative(&self, order: u32, fft: &FftNd) -> Vec<Vec3> {
        let comps: [Vec<f64>; 3] = std::array::from_fn(|c| {
            let mut d = self.coeffs[c].clone();
            for (i, z) in d.iter_mut().enumerate() {
                let k = if order % 2 == 1 {
                    derivative_index(i, self.m)
                } else {
                    signed_index(i, self.m)
                } as f64;
                *z *= Complex64::new(0.0, 2.0 * PI * k).powu(order);
            }
            let mut v = fft.inverse_real(&d);
            if order == 1 {
                v.iter_mut().for_each(|x| *x += self.shift[c]);
            }
            v
        });
        (0..self.m).map(|j| [comps[0][j], comps[1][j], comps[2][j]]).collect()
    }

    /// Value and first derivative at an arbitrary parameter.
    fn eval(&self, u: f64) -> (Vec3, Vec3) {
        let mut val = [0.0; 3];
        let mut der = [0.0; 3];
        for i in 0..self.m {
            let k = signed_index(i, self.m) as f64;
            let e = Complex64::from_polar(1.0, 2.0 * PI * k * u);
            let nyquist = self.m % 2 == 0 && i == self.m / 2;
            for c in 0..3 {
                let z = self.coeffs[c][i];
                if nyquist {
                    // real cosine mode; no derivative
                    val[c] += z.re * (PI * self.m as f64 * u).cos();
                } else {
                    let w = z * e;
                    val[c] += w.re;
                    der[c] += (w * Complex64::new(0.0, 2.0 * PI * k)).re;
                }
            }
        }
        for c in 0..3 {
            val[c] += self.shift[c] * u;
            der[c] += self.shift[c];
        }
        (val, der)
    }
}

/// Real periodic series of a scalar, with antiderivative evaluation.
struct ScalarSeries {
    m: usize,
    coeffs: Vec<Complex64>,
}

impl ScalarSeries {
    fn new(samples: &[f64], fft: &FftNd) -> Self {
        Self {
            m: samples.len(),
            coeffs: fft.forward_real(samples),
        }
    }

    fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// ∫₀ᵘ of the series.
    fn integral(&self, u: f64) -> f64 {
        let mut s = self.mean() * u;
        for i in 1..self.m {
            let k = signed_index(i, self.m) as f64;
            if self.m % 2 == 0 && i == self.m / 2 {
                s += self.coeffs[i].re * (PI * self.m as f64 * u).sin() / (PI * self.m as f64);
            } else {
                let ik = Complex64::new(0.0, 2.0 * PI * k);
                s += (self.coeffs[i] * (Complex64::from_polar(1.0, 2.0 * PI * k * u) - 1.0) / ik).re;
            }
        }
        s
    }

    /// ∫₀ᵘ at every grid point `u_j = j/m`, spectrally.
    fn integral_on_grid(&self, fft: &FftNd) -> Vec<f64> {
        let mut anti = self.coeffs.clone();
        anti[0] = Complex64::default();
        for (i, z) in anti.iter_mut().enumerate().skip(1) {
            let k = derivative_index(i, self.m) as f64;
            *z = if k == 0.0 { Complex64::default() } else { *z / Complex64::new(0.0, 2.0 * PI * k) };
        }
        let prim = fft.inverse_real(&anti);
        (0..self.m).map(|j| self.mean() * j as f64 / self.m as f64 + prim[j] - prim[0]).collect()
    }
}

impl Filament {
    pub fn new(points: Vec<Vec3>, shift: Vec3) -> Result<Self> {
        let m = points.len();
        if m < MIN_POINTS {
            return Err(FilamentError::Invalid(format!("need at least {MIN_POINTS} points, got {m}")));
        }
        if points.iter().flatten().chain(&shift).any(|x| !x.is_finite()) {
            return Err(FilamentError::Invalid("non-finite coordinate".into()));
        }
        let f = Self { points, shift };
        f.edge_lengths()?;
        Ok(f)
    }

    pub fn closed(points: Vec<Vec3>) -> Result<Self> {
        Self::new(points, [0.0; 3])
    }

    /// Samples `g(u)` at `M` uniform parameters and regrids to uniform arclength.
    pub fn from_fn(m: usize, shift: Vec3, g: impl Fn(f64) -> Vec3) -> Result<Self> {
        let pts = (0..m).map(|j| g(j as f64 / m as f64)).collect();
        Self::new(pts, shift)?.reparametrized()
    }

    pub fn circle(radius: f64, m: usize) -> Result<Self> {
        Self::closed((0..m).map(|j| {
            let a = 2.0 * PI * j as f64 / m as f64;
            [radius * a.cos(), radius * a.sin(), 0.0]
        })
        .collect())
    }

    /// One turn of the helix `(a cos φ, a sin φ, b φ)`, repeating with shift `2πb ẑ`.
    pub fn helix(a: f64, b: f64, m: usize) -> Result<Self> {
        Self::new(
            (0..m)
                .map(|j| {
                    let p = 2.0 * PI * j as f64 / m as f64;
                    [a * p.cos(), a * p.sin(), b * p]
                })
                .collect(),
            [0.0, 0.0, 2.0 * PI * b],
        )
    }

    pub fn ellipse(a: f64, b: f64, m: usize) -> Result<Self> {
        Self::from_fn(m, [0.0; 3], |u| {
            let p = 2.0 * PI * u;
            [a * p.cos(), b * p.sin(), 0.0]
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.shift == [0.0; 3]
    }

    fn edge(&self, j: usize) -> Vec3 {
        let m = self.len();
        let next = if j + 1 == m {
            let p = self.points[0];
            [p[0] + self.shift[0], p[1] + self.shift[1], p[2] + self.shift[2]]
        } else {
            self.points[j + 1]
        };
        let p = self.points[j];
        [next[0] - p[0], next[1] - p[1], next[2] - p[2]]
    }

    pub fn edge_lengths(&self) -> Result<Vec<f64>> {
        let scale = self.points.iter().flatten().fold(1.0f64, |a, x| a.max(x.abs()));
        (0..self.len())
            .map(|j| {
                let l = norm(self.edge(j));
                if l <= 1e-14 * scale {
                    Err(FilamentError::DegenerateEdge(j))
                } else {
                    Ok(l)
                }
            })
            .collect()
    }

    /// Spectral length of one period.
    pub fn length(&self) -> f64 {
        let fft = FftNd::new(&[self.len()]);
        let d1 = Series::new(self, &fft).derivative(1, &fft);
        d1.iter().map(|d| norm(*d)).sum::<f64>() / self.len() as f64
    }

    /// `½ ∮ γ × γ' ds` (closed curves).
    pub fn impulse(&self) -> Vec3 {
        let fft = FftNd::new(&[self.len()]);
        let d1 = Series::new(self, &fft).derivative(1, &fft);
        let mut p = [0.0; 3];
        for (x, d) in self.points.iter().zip(&d1) {
            let c = cross(*x, *d);
            for k in 0..3 {
                p[k] += 0.5 * c[k] / self.len() as f64;
            }
        }
        p
    }

    /// Regrid to uniform arclength, keeping vertex 0 fixed.
    pub fn reparametrized(&self) -> Result<Self> {
        let m = self.len();
        let fft = FftNd::new(&[m]);
        let series = Series::new(self, &fft);
        let speed: Vec<f64> = series.derivative(1, &fft).iter().map(|d| norm(*d)).collect();
        let sp = ScalarSeries::new(&speed, &fft);
        let total = sp.mean();
        let mut pts = Vec::with_capacity(m);
        for j in 0..m {
            let target = total * j as f64 / m as f64;
            let mut u = j as f64 / m as f64;
            for _ in 0..20 {
                let (_, d) = series.eval(u);
                let du = (sp.integral(u) - target) / norm(d);
                u -= du;
                if du.abs() < 1e-15 {
                    break;
                }
            }
            pts.push(series.eval(u).0);
        }
        Filament::new(pts, self.shift)
    }

    pub fn max_edge_ratio(&self) -> Result<f64> {
        let e = self.edge_lengths()?;
        let m = e.len();
        Ok((0..m).map(|j| {
            let (a, b) = (e[j], e[(j + 1) % m]);
            a.max(b) / a.min(b)
        })
        .fold(1.0, f64::max))
    }

    pub fn reversed(&self) -> Self {
        let m = self.len();
        let points = (0..m)
            .map(|j| {
                if j == 0 {
                    self.points[0]
                } else {
                    let p = self.points[m - j];
                    // reversed traversal of a translating curve: γ'(u) = γ(−u)
                    [p[0] - self.shift[0], p[1] - self.shift[1], p[2] - self.shift[2]]
                }
            })
            .collect();
        Self {
            points,
            shift: [-self.shift[0], -self.shift[1], -self.shift[2]],
        }
    }

    pub fn translated(&self, by: Vec3) -> Self {
        Self {
            points: self.points.iter().map(|p| [p[0] + by[0], p[1] + by[1], p[2] + by[2]]).collect(),
            shift: self.shift,
        }
    }

    /// Rotation by an orthogonal matrix (rows).
    pub fn rotated(&self, r: [[f64; 3]; 3]) -> Self {
        let ap = |p: Vec3| [dot(r[0], p), dot(r[1], p), dot(r[2], p)];
        Self {
            points: self.points.iter().map(|p| ap(*p)).collect(),
            shift: ap(self.shift),
        }
    }
}

/// Frenet data at each vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Frenet {
    pub curvature: Vec<f64>,
    pub torsion: Vec<f64>,
    pub length: f64,
    /// Principal normals (zero where curvature vanishes).
    pub normals: Vec<Vec3>,
}

/// Curvature and torsion from spectral derivatives, valid in any parametrization.
pub fn frenet(f: &Filament) -> Frenet {
    let fft = FftNd::new(&[f.len()]);
    let s = Series::new(f, &fft);
    let (d1, d2, d3) = (s.derivative(1, &fft), s.derivative(2, &fft), s.derivative(3, &fft));
    let mut curvature = Vec::with_capacity(f.len());
    let mut torsion = Vec::with_capacity(f.len());
    let mut normals = Vec::with_capacity(f.len());
    for j in 0..f.len() {
        let c = cross(d1[j], d2[j]);
        let sp = norm(d1[j]);
        let cn = dot(c, c);
        curvature.push(cn.sqrt() / sp.powi(3));
        torsion.push(if cn > 0.0 { dot(c, d3[j]) / cn } else { 0.0 });
        let nv = cross(c, d1[j]);
        let nn = norm(nv);
        normals.push(if nn > 0.0 { [nv[0] / nn, nv[1] / nn, nv[2] / nn] } else { [0.0; 3] });
    }
    let length = d1.iter().map(|d| norm(*d)).sum::<f64>() / f.len() as f64;
    Frenet {
        curvature,
        torsion,
        length,
        normals,
    }
}

/// `γ_s × γ_ss = γ_u × γ_uu / |γ_u|³` at each vertex.
pub fn binormal_rhs(f: &Filament) -> Result<Vec<Vec3>> {
    f.edge_lengths()?;
    let fft = FftNd::new(&[f.len()]);
    let s = Series::new(f, &fft);
    let (d1, d2) = (s.derivative(1, &fft), s.derivative(2, &fft));
    Ok(d1
        .iter()
        .zip(&d2)
        .map(|(a, b)| {
            let c = cross(*a, *b);
            let n3 = norm(*a).powi(3);
            [c[0] / n3, c[1] / n3, c[2] / n3]
        })
        .collect())
}

fn check_step(f: &Filament, dt: f64) -> Result<()> {
    let fr = frenet(f);
    let kmax = fr.curvature.iter().fold(0.0f64, |a, k| a.max(*k));
    if dt.abs() * kmax * kmax >= CURVATURE_CFL {
        return Err(FilamentError::StepTooLarge {
            dt,
            reason: format!("dt*max(kappa)^2 = {:.3e} >= {CURVATURE_CFL}", dt.abs() * kmax * kmax),
        });
    }
    let kgrid = PI * f.len() as f64 / fr.length;
    if dt.abs() * kgrid * kgrid >= DISPERSIVE_CFL {
        return Err(FilamentError::StepTooLarge {
            dt,
            reason: format!("dt*(pi M/L)^2 = {:.3e} >= {DISPERSIVE_CFL}", dt.abs() * kgrid * kgrid),
        });
    }
    Ok(())
}

fn axpy(f: &Filament, k: &[Vec3], h: f64) -> Filament {
    Filament {
        points: f
            .points
            .iter()
            .zip(k)
            .map(|(p, v)| [p[0] + h * v[0], p[1] + h * v[1], p[2] + h * v[2]])
            .collect(),
        shift: f.shift,
    }
}

/// Classical RK4 step (negative `dt` runs backwards), then uniform-arclength regridding.
pub fn step_rk4(f: &Filament, dt: f64) -> Result<Filament> {
    check_step(f, dt)?;
    let k1 = binormal_rhs(f)?;
    let k2 = binormal_rhs(&axpy(f, &k1, 0.5 * dt))?;
    let k3 = binormal_rhs(&axpy(f, &k2, 0.5 * dt))?;
    let k4 = binormal_rhs(&axpy(f, &k3, dt))?;
    let mut next = f.clone();
    for j in 0..f.len() {
        for c in 0..3 {
            next.points[j][c] += dt / 6.0 * (k1[j][c] + 2.0 * k2[j][c] + 2.0 * k3[j][c] + k4[j][c]);
        }
    }
    let ratio = next.max_edge_ratio()?;
    if ratio > MAX_EDGE_RATIO {
        return Err(FilamentError::ResolutionLost { ratio });
    }
    next.reparametrized()
}

/// Hasimoto wave function on the arclength grid, phase zero at vertex 0.
/// Expects a uniform-arclength filament.
pub fn hasimoto(f: &Filament) -> Result<WaveFunction1D> {
    let fr = frenet(f);
    let kmax = fr.curvature.iter().fold(0.0f64, |a, k| a.max(*k));
    if let Some(index) = fr.curvature.iter().position(|k| *k <= 1e-8 * kmax.max(1e-300)) {
        return Err(FilamentError::VanishingCurvature {
            index,
            kappa: fr.curvature[index],
        });
    }
    // a normal flipping between neighbours means κ passed through zero
    let m = f.len();
    if let Some(index) = (0..m).position(|j| dot(fr.normals[j], fr.normals[(j + 1) % m]) < 0.0) {
        return Err(FilamentError::VanishingCurvature {
            index,
            kappa: fr.curvature[index].min(fr.curvature[(index + 1) % m]),
        });
    }
    let fft = FftNd::new(&[f.len()]);
    // ∫τ ds over the uniform grid: integrate τ·L in u
    let tl: Vec<f64> = fr.torsion.iter().map(|t| t * fr.length).collect();
    let phase = ScalarSeries::new(&tl, &fft).integral_on_grid(&fft);
    let samples = fr.curvature.iter().zip(&phase).map(|(k, p)| Complex64::from_polar(*k, *p)).collect();
    WaveFunction1D::new(fr.length, samples).map_err(|e| FilamentError::Invalid(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilamentDiagnostic {
    pub t: f64,
    pub length: f64,
    pub impulse: Vec3,
}

impl FilamentDiagnostic {
    pub const CSV_HEADER: &'static str = "t,length,impulse_x,impulse_y,impulse_z";

    pub fn measure(t: f64, f: &Filament) -> Self {
        Self {
            t,
            length: f.length(),
            impulse: f.impulse(),
        }
    }

    pub fn csv(&self) -> String {
        crate::io::csv_row(&[self.t, self.length, self.impulse[0], self.impulse[1], self.impulse[2]])
    }
}

/// Evolves `steps` steps, recording diagnostics every `every` steps, and
/// returns the final filament together with geometry snapshots at the same cadence.
pub fn run(f: &Filament, dt: f64, steps: usize, every: usize) -> Result<(Vec<FilamentDiagnostic>, Vec<(f64, Filament)>)> {
    let every = every.max(1);
    let mut cur = f.reparametrized()?;
    let mut diags = vec![FilamentDiagnostic::measure(0.0, &cur)];
    let mut snaps = vec![(0.0, cur.clone())];
    for s in 1..=steps {
        cur = step_rk4(&cur, dt)?;
        if s % every == 0 || s == steps {
            let t = s as f64 * dt;
            diags.push(FilamentDiagnostic::measure(t, &cur));
            snaps.push((t, cur.clone()));
        }
    }
    Ok((diags, snaps))
}

/// Random smooth closed curve: a circle plus a few low Fourier modes.
pub fn random_knot(m: usize, seed: u64) -> Result<Filament> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<[f64; 6]> = (2..=4).map(|_| std::array::from_fn(|_| rng.random_range(-0.06..0.06))).collect();
    Filament::from_fn(m, [0.0; 3], |u| {
        let p = 2.0 * PI * u;
        let mut x = [p.cos(), p.sin(), 0.0];
        for (i, c) in modes.iter().enumerate() {
            let k = (i + 2) as f64;
            for d in 0..3 {
                x[d] += c[2 * d] * (k * p).cos() + c[2 * d + 1] * (k * p).sin();
            }
        }
        x
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_degenerate() {
        assert!(Filament::circle(1.0, 8).is_err());
        let mut pts: Vec<Vec3> = Filament::circle(1.0, 16).unwrap().points;
        pts[3] = pts[2];
        assert!(matches!(Filament::closed(pts), Err(FilamentError::DegenerateEdge(2))));
    }

    #[test]
    fn circle_moves_along_axis_at_inverse_radius() {
        let r = 1.7;
        let f = Filament::circle(r, 64).unwrap();
        let v = binormal_rhs(&f).unwrap();
        for w in &v {
            assert!(w[0].abs() < 1e-12 && w[1].abs() < 1e-12);
            assert!((w[2] - 1.0 / r).abs() < 1e-12);
        }
    }

    #[test]
    fn large_circle_velocity_vanishes() {
        let speeds: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&r| norm(binormal_rhs(&Filament::circle(r, 32).unwrap()).unwrap()[0]))
            .collect();
        assert!((speeds[2] - 1e-3).abs() < 1e-12);
        assert!(speeds.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn velocity_is_normal_to_tangent() {
        let f = random_knot(64, 2).unwrap();
        let fft = FftNd::new(&[64]);
        let d1 = Series::new(&f, &fft).derivative(1, &fft);
        for (v, t) in binormal_rhs(&f).unwrap().iter().zip(&d1) {
            assert!(dot(*v, *t).abs() < 1e-10 * norm(*v) * norm(*t));
        }
    }

    #[test]
    fn circle_rk4_preserves_radius() {
        let m = 256;
        let mut f = Filament::circle(1.0, m).unwrap();
        let dt = 1e-4;
        for _ in 0..1000 {
            f = step_rk4(&f, dt).unwrap();
        }
        let t = 1000.0 * dt;
        let zc = f.points.iter().map(|p| p[2]).sum::<f64>() / m as f64;
        assert!((zc - t).abs() < 1e-10, "{zc}");
        for p in &f.points {
            assert!(((p[0].hypot(p[1])) - 1.0).abs() < 1e-8);
        }
        // translation speed from the drift of the centre
        assert!((zc / t - 1.0).abs() < 1e-6);
    }

    #[test]
    fn step_limits() {
        let f = Filament::circle(1.0, 256).unwrap();
        assert!(matches!(step_rk4(&f, 1e-3), Err(FilamentError::StepTooLarge { .. })));
        let small = Filament::circle(0.1, 16).unwrap();
        assert!(matches!(step_rk4(&small, 0.02), Err(FilamentError::StepTooLarge { .. })));
    }

    #[test]
    fn reversed_orientation_mirrors_time() {
        let f = random_knot(64, 5).unwrap();
        let dt = 5e-4;
        let mut a = f.clone();
        let mut b = f.reversed();
        for _ in 0..20 {
            a = step_rk4(&a, -dt).unwrap();
            b = step_rk4(&b, dt).unwrap();
        }
        let br = b.reversed();
        for (p, q) in a.points.iter().zip(&br.points) {
            for c in 0..3 {
                assert!((p[c] - q[c]).abs() < 1e-12, "{p:?} {q:?}");
            }
        }
    }

    #[test]
    fn knot_conserves_length_and_impulse() {
        let f = random_knot(128, 11).unwrap();
        let dt = 2e-4;
        let steps = 1000;
        let (diags, _) = run(&f, dt, steps, 100).unwrap();
        let t = dt * steps as f64;
        let (l0, p0) = (diags[0].length, diags[0].impulse);
        let last = diags.last().unwrap();
        assert!(((last.length - l0) / l0).abs() / t < 1e-6, "{} {}", l0, last.length);
        let pn = norm(p0);
        for c in 0..3 {
            assert!((last.impulse[c] - p0[c]).abs() / pn / t < 1e-6, "{p0:?} {:?}", last.impulse);
        }
    }

    #[test]
    fn helix_moves_as_rigid_screw() {
        let (a, b): (f64, f64) = (1.0, 0.5);
        let m = 64;
        let c = (a * a + b * b).sqrt();
        let kappa = a / (c * c);
        // velocity κB: axial speed κa/c, angular speed −κb/(ca)
        let (vz, omega) = (kappa * a / c, -kappa * b / (c * a));
        let mut f = Filament::helix(a, b, m).unwrap();
        let dt = 1e-3;
        let steps = 500;
        for _ in 0..steps {
            f = step_rk4(&f, dt).unwrap();
        }
        let t = dt * steps as f64;
        // every vertex lies on the screwed helix: undo the motion, then compare with the helix
        for p in &f.points {
            let z = p[2] - vz * t;
            let (ca, sa) = ((-omega * t).cos(), (-omega * t).sin());
            let (x, y) = (ca * p[0] - sa * p[1], sa * p[0] + ca * p[1]);
            let phi = y.atan2(x);
            assert!((x.hypot(y) - a).abs() < 1e-10);
            // z ≡ bφ modulo the pitch
            let d = (z - b * phi).rem_euclid(2.0 * PI * b);
            assert!(d.min(2.0 * PI * b - d) < 1e-10, "{d}");
        }
        assert_eq!(f.shift, [0.0, 0.0, 2.0 * PI * b]);
    }

    #[test]
    fn hasimoto_of_circle_and_helix() {
        let r = 2.0;
        let psi = hasimoto(&Filament::circle(r, 32).unwrap()).unwrap();
        for z in &psi.samples {
            assert!((z - Complex64::new(1.0 / r, 0.0)).norm() < 1e-12);
        }
        let (a, b) = (1.0, 0.5);
        let c2 = a * a + b * b;
        let (k0, t0) = (a / c2, b / c2);
        let psi = hasimoto(&Filament::helix(a, b, 64).unwrap()).unwrap();
        for (j, z) in psi.samples.iter().enumerate() {
            let s = psi.x(j);
            assert!((z - Complex64::from_polar(k0, t0 * s)).norm() < 1e-12);
        }
        assert!((psi.length - 2.0 * PI * c2.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hasimoto_of_ellipse_is_real_curvature() {
        let (a, b) = (2.0, 1.0);
        let m = 256;
        let f = Filament::ellipse(a, b, m).unwrap();
        let psi = hasimoto(&f).unwrap();
        for (p, z) in f.points.iter().zip(&psi.samples) {
            let phi = (p[1] / b).atan2(p[0] / a);
            let kappa = a * b / (a * a * phi.sin().powi(2) + b * b * phi.cos().powi(2)).powf(1.5);
            assert!(z.im.abs() < 1e-9, "{z}");
            assert!((z.re - kappa).abs() < 1e-9, "{} {kappa}", z.re);
        }
    }

    #[test]
    fn hasimoto_rigid_motion_invariance() {
        let f = random_knot(64, 3).unwrap();
        let psi = hasimoto(&f).unwrap();
        let (c, s) = (0.6f64, 0.8f64);
        let r = [[c, -s, 0.0], [s * 0.0 + s, c, 0.0], [0.0, 0.0, 1.0]];
        let g = f.rotated(r).translated([1.0, -2.0, 0.5]);
        let phi = hasimoto(&g).unwrap();
        for (x, y) in psi.samples.iter().zip(&phi.samples) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn inflection_has_no_hasimoto_image() {
        // kidney-shaped planar curve: r = 1 + 0.6 cos 2φ has inflections
        let f = Filament::from_fn(128, [0.0; 3], |u| {
            let p = 2.0 * PI * u;
            let r = 1.0 + 0.6 * (2.0 * p).cos();
            [r * p.cos(), r * p.sin(), 0.0]
        })
        .unwrap();
        assert!(matches!(hasimoto(&f), Err(FilamentError::VanishingCurvature { .. })));
    }

    #[test]
    fn regridding_gives_uniform_edges() {
        let f = Filament::ellipse(2.0, 1.0, 128).unwrap();
        let fft = FftNd::new(&[128]);
        let speed: Vec<f64> = Series::new(&f, &fft).derivative(1, &fft).iter().map(|d| norm(*d)).collect();
        let l = f.length();
        let dev = speed.iter().fold(0.0f64, |a, s| a.max((s / l - 1.0).abs()));
        assert!(dev < 1e-8, "{dev:e}");
        assert!((f.length() - f.reparametrized().unwrap().length()).abs() < 1e-12);
    }
}
