//! Kirchhoff point vortices on the plane, upper half-plane, unit sphere and the
//! flat torus `[0, 2π)²`.
//!
//! Sign conventions: a positive circulation rotates its neighbours
//! counter-clockwise. Planar Hamiltonian `H = −(1/4π) Σ_{i≠j} ΓᵢΓⱼ ln|xᵢ − xⱼ|`
//! with `Γᵢ ẋᵢ = ∂H/∂yᵢ`, `Γᵢ ẏᵢ = −∂H/∂xᵢ`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum allowed separation before a step is aborted.
pub const COLLISION_DISTANCE: f64 = 1e-9;
/// Rows of the torus kernel summed on each side of the primary cell.
const TORUS_ROWS: i64 = 8;
const TORUS_AREA: f64 = 4.0 * PI * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Plane,
    HalfPlane,
    Sphere,
    Torus,
}

impl Geometry {
    pub const ALL: [Geometry; 4] = [Geometry::Plane, Geometry::HalfPlane, Geometry::Sphere, Geometry::Torus];

    /// Coordinates per vortex.
    pub fn dim(self) -> usize {
        if self == Geometry::Sphere {
            3
        } else {
            2
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Geometry::Plane => "plane",
            Geometry::HalfPlane => "half_plane",
            Geometry::Sphere => "sphere",
            Geometry::Torus => "torus",
        })
    }
}

impl FromStr for Geometry {
    type Err = PvError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane" => Ok(Geometry::Plane),
            "half_plane" | "half-plane" | "halfplane" => Ok(Geometry::HalfPlane),
            "sphere" => Ok(Geometry::Sphere),
            "torus" => Ok(Geometry::Torus),
            other => Err(PvError::Invalid(format!("unknown geometry '{other}'"))),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PvError {
    #[error("invalid vortex system: {0}")]
    Invalid(String),
    #[error("vortices {i} and {j} closer than {COLLISION_DISTANCE:e} (separation {sep:e})")]
    Collision { i: usize, j: usize, sep: f64 },
    #[error("step size underflow at t = {t}: collapse candidate")]
    Collapse { t: f64 },
    #[error("tolerance {0:e} outside [1e-13, 1e-6]")]
    Tolerance(f64),
}

pub type Result<T> = std::result::Result<T, PvError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexSystem {
    pub geometry: Geometry,
    /// Flat coordinates, `geometry.dim()` per vortex. Torus positions are kept unwrapped.
    pub positions: Vec<f64>,
    pub strengths: Vec<f64>,
}

impl VortexSystem {
    pub fn new(geometry: Geometry, mut positions: Vec<f64>, strengths: Vec<f64>) -> Result<Self> {
        let d = geometry.dim();
        if strengths.is_empty() || positions.len() != d * strengths.len() {
            return Err(PvError::Invalid(format!(
                "{} coordinates for {} vortices in dimension {d}",
                positions.len(),
                strengths.len()
            )));
        }
        if positions.iter().chain(&strengths).any(|x| !x.is_finite()) {
            return Err(PvError::Invalid("non-finite input".into()));
        }
        match geometry {
            Geometry::HalfPlane => {
                if let Some(i) = (0..strengths.len()).find(|&i| positions[2 * i + 1] <= 0.0) {
                    return Err(PvError::Invalid(format!("vortex {i} not in the upper half-plane")));
                }
            }
            Geometry::Sphere => {
                for p in positions.chunks_mut(3) {
                    let r = norm3(p);
                    if (r - 1.0).abs() > 1e-6 {
                        return Err(PvError::Invalid(format!("sphere position has norm {r}")));
                    }
                    p.iter_mut().for_each(|x| *x /= r);
                }
            }
            Geometry::Torus => {
                let total: f64 = strengths.iter().sum();
                let scale: f64 = strengths.iter().map(|g| g.abs()).sum();
                if total.abs() > 1e-12 * scale.max(1e-300) {
                    return Err(PvError::Invalid(format!("torus requires zero total circulation, got {total}")));
                }
            }
            Geometry::Plane => {}
        }
        let sys = Self {
            geometry,
            positions,
            strengths,
        };
        check_separation(geometry, &sys.positions)?;
        Ok(sys)
    }

    pub fn len(&self) -> usize {
        self.strengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strengths.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        let d = self.geometry.dim();
        &self.positions[d * i..d * (i + 1)]
    }

    pub fn min_separation(&self) -> f64 {
        min_separation(self.geometry, &self.positions).0
    }

    fn with_positions(&self, positions: Vec<f64>) -> Self {
        Self {
            geometry: self.geometry,
            positions,
            strengths: self.strengths.clone(),
        }
    }
}

fn norm3(p: &[f64]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

fn distance(geometry: Geometry, a: &[f64], b: &[f64]) -> f64 {
    match geometry {
        Geometry::Sphere => ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt(),
        Geometry::Torus => wrap(a[0] - b[0]).hypot(wrap(a[1] - b[1])),
        _ => (a[0] - b[0]).hypot(a[1] - b[1]),
    }
}

fn min_separation(geometry: Geometry, pos: &[f64]) -> (f64, usize, usize) {
    let d = geometry.dim();
    let n = pos.len() / d;
    let mut best = (f64::INFINITY, 0, 0);
    for i in 0..n {
        for j in i + 1..n {
            let r = distance(geometry, &pos[d * i..d * i + d], &pos[d * j..d * j + d]);
            if r < best.0 {
                best = (r, i, j);
            }
        }
    }
    best
}

fn check_separation(geometry: Geometry, pos: &[f64]) -> Result<()> {
    let (sep, i, j) = min_separation(geometry, pos);
    if sep < COLLISION_DISTANCE {
        return Err(PvError::Collision { i, j, sep });
    }
    Ok(())
}

/// Numerically stable `cot w`.
fn cot(w: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    if w.im > 0.0 {
        let q = (2.0 * i * w).exp();
        i * (q + 1.0) / (q - 1.0)
    } else {
        let q = (-2.0 * i * w).exp();
        -i * (q + 1.0) / (q - 1.0)
    }
}

/// Velocity induced at displacement `(dx, dy)` (already wrapped) by a unit torus vortex:
/// symmetric sum of periodic rows plus the linear term that makes it doubly periodic.
pub fn torus_kernel(dx: f64, dy: f64) -> (f64, f64) {
    let z = Complex64::new(dx, dy);
    let mut s = Complex64::default();
    for n in -TORUS_ROWS..=TORUS_ROWS {
        s += cot((z - Complex64::new(0.0, TAU * n as f64)) / 2.0);
    }
    // u − iv = s / (4πi)
    let w = s / Complex64::new(0.0, 4.0 * PI);
    (w.re + dy / TORUS_AREA, -w.im)
}

/// Torus Green's function (stream function of a unit vortex), up to an additive constant.
pub fn torus_green(dx: f64, dy: f64) -> f64 {
    let mut acc = 0.0;
    for n in -TORUS_ROWS..=TORUS_ROWS {
        let w = Complex64::new(dx, dy - TAU * n as f64);
        let i = Complex64::new(0.0, 1.0);
        if n == 0 {
            acc += (w / 2.0).sin().norm().ln();
        } else {
            // ln|sin(w/2)| − |Im w|/2 + ln 2 = ln|1 − e^{±iw}|
            let q = if w.im >= 0.0 { (i * w).exp() } else { (-i * w).exp() };
            acc += (Complex64::new(1.0, 0.0) - q).norm().ln();
        }
    }
    -acc / TAU + dy * dy / (2.0 * TORUS_AREA)
}

fn plane_pair(d: (f64, f64)) -> (f64, f64) {
    let r2 = d.0 * d.0 + d.1 * d.1;
    (-d.1 / (TAU * r2), d.0 / (TAU * r2))
}

fn velocity(geometry: Geometry, strengths: &[f64], pos: &[f64], out: &mut [f64]) -> Result<()> {
    check_separation(geometry, pos)?;
    let n = strengths.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    match geometry {
        Geometry::Plane | Geometry::HalfPlane | Geometry::Torus => {
            for i in 0..n {
                let (xi, yi) = (pos[2 * i], pos[2 * i + 1]);
                let (mut u, mut v) = (0.0, 0.0);
                for j in 0..n {
                    let g = strengths[j];
                    let (xj, yj) = (pos[2 * j], pos[2 * j + 1]);
                    if j != i {
                        let k = match geometry {
                            Geometry::Torus => torus_kernel(wrap(xi - xj), wrap(yi - yj)),
                            _ => plane_pair((xi - xj, yi - yj)),
                        };
                        u += g * k.0;
                        v += g * k.1;
                    }
                    if geometry == Geometry::HalfPlane {
                        // image of strength −Γⱼ at (xⱼ, −yⱼ), self-image included
                        let k = plane_pair((xi - xj, yi + yj));
                        u -= g * k.0;
                        v -= g * k.1;
                    }
                }
                out[2 * i] = u;
                out[2 * i + 1] = v;
            }
        }
        Geometry::Sphere => {
            for i in 0..n {
                let xi = &pos[3 * i..3 * i + 3];
                let mut acc = [0.0; 3];
                for j in (0..n).filter(|&j| j != i) {
                    let xj = &pos[3 * j..3 * j + 3];
                    let dot = xi[0] * xj[0] + xi[1] * xj[1] + xi[2] * xj[2];
                    let c = strengths[j] / (4.0 * PI * (1.0 - dot));
                    acc[0] += c * (xj[1] * xi[2] - xj[2] * xi[1]);
                    acc[1] += c * (xj[2] * xi[0] - xj[0] * xi[2]);
                    acc[2] += c * (xj[0] * xi[1] - xj[1] * xi[0]);
                }
                out[3 * i..3 * i + 3].copy_from_slice(&acc);
            }
        }
    }
    Ok(())
}

/// Velocities of all vortices, flat like `positions`.
pub fn rhs(sys: &VortexSystem) -> Result<Vec<f64>> {
    let mut out = vec![0.0; sys.positions.len()];
    velocity(sys.geometry, &sys.strengths, &sys.positions, &mut out)?;
    Ok(out)
}

/// First integrals. `momentum` is `ΣΓᵢxᵢ` (plane and torus, with unwrapped torus
/// positions); `angular` is `ΣΓᵢ|xᵢ|²` (plane); `moment` is `ΣΓᵢxᵢ` on the sphere;
/// on the half-plane `momentum` holds `(ΣΓᵢyᵢ, NaN)` where only the first entry is conserved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedSet {
    pub energy: f64,
    pub momentum: Option<[f64; 2]>,
    pub angular: Option<f64>,
    pub moment: Option<[f64; 3]>,
}

impl ConservedSet {
    /// Named scalar integrals, in a fixed order.
    pub fn values(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![("H", self.energy)];
        if let Some(p) = self.momentum {
            out.push(("Px", p[0]));
            if p[1].is_finite() {
                out.push(("Py", p[1]));
            }
        }
        if let Some(l) = self.angular {
            out.push(("L", l));
        }
        if let Some(m) = self.moment {
            out.extend([("Mx", m[0]), ("My", m[1]), ("Mz", m[2])]);
        }
        out
    }
}

pub fn conserved(sys: &VortexSystem) -> ConservedSet {
    let n = sys.len();
    let g = &sys.strengths;
    let p = &sys.positions;
    let mut energy = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let gij = g[i] * g[j];
            energy += match sys.geometry {
                Geometry::Plane | Geometry::HalfPlane => -gij * (p[2 * i] - p[2 * j]).hypot(p[2 * i + 1] - p[2 * j + 1]).ln() / TAU,
                Geometry::Sphere => {
                    let dot: f64 = (0..3).map(|k| p[3 * i + k] * p[3 * j + k]).sum();
                    -gij * (2.0 - 2.0 * dot).ln() / (4.0 * PI)
                }
                Geometry::Torus => gij * torus_green(wrap(p[2 * i] - p[2 * j]), wrap(p[2 * i + 1] - p[2 * j + 1])),
            };
        }
    }
    if sys.geometry == Geometry::HalfPlane {
        for i in 0..n {
            for j in 0..n {
                let r = (p[2 * i] - p[2 * j]).hypot(p[2 * i + 1] + p[2 * j + 1]);
                energy += g[i] * g[j] * r.ln() / (4.0 * PI);
            }
        }
    }
    let weighted = |k: usize, d: usize| (0..n).map(|i| g[i] * p[d * i + k]).sum::<f64>();
    match sys.geometry {
        Geometry::Plane => ConservedSet {
            energy,
            momentum: Some([weighted(0, 2), weighted(1, 2)]),
            angular: Some((0..n).map(|i| g[i] * (p[2 * i].powi(2) + p[2 * i + 1].powi(2))).sum()),
            moment: None,
        },
        Geometry::HalfPlane => ConservedSet {
            energy,
            momentum: Some([weighted(1, 2), f64::NAN]),
            angular: None,
            moment: None,
        },
        Geometry::Torus => ConservedSet {
            energy,
            momentum: Some([weighted(0, 2), weighted(1, 2)]),
            angular: None,
            moment: None,
        },
        Geometry::Sphere => ConservedSet {
            energy,
            momentum: None,
            angular: None,
            moment: Some([weighted(0, 3), weighted(1, 3), weighted(2, 3)]),
        },
    }
}

/// Natural magnitude for each integral, used to turn drifts into relative numbers.
fn integral_scales(sys: &VortexSystem) -> Vec<f64> {
    let g2: f64 = sys.strengths.iter().map(|g| g * g).sum();
    let d = sys.geometry.dim();
    let rmax = sys
        .positions
        .chunks(d)
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(1.0f64, f64::max);
    let gabs: f64 = sys.strengths.iter().map(|g| g.abs()).sum();
    conserved(sys)
        .values()
        .iter()
        .map(|(name, v)| {
            let s = match *name {
                "H" => g2 / (4.0 * PI),
                "L" => gabs * rmax * rmax,
                _ => gabs * rmax,
            };
            v.abs().max(s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub geometry: Geometry,
    pub strengths: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub steps_taken: usize,
}

impl Trajectory {
    pub fn system_at(&self, k: usize) -> VortexSystem {
        VortexSystem {
            geometry: self.geometry,
            positions: self.states[k].clone(),
            strengths: self.strengths.clone(),
        }
    }

    pub fn final_system(&self) -> VortexSystem {
        self.system_at(self.states.len() - 1)
    }

    pub fn integrals(&self) -> Vec<ConservedSet> {
        (0..self.states.len()).map(|k| conserved(&self.system_at(k))).collect()
    }

    /// Largest relative drift of any integral over the trajectory.
    pub fn conserved_drift(&self) -> f64 {
        let first = self.system_at(0);
        let scales = integral_scales(&first);
        let c0 = conserved(&first).values();
        let mut worst = 0.0f64;
        for k in 1..self.states.len() {
            let ck = conserved(&self.system_at(k)).values();
            for ((a, b), s) in c0.iter().zip(&ck).zip(&scales) {
                worst = worst.max((a.1 - b.1).abs() / s);
            }
        }
        worst
    }

    pub const CSV_PREFIX: &'static str = "t";

    /// Header: `t,x0,y0,...,H,...` (sphere adds `z` per vortex).
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        let names = if self.geometry == Geometry::Sphere { &["x", "y", "z"][..] } else { &["x", "y"][..] };
        for i in 0..self.strengths.len() {
            for c in names {
                cols.push(format!("{c}{i}"));
            }
        }
        for (name, _) in conserved(&self.system_at(0)).values() {
            cols.push(name.to_string());
        }
        cols.join(",")
    }

    pub fn csv_rows(&self) -> Vec<String> {
        (0..self.states.len())
            .map(|k| {
                let mut v = vec![self.times[k]];
                v.extend_from_slice(&self.states[k]);
                v.extend(conserved(&self.system_at(k)).values().iter().map(|x| x.1));
                crate::io::csv_row(&v)
            })
            .collect()
    }
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'a> {
    geometry: Geometry,
    strengths: &'a [f64],
    tol: f64,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a VortexSystem, tol: f64) -> Self {
        let n = sys.positions.len();
        Self {
            geometry: sys.geometry,
            strengths: &sys.strengths,
            tol,
            k: vec![vec![0.0; n]; 7],
            tmp: vec![0.0; n],
        }
    }

    /// One trial step; returns the proposed state and the scaled error norm.
    fn try_step(&mut self, y: &[f64], h: f64) -> Result<(Vec<f64>, f64)> {
        let n = y.len();
        velocity(self.geometry, self.strengths, y, &mut self.k[0])?;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (r, a) in A[s].iter().enumerate().take(s) {
                    acc += h * a * self.k[r][i];
                }
                self.tmp[i] = acc;
            }
            velocity(self.geometry, self.strengths, &self.tmp, &mut self.k[s])?;
        }
        let mut y5 = vec![0.0; n];
        let mut err = 0.0f64;
        for i in 0..n {
            let mut s5 = 0.0;
            let mut s4 = 0.0;
            for s in 0..7 {
                s5 += B5[s] * self.k[s][i];
                s4 += B4[s] * self.k[s][i];
            }
            y5[i] = y[i] + h * s5;
            let sc = self.tol * (1.0 + y[i].abs().max(y5[i].abs()));
            err = err.max((h * (s5 - s4)).abs() / sc);
        }
        Ok((y5, err))
    }
}

fn renormalize_sphere(pos: &mut [f64]) {
    for p in pos.chunks_mut(3) {
        let r = norm3(p);
        p.iter_mut().for_each(|x| *x /= r);
    }
}

/// Adaptive Dormand–Prince 5(4) integration to `t_end`, recording the state every
/// `output_dt` (steps are shortened to land on output times exactly).
pub fn integrate(sys: &VortexSystem, t_end: f64, tol: f64, output_dt: f64) -> Result<Trajectory> {
    if !(1e-13..=1e-6).contains(&tol) {
        return Err(PvError::Tolerance(tol));
    }
    if !(t_end >= 0.0) || !(output_dt > 0.0) {
        return Err(PvError::Invalid("need t_end >= 0 and output_dt > 0".into()));
    }
    let mut stepper = Stepper::new(sys, tol);
    let mut y = sys.positions.clone();
    let mut t = 0.0;
    let mut h = (output_dt.min(t_end.max(1e-3)) * 0.01).max(1e-6);
    let mut times = vec![0.0];
    let mut states = vec![y.clone()];
    let n_out = (t_end / output_dt - 1e-9).ceil().max(0.0) as usize;
    let mut steps_taken = 0;
    for k in 1..=n_out {
        let target = (k as f64 * output_dt).min(t_end);
        while t < target {
            let last = target - t <= h;
            let hh = if last { target - t } else { h };
            if hh < 1e-14 * t.abs().max(1.0) {
                return Err(PvError::Collapse { t });
            }
            let (y5, err) = match stepper.try_step(&y, hh) {
                Ok(r) => r,
                Err(PvError::Collision { .. }) => {
                    h = 0.25 * hh;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                t = if last { target } else { t + hh };
                y = y5;
                if sys.geometry == Geometry::Sphere {
                    renormalize_sphere(&mut y);
                }
                check_separation(sys.geometry, &y).map_err(|_| PvError::Collapse { t })?;
                steps_taken += 1;
                if !last {
                    h = hh * factor;
                }
            } else {
                h = hh * factor;
            }
        }
        times.push(target);
        states.push(y.clone());
    }
    Ok(Trajectory {
        geometry: sys.geometry,
        strengths: sys.strengths.clone(),
        times,
        states,
        steps_taken,
    })
}

/// Surface `state[component] = value`, crossed in the given direction
/// (`1` increasing, `-1` decreasing, `0` either).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    pub component: usize,
    pub value: f64,
    pub direction: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crossing {
    pub t: f64,
    pub state: Vec<f64>,
}

/// Crossings of `section` located by bisection on the cubic Hermite interpolant
/// between recorded states (derivatives from the vortex velocities).
pub fn poincare_section(traj: &Trajectory, section: &Section) -> Vec<Crossing> {
    let c = section.component;
    let mut out = Vec::new();
    if traj.states.len() < 2 || c >= traj.states[0].len() {
        return out;
    }
    let deriv = |k: usize| rhs(&traj.system_at(k)).ok();
    for k in 0..traj.states.len() - 1 {
        let (a, b) = (&traj.states[k], &traj.states[k + 1]);
        let fa = a[c] - section.value;
        let fb = b[c] - section.value;
        let dir_ok = match section.direction {
            1 => fa < 0.0 && fb >= 0.0,
            -1 => fa > 0.0 && fb <= 0.0,
            _ => (fa < 0.0) != (fb < 0.0),
        };
        if !dir_ok {
            continue;
        }
        let (Some(da), Some(db)) = (deriv(k), deriv(k + 1)) else {
            continue;
        };
        let (t0, t1) = (traj.times[k], traj.times[k + 1]);
        let h = t1 - t0;
        let interp = |s: f64, i: usize| {
            let (h00, h10, h01, h11) = (
                2.0 * s.powi(3) - 3.0 * s * s + 1.0,
                s.powi(3) - 2.0 * s * s + s,
                -2.0 * s.powi(3) + 3.0 * s * s,
                s.powi(3) - s * s,
            );
            h00 * a[i] + h10 * h * da[i] + h01 * b[i] + h11 * h * db[i]
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (interp(mid, c) - section.value < 0.0) == (fa < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        let s = 0.5 * (lo + hi);
        out.push(Crossing {
            t: t0 + s * h,
            state: (0..a.len()).map(|i| interp(s, i)).collect(),
        });
    }
    out
}

/// Size of the initial separation used by [`lyapunov_max`].
pub const LYAPUNOV_DELTA: f64 = 1e-8;

/// Largest Lyapunov exponent from two nearby trajectories, renormalized to
/// [`LYAPUNOV_DELTA`] every unit of time.
pub fn lyapunov_max(sys: &VortexSystem, t_end: f64, tol: f64) -> Result<f64> {
    let intervals = t_end.floor() as usize;
    if intervals == 0 {
        return Err(PvError::Invalid("lyapunov_max needs t_end >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut dir: Vec<f64> = (0..sys.positions.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    if sys.geometry == Geometry::Sphere {
        // keep the perturbation tangent to the sphere
        for (d, p) in dir.chunks_mut(3).zip(sys.positions.chunks(3)) {
            let dot: f64 = d.iter().zip(p).map(|(a, b)| a * b).sum();
            d.iter_mut().zip(p).for_each(|(a, b)| *a -= dot * b);
        }
    }
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|x| *x *= LYAPUNOV_DELTA / norm);
    let mut a = sys.clone();
    let mut b = sys.with_positions(a.positions.iter().zip(&dir).map(|(x, d)| x + d).collect());
    let mut sum = 0.0;
    for _ in 0..intervals {
        a = integrate(&a, 1.0, tol, 1.0)?.final_system();
        b = integrate(&b, 1.0, tol, 1.0)?.final_system();
        let diff: Vec<f64> = a.positions.iter().zip(&b.positions).map(|(x, y)| y - x).collect();
        let d = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
        sum += (d / LYAPUNOV_DELTA).ln();
        let pos = a.positions.iter().zip(&diff).map(|(x, e)| x + e * LYAPUNOV_DELTA / d).collect();
        b = a.with_positions(pos);
        if b.geometry == Geometry::Sphere {
            renormalize_sphere(&mut b.positions);
        }
    }
    Ok(sum / intervals as f64)
}

/// Seeded random system with `n` vortices, pairwise separation at least 0.3
/// (0.15 on the sphere) and strengths in `±[0.5, 1.5]`; torus strengths are
/// shifted to sum to zero.
pub fn random_system(geometry: Geometry, n: usize, seed: u64) -> VortexSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_sep = if geometry == Geometry::Sphere { 0.15 } else { 0.3 };
    loop {
        let mut pos = Vec::with_capacity(n * geometry.dim());
        for _ in 0..n {
            match geometry {
                Geometry::Plane => pos.extend([rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)]),
                Geometry::HalfPlane => pos.extend([rng.random_range(-1.5..1.5), rng.random_range(0.3..2.0)]),
                Geometry::Torus => pos.extend([rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)]),
                Geometry::Sphere => {
                    let z: f64 = rng.random_range(-1.0..1.0);
                    let phi: f64 = rng.random_range(0.0..TAU);
                    let r = (1.0 - z * z).sqrt();
                    pos.extend([r * phi.cos(), r * phi.sin(), z]);
                }
            }
        }
        let mut g: Vec<f64> = (0..n)
            .map(|_| {
                let m: f64 = rng.random_range(0.5..1.5);
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            })
            .collect();
        if geometry == Geometry::Torus {
            let mean = g.iter().sum::<f64>() / n as f64;
            g.iter_mut().for_each(|x| *x -= mean);
        }
        if min_separation(geometry, &pos).0 < min_sep {
            continue;
        }
        if let Ok(sys) = VortexSystem::new(geometry, pos, g) {
            return sys;
        }
    }
}

/// Seed of the four-vortex planar instance used as the chaos probe.
pub const CHAOTIC_SEED: u64 = 3;

/// Seeded generic four-vortex planar system; its Lyapunov estimate sits well
/// above the integrable two-vortex floor.
pub fn standard_chaotic_instance() -> VortexSystem {
    random_system(Geometry::Plane, 4, CHAOTIC_SEED)
}

/// Outcome of the half-plane cusp search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuspResult {
    /// Upper/lower height ratio at the aligned instant when the lower vortex stalls.
    pub ratio: f64,
    /// Initial height of the upper vortex that produces it.
    pub upper_height: f64,
}

/// Horizontal velocity of the lower vortex at the instant the pair is vertically aligned.
fn aligned_lower_speed(upper_height: f64, tol: f64) -> Result<(f64, f64)> {
    let sys = VortexSystem::new(Geometry::HalfPlane, vec![0.0, 1.0, 6.0, upper_height], vec![1.0, -1.0])?;
    let traj = integrate(&sys, 400.0, tol, 0.05)?;
    // x_upper − x_lower decreasing through zero
    let gap: Vec<Vec<f64>> = traj.states.iter().map(|s| vec![s[2] - s[0]]).collect();
    let gap_traj = Trajectory {
        states: gap,
        ..traj.clone()
    };
    let crossing = first_zero(&traj, &gap_traj).ok_or(PvError::Invalid("pair never aligns".into()))?;
    let at = traj.system_at(0).with_positions(crossing);
    let v = rhs(&at)?;
    Ok((v[0], at.positions[3] / at.positions[1]))
}

/// State at the first time the scalar series in `gap` changes sign, refined by
/// integrating from the preceding sample.
fn first_zero(traj: &Trajectory, gap: &Trajectory) -> Option<Vec<f64>> {
    let k = gap.states.windows(2).position(|w| w[0][0] > 0.0 && w[1][0] <= 0.0)?;
    let start = traj.system_at(k);
    let span = traj.times[k + 1] - traj.times[k];
    let (mut lo, mut hi) = (0.0, span);
    let g = |dt: f64| -> Option<(f64, Vec<f64>)> {
        if dt == 0.0 {
            return Some((start.positions[2] - start.positions[0], start.positions.clone()));
        }
        let s = integrate(&start, dt, 1e-13, dt).ok()?.final_system();
        Some((s.positions[2] - s.positions[0], s.positions))
    };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if g(mid)?.0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    g(0.5 * (lo + hi)).map(|x| x.1)
}

/// Opposite pair above a wall: lower vortex `+1` at height 1, upper vortex `−1`
/// starting 6 units downstream. Bisects on the upper starting height for the
/// configuration in which the lower vortex is momentarily at rest when the two
/// are vertically aligned (a cusp in its path) and reports the aligned height ratio.
pub fn cusp_ratio(tol: f64) -> Result<CuspResult> {
    // at 6 the lower vortex still moves backwards when aligned, at 8 forwards
    let (mut lo, mut hi) = (6.0, 8.0);
    let (slo, _) = aligned_lower_speed(lo, tol)?;
    let (shi, _) = aligned_lower_speed(hi, tol)?;
    if slo.signum() == shi.signum() {
        return Err(PvError::Invalid("cusp not bracketed".into()));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (s, _) = aligned_lower_speed(mid, tol)?;
        if s.signum() == slo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    let (_, ratio) = aligned_lower_speed(mid, tol)?;
    Ok(CuspResult { ratio, upper_height: mid })
}
