//! ε-entropy estimators for finite weighted sets, point clouds and empirical
//! measures, plus an ensemble experiment driven by the 2D Euler solver.
//!
//! Logarithms are base 2 throughout.

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::euler2d::{random_vorticity, EulerError, EulerSolver, CFL_LIMIT};
use crate::spectral::{Grid2, VorticityField2D};

pub const MAX_DIM: usize = 64;
pub const WEIGHT_TOL: f64 = 1e-12;
/// Cells with fewer samples than this count as under-sampled.
pub const MIN_CELL_SAMPLES: usize = 5;
pub const MIN_MEMBERS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("empty point set")]
    Empty,
    #[error(transparent)]
    Euler(#[from] EulerError),
}

pub type Result<T> = std::result::Result<T, EntropyError>;

/// Points in ℝⁿ with probability weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEnsemble {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl WeightedEnsemble {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(EntropyError::Empty);
        }
        if points.len() != weights.len() {
            return Err(EntropyError::Invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points[0].len();
        if dim > MAX_DIM {
            return Err(EntropyError::Invalid(format!("dimension {dim} exceeds {MAX_DIM}")));
        }
        if points.iter().any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite())) {
            return Err(EntropyError::Invalid("points must share a dimension and be finite".into()));
        }
        check_weights(&weights)?;
        let total = compensated_sum(&weights);
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(EntropyError::Invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { points, weights })
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        let n = points.len();
        Self::new(points, vec![w; n])
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn compensated_sum(xs: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(EntropyError::Invalid(format!("weight {w} is negative or not finite")));
    }
    Ok(())
}

/// `−Σ wᵢ log₂ wᵢ` with `0·log 0 = 0`. Uniform probability vectors return
/// `log₂ k` exactly.
pub fn finite_entropy(weights: &[f64]) -> Result<f64> {
    check_weights(weights)?;
    let mut positive = weights.iter().filter(|&&w| w > 0.0);
    if let Some(&first) = positive.clone().next() {
        let k = positive.clone().count();
        if positive.all(|&w| w == first) && (k as f64 * first - 1.0).abs() <= WEIGHT_TOL {
            return Ok((k as f64).log2());
        }
    }
    Ok(weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| -w * w.log2())
        .sum::<f64>()
        .max(0.0))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Two-sided estimate of the covering number of a point cloud by closed
/// ε-balls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetEntropy {
    /// Greedy set cover with centres at sample points (upper bound on N_ε).
    pub cover_count: usize,
    /// Maximal set with pairwise distances > 2ε (lower bound on N_ε).
    pub packing_count: usize,
}

impl SetEntropy {
    pub fn upper(&self) -> f64 {
        (self.cover_count as f64).log2()
    }

    pub fn lower(&self) -> f64 {
        (self.packing_count as f64).log2()
    }
}

/// Kolmogorov ε-entropy bounds of a finite set. Quadratic in the number of
/// points.
pub fn eps_entropy_set(points: &[Vec<f64>], eps: f64) -> Result<SetEntropy> {
    if points.is_empty() {
        return Err(EntropyError::Empty);
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(EntropyError::Invalid(format!("eps must be positive, got {eps}")));
    }
    let n = points.len();
    let r2 = eps * eps;
    let neighbours: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|&j| dist2(&points[i], &points[j]) <= r2).collect())
        .collect();

    // greedy set cover: repeatedly take the ball that covers the most
    // uncovered points (lowest index on ties)
    let mut covered = vec![false; n];
    let mut gain: Vec<usize> = neighbours.iter().map(Vec::len).collect();
    let mut remaining = n;
    let mut cover_count = 0;
    while remaining > 0 {
        let best = (0..n).max_by_key(|&i| (gain[i], std::cmp::Reverse(i))).unwrap();
        cover_count += 1;
        for &j in &neighbours[best] {
            if !covered[j] {
                covered[j] = true;
                remaining -= 1;
                for &k in &neighbours[j] {
                    gain[k] -= 1;
                }
            }
        }
    }

    let sep2 = 4.0 * r2;
    let mut packing: Vec<usize> = Vec::new();
    for i in 0..n {
        if packing.iter().all(|&p| dist2(&points[i], &points[p]) > sep2) {
            packing.push(i);
        }
    }
    Ok(SetEntropy {
        cover_count,
        packing_count: packing.len(),
    })
}

type CellKey = Vec<i64>;

fn cell_of(p: &[f64], n: usize, eps: f64) -> CellKey {
    p[..n].iter().map(|x| (x / eps).floor() as i64).collect()
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(EntropyError::Invalid(format!("eps must be positive, got {eps}")))
    }
}

/// Occupied cells of the grid `εℤⁿ` and their masses, in first-visit order.
fn cell_masses(points: &[Vec<f64>], weights: Option<&[f64]>, n: usize, eps: f64) -> Vec<(f64, usize)> {
    let mut index: HashMap<CellKey, usize> = HashMap::new();
    let mut cells: Vec<(f64, usize)> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let slot = *index.entry(cell_of(p, n, eps)).or_insert_with(|| {
            cells.push((0.0, 0));
            cells.len() - 1
        });
        cells[slot].0 += w;
        cells[slot].1 += 1;
    }
    cells
}

/// `log₂ Ñ(ε)` where `Ñ(ε)` is the largest number of occupied ε-cubes over
/// the projections onto the first `n` coordinates, `n ∈ n_list`.
pub fn cube_entropy(points: &[Vec<f64>], n_list: &[usize], eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if points.is_empty() {
        return Ok(0.0);
    }
    let dim = points[0].len();
    let mut best = 1usize;
    for &n in n_list {
        if n > dim {
            return Err(EntropyError::Invalid(format!("projection dimension {n} exceeds {dim}")));
        }
        best = best.max(cell_masses(points, None, n, eps).len());
    }
    Ok((best as f64).log2())
}

/// Sign used when summing `μ(K) log₂ μ(K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SignConvention {
    /// `−Σ μ log₂ μ`, nonnegative, consistent with the finite-set entropy.
    #[default]
    Corrected,
    /// `Σ μ log₂ μ` as literally printed; nonpositive.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEntropy {
    pub value: f64,
    pub occupied_cells: usize,
    /// More than half of the occupied cells hold fewer than
    /// [`MIN_CELL_SAMPLES`] samples: ε is too small for the ensemble.
    pub undersampled: bool,
}

/// `H_{ε,n}` of the empirical measure on cylinders over ε-cubes in the first
/// `n` coordinates.
pub fn measure_entropy(ens: &WeightedEnsemble, n: usize, eps: f64) -> Result<MeasureEntropy> {
    measure_entropy_with(ens, n, eps, SignConvention::Corrected)
}

pub fn measure_entropy_with(
    ens: &WeightedEnsemble,
    n: usize,
    eps: f64,
    sign: SignConvention,
) -> Result<MeasureEntropy> {
    check_eps(eps)?;
    if n > ens.dim() {
        return Err(EntropyError::Invalid(format!(
            "projection dimension {n} exceeds {}",
            ens.dim()
        )));
    }
    let cells = cell_masses(&ens.points, Some(&ens.weights), n, eps);
    let mut masses: Vec<f64> = cells.iter().map(|c| c.0).collect();
    // removes rounding in the accumulated cell masses
    let total = compensated_sum(&masses);
    masses.iter_mut().for_each(|m| *m /= total);
    let h = finite_entropy(&masses)?;
    let sparse = cells.iter().filter(|c| c.1 < MIN_CELL_SAMPLES).count();
    Ok(MeasureEntropy {
        value: match sign {
            SignConvention::Corrected => h,
            SignConvention::Printed => -h,
        },
        occupied_cells: cells.len(),
        undersampled: 2 * sparse > cells.len(),
    })
}

/// `max_n H_{ε,n}` over a list of truncation dimensions.
pub fn measure_entropy_sup(ens: &WeightedEnsemble, n_list: &[usize], eps: f64) -> Result<f64> {
    let mut best = 0.0f64;
    for &n in n_list {
        best = best.max(measure_entropy(ens, n, eps)?.value);
    }
    Ok(best)
}

/// `H_{ε,δ}`: drops the lightest ε-cubes while the dropped mass stays ≤ δ and
/// returns `log₂` of the number of cubes kept. Cubes live on the grid `εℤⁿ`
/// in all coordinates of the ensemble, so the count is exact for that
/// cover and, for nested grids (ε ratios that are powers of 2), monotone
/// in ε.
pub fn eps_delta_entropy(ens: &WeightedEnsemble, eps: f64, delta: f64) -> Result<f64> {
    check_eps(eps)?;
    if !(0.0..1.0).contains(&delta) {
        return Err(EntropyError::Invalid(format!("delta must lie in [0, 1), got {delta}")));
    }
    let mut masses: Vec<f64> = cell_masses(&ens.points, Some(&ens.weights), ens.dim(), eps)
        .into_iter()
        .map(|c| c.0)
        .collect();
    masses.sort_by(f64::total_cmp);
    let mut dropped = 0.0;
    let mut kept = masses.len();
    for m in &masses {
        if kept == 1 || dropped + m > delta {
            break;
        }
        dropped += m;
        kept -= 1;
    }
    Ok((kept as f64).log2())
}

/// Upper-half-plane modes ordered by `|k|²`, then by angle.
fn embedding_modes(grid: &Grid2) -> Vec<usize> {
    let mut modes: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let (mx, my) = grid.mode(i);
            (my > 0 || (my == 0 && mx > 0)) && grid.in_dealias_band(i)
        })
        .collect();
    modes.sort_by(|&a, &b| {
        let (ax, ay) = grid.mode(a);
        let (bx, by) = grid.mode(b);
        grid.k2(a)
            .total_cmp(&grid.k2(b))
            .then((ay as f64).atan2(ax as f64).total_cmp(&(by as f64).atan2(bx as f64)))
    });
    modes
}

/// First `n` real Fourier coordinates of the velocity field of `w`, scaled
/// so that the Euclidean norm of the full embedding equals the L² norm of
/// the velocity.
pub fn fourier_embedding(w: &VorticityField2D, n: usize) -> Result<Vec<f64>> {
    let grid = w.grid();
    let modes = embedding_modes(grid);
    if n > MAX_DIM || n > 2 * modes.len() {
        return Err(EntropyError::Invalid(format!("embedding dimension {n} unavailable")));
    }
    let scale = (2.0 * grid.area()).sqrt();
    let mut out = Vec::with_capacity(n);
    for &i in &modes {
        if out.len() >= n {
            break;
        }
        let c = w.coeffs()[i] * (scale / grid.k2(i).sqrt());
        out.push(c.re);
        if out.len() < n {
            out.push(c.im);
        }
    }
    Ok(out)
}

/// Field translated by `(ax, ay)`: `ω(x − a)`.
pub fn translate_vorticity(w: &VorticityField2D, ax: f64, ay: f64) -> VorticityField2D {
    let grid = *w.grid();
    let coeffs: Vec<Complex64> = w
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let (mx, my) = grid.mode(i);
            let kx = mx as f64 * std::f64::consts::TAU / grid.lx;
            let ky = my as f64 * std::f64::consts::TAU / grid.ly;
            c * Complex64::from_polar(1.0, -(kx * ax + ky * ay))
        })
        .collect();
    let mut out = VorticityField2D::from_spectral(grid, coeffs).expect("shape preserved");
    // a translate of a real field is real; the Nyquist lines may not be
    // Hermitian after the phase shift, so drop them
    for (i, c) in out.coeffs_mut().iter_mut().enumerate() {
        let (mx, my) = grid.mode(i);
        if 2 * mx.unsigned_abs() as usize == grid.nx || 2 * my.unsigned_abs() as usize == grid.ny {
            *c = Complex64::default();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyExperimentConfig {
    /// Grid side.
    pub grid: usize,
    /// Ensemble size K.
    pub members: usize,
    /// Truncation dimensions evaluated at each output time.
    pub n_list: Vec<usize>,
    /// Cube sides. When empty, one ε is derived from the initial ensemble so
    /// that the widest coordinate spans `cells_per_axis` cubes.
    pub eps_list: Vec<f64>,
    pub cells_per_axis: usize,
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    /// Peak wavenumber of the random initial spectrum.
    pub k0: f64,
    pub nu_h: f64,
    pub hyper_order: u32,
    pub seed: u64,
    /// Skip time stepping (identity dynamics).
    pub frozen: bool,
}

impl Default for EntropyExperimentConfig {
    fn default() -> Self {
        Self {
            grid: 64,
            members: 32,
            n_list: vec![8],
            eps_list: Vec::new(),
            cells_per_axis: 8,
            dt: 0.01,
            t_end: 5.0,
            sample_every: 50,
            k0: 4.0,
            nu_h: 0.0,
            hyper_order: 4,
            seed: 0,
            frozen: false,
        }
    }
}

impl EntropyExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EntropyError::Invalid(m));
        if self.members < MIN_MEMBERS {
            return bad(format!("need at least {MIN_MEMBERS} members, got {}", self.members));
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n == 0 || n > MAX_DIM) {
            return bad(format!("n_list entries must lie in 1..={MAX_DIM}"));
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("eps_list entries must be positive".into());
        }
        if self.eps_list.is_empty() && self.cells_per_axis == 0 {
            return bad("cells_per_axis must be positive when eps_list is empty".into());
        }
        if !(self.dt > 0.0) || !(self.t_end >= 0.0) || self.sample_every == 0 {
            return bad("dt > 0, t_end ≥ 0 and sample_every ≥ 1 required".into());
        }
        Ok(())
    }
}

/// One output time of the experiment; `values[i]` belongs to `columns[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub t: f64,
    pub values: Vec<f64>,
    pub undersampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySeries {
    /// `(n, ε)` per value column.
    pub columns: Vec<(usize, f64)>,
    pub rows: Vec<EntropyRow>,
}

impl EntropySeries {
    pub fn csv_header(&self) -> String {
        let mut h = String::from("t");
        for (n, e) in &self.columns {
            h.push_str(&format!(",H_n{n}_eps{e:e}_bits"));
        }
        h.push_str(",undersampled");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.csv_header();
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{:e}", r.t));
            for v in &r.values {
                s.push_str(&format!(",{v:e}"));
            }
            s.push_str(&format!(",{}\n", u8::from(r.undersampled)));
        }
        s
    }
}

/// Smallest ε such that every coordinate range is covered by at most
/// `cells` cubes.
pub fn eps_for_cells(points: &[Vec<f64>], n: usize, cells: usize) -> f64 {
    let span = (0..n)
        .map(|c| {
            let (lo, hi) = points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[c]), hi.max(p[c])));
            hi - lo
        })
        .fold(0.0, f64::max);
    if span > 0.0 {
        span / cells as f64
    } else {
        1.0
    }
}

fn sample_entropies(
    fields: &[VorticityField2D],
    columns: &[(usize, f64)],
    t: f64,
) -> Result<EntropyRow> {
    let n_max = columns.iter().map(|c| c.0).max().unwrap_or(0);
    let points = fields
        .iter()
        .map(|w| fourier_embedding(w, n_max))
        .collect::<Result<Vec<_>>>()?;
    let ens = WeightedEnsemble::uniform(points)?;
    let mut values = Vec::with_capacity(columns.len());
    let mut undersampled = false;
    for &(n, eps) in columns {
        let m = measure_entropy(&ens, n, eps)?;
        undersampled |= m.undersampled;
        values.push(m.value);
    }
    Ok(EntropyRow { t, values, undersampled })
}

/// Evolves an explicit ensemble of initial fields and records `H_{ε,n}` of
/// the uniform empirical measure at every `sample_every` steps.
pub fn entropy_experiment_from(
    config: &EntropyExperimentConfig,
    initial: Vec<VorticityField2D>,
) -> Result<EntropySeries> {
    config.validate()?;
    if initial.len() < MIN_MEMBERS {
        return Err(EntropyError::Invalid(format!(
            "need at least {MIN_MEMBERS} members, got {}",
            initial.len()
        )));
    }
    let grid = *initial[0].grid();
    if initial.iter().any(|w| *w.grid() != grid) {
        return Err(EntropyError::Invalid("ensemble members live on different grids".into()));
    }
    let n_max = *config.n_list.iter().max().unwrap();
    let columns: Vec<(usize, f64)> = if config.eps_list.is_empty() {
        let pts = initial
            .iter()
            .map(|w| fourier_embedding(w, n_max))
            .collect::<Result<Vec<_>>>()?;
        let eps = eps_for_cells(&pts, n_max, config.cells_per_axis);
        config.n_list.iter().map(|&n| (n, eps)).collect()
    } else {
        config
            .n_list
            .iter()
            .flat_map(|&n| config.eps_list.iter().map(move |&e| (n, e)))
            .collect()
    };

    let solver = EulerSolver::new(grid, config.nu_h, config.hyper_order);
    let steps = (config.t_end / config.dt).round() as usize;
    let mut fields = initial;
    let mut rows = vec![sample_entropies(&fields, &columns, 0.0)?];
    let mut step = 0;
    while step < steps {
        let chunk = config.sample_every.min(steps - step);
        let t0 = step as f64 * config.dt;
        if !config.frozen {
            fields = fields
                .into_par_iter()
                .map(|mut w| {
                    for s in 0..chunk {
                        let (next, cfl) = solver.step_rk4_checked(&w, config.dt);
                        if cfl > CFL_LIMIT {
                            return Err(EulerError::Cfl {
                                t: t0 + s as f64 * config.dt,
                                cfl,
                                limit: CFL_LIMIT,
                            });
                        }
                        w = next;
                    }
                    Ok(w)
                })
                .collect::<std::result::Result<Vec<_>, EulerError>>()?;
        }
        step += chunk;
        rows.push(sample_entropies(&fields, &columns, step as f64 * config.dt)?);
    }
    Ok(EntropySeries { columns, rows })
}

/// Seeded ensemble of random-phase fields, member `j` drawn with seed
/// `seed + j`.
pub fn seeded_ensemble(config: &EntropyExperimentConfig) -> Result<Vec<VorticityField2D>> {
    let grid = Grid2::square(config.grid).map_err(|e| EntropyError::Euler(e.into()))?;
    Ok((0..config.members)
        .map(|j| random_vorticity(grid, config.seed.wrapping_add(j as u64), config.k0))
        .collect())
}

pub fn entropy_decrease_experiment(config: &EntropyExperimentConfig) -> Result<EntropySeries> {
    config.validate()?;
    entropy_experiment_from(config, seeded_ensemble(config)?)
}
