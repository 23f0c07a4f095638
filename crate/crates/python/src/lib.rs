//! Python module `geoflow`.

use geoflow_core::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use geoflow_core::entropy as ent;
use geoflow_core::euler2d::{random_vorticity, EulerSolver, CFL_LIMIT};
use geoflow_core::filament as fil;
use geoflow_core::madelung as mad;
use geoflow_core::point_vortex as pv;
use geoflow_core::runner;
use geoflow_core::spectral::{casimir_moment, energy2d, enstrophy, Grid2, Grid3, VorticityField2D};
use geoflow_core::sticky as st;
use geoflow_core::topo3d;
use geoflow_core::zeitlin;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Vorticity on the (2π)² torus.
#[pyclass(name = "Vorticity", module = "geoflow", skip_from_py_object)]
#[derive(Clone)]
struct PyVorticity {
    inner: VorticityField2D,
}

#[pymethods]
impl PyVorticity {
    /// Random-phase field with unit kinetic energy.
    #[staticmethod]
    #[pyo3(signature = (n, seed, k0 = 4.0))]
    fn random(n: usize, seed: u64, k0: f64) -> PyResult<Self> {
        let grid = Grid2::square(n).map_err(value_err)?;
        Ok(Self { inner: random_vorticity(grid, seed, k0) })
    }

    /// From row-major samples on an `n x n` grid.
    #[staticmethod]
    fn from_samples(n: usize, samples: Vec<f64>) -> PyResult<Self> {
        let grid = Grid2::square(n).map_err(value_err)?;
        Ok(Self { inner: VorticityField2D::from_physical(grid, &samples).map_err(value_err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.grid().nx
    }

    fn samples(&self) -> Vec<f64> {
        self.inner.to_physical()
    }

    fn energy(&self) -> f64 {
        energy2d(&self.inner)
    }

    fn enstrophy(&self) -> f64 {
        enstrophy(&self.inner)
    }

    fn casimir(&self, p: u32) -> PyResult<f64> {
        casimir_moment(&self.inner, p).map_err(value_err)
    }

    /// Inviscid RK4 steps; raises RuntimeError on a CFL violation.
    fn evolve(&self, dt: f64, steps: usize) -> PyResult<Self> {
        let solver = EulerSolver::inviscid(*self.inner.grid());
        let mut w = self.inner.clone();
        for k in 0..steps {
            let (next, cfl) = solver.step_rk4_checked(&w, dt);
            if cfl > CFL_LIMIT {
                return Err(runtime_err(format!("CFL {cfl:.3} exceeds {CFL_LIMIT} at step {k}")));
            }
            w = next;
        }
        Ok(Self { inner: w })
    }

    fn __repr__(&self) -> String {
        format!("Vorticity(n={}, energy={:.6e})", self.inner.grid().nx, energy2d(&self.inner))
    }
}

#[pyclass(name = "VortexSystem", module = "geoflow", skip_from_py_object)]
#[derive(Clone)]
struct PyVortexSystem {
    inner: pv::VortexSystem,
}

#[pymethods]
impl PyVortexSystem {
    #[new]
    fn new(geometry: &str, positions: Vec<f64>, strengths: Vec<f64>) -> PyResult<Self> {
        let g: pv::Geometry = geometry.parse().map_err(value_err)?;
        Ok(Self { inner: pv::VortexSystem::new(g, positions, strengths).map_err(value_err)? })
    }

    #[staticmethod]
    fn random(geometry: &str, n: usize, seed: u64) -> PyResult<Self> {
        let g: pv::Geometry = geometry.parse().map_err(value_err)?;
        Ok(Self { inner: pv::random_system(g, n, seed) })
    }

    #[getter]
    fn positions(&self) -> Vec<f64> {
        self.inner.positions.clone()
    }

    #[getter]
    fn geometry(&self) -> String {
        self.inner.geometry.to_string()
    }

    /// Named first integrals.
    fn conserved<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (k, v) in pv::conserved(&self.inner).values() {
            d.set_item(k, v)?;
        }
        Ok(d)
    }

    /// Returns `(times, states)`.
    #[pyo3(signature = (t_end, tol = 1e-10, output_dt = 0.1))]
    fn integrate(&self, t_end: f64, tol: f64, output_dt: f64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let traj = pv::integrate(&self.inner, t_end, tol, output_dt).map_err(runtime_err)?;
        Ok((traj.times, traj.states))
    }
}

/// Energy and `tr(W^k)`, k = 2..5, at every diagnostic step of a seeded run.
#[pyfunction]
#[pyo3(signature = (n, dt, steps, seed, k0 = 3.0))]
fn zeitlin_run(n: usize, dt: f64, steps: usize, seed: u64, k0: f64) -> PyResult<Vec<(f64, f64, [f64; 4])>> {
    let model = zeitlin::ZeitlinModel::new(n).map_err(value_err)?;
    let w0 = zeitlin::random_state(&model, seed, k0);
    let cfg = zeitlin::ZeitlinConfig { n, dt, steps, diag_every: 1, integrator: zeitlin::Integrator::Isospectral };
    let (series, _) = zeitlin::run(&cfg, &w0).map_err(runtime_err)?;
    Ok(series.iter().map(|d| (d.t, d.energy, d.traces)).collect())
}

#[pyclass(name = "StickySystem", module = "geoflow", skip_from_py_object)]
#[derive(Clone)]
struct PyStickySystem {
    inner: st::StickySystem,
}

#[pymethods]
impl PyStickySystem {
    #[new]
    fn new(masses: Vec<f64>, positions: Vec<f64>, velocities: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: st::StickySystem::new(masses, positions, velocities).map_err(value_err)? })
    }

    #[staticmethod]
    fn random(n: usize, seed: u64) -> Self {
        Self { inner: st::random_system(n, seed) }
    }

    fn momentum(&self) -> f64 {
        self.inner.momentum()
    }

    /// Event-driven run; returns `(positions at t_end, events)` with events
    /// as `(t, first, last, position, velocity)`.
    fn run(&self, t_end: f64) -> (Vec<f64>, Vec<(f64, usize, usize, f64, f64)>) {
        let r = st::event_driven_run(&self.inner, t_end);
        let events = r.events.iter().map(|e| (e.t, e.first, e.last, e.position, e.velocity)).collect();
        (r.positions_at(t_end), events)
    }

    /// Least-action history over unit time; returns `(action, positions at t=1, n_events)`.
    fn minimize(&self) -> PyResult<(f64, Vec<f64>, usize)> {
        let z1 = st::oracle_endpoint(&self.inner);
        let res = st::variational_minimize(&self.inner.masses, &self.inner.positions, &z1).map_err(runtime_err)?;
        Ok((res.action, res.path.visible_at(1.0), res.history.events.len()))
    }
}

/// Smallest enclosing ball `(center, radius)` of a point set.
#[pyfunction]
fn shock_velocity(velocities: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, f64)> {
    let b = st::shock_velocity(&velocities).map_err(value_err)?;
    Ok((b.center, b.radius))
}

/// Nondecreasing least-squares projection.
#[pyfunction]
fn pav(values: Vec<f64>) -> Vec<f64> {
    st::pav(&values)
}

/// `(rho, theta)` of a sampled wave function on `[0, length)`.
#[pyfunction]
fn madelung_inverse(re: Vec<f64>, im: Vec<f64>, length: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let psi = wave(re, im, length)?;
    let pair = mad::madelung_inverse(&psi).map_err(value_err)?;
    Ok((pair.rho, pair.theta))
}

fn wave(re: Vec<f64>, im: Vec<f64>, length: f64) -> PyResult<mad::WaveFunction1D> {
    if re.len() != im.len() {
        return Err(value_err("re and im differ in length"));
    }
    let samples = re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect();
    mad::WaveFunction1D::new(length, samples).map_err(value_err)
}

/// Split-step NLS with cubic nonlinearity `g·ρ` and potential samples.
/// Returns `(re, im)` after `steps` steps.
#[pyfunction]
#[pyo3(signature = (re, im, length, dt, steps, coupling = 0.0, potential = None))]
fn nls_evolve(
    re: Vec<f64>,
    im: Vec<f64>,
    length: f64,
    dt: f64,
    steps: usize,
    coupling: f64,
    potential: Option<Vec<f64>>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let mut psi = wave(re, im, length)?;
    let n = psi.len();
    let model = mad::NlsModel {
        potential: potential.unwrap_or_else(|| vec![0.0; n]),
        nonlinearity: mad::Nonlinearity::cubic(coupling),
    };
    let stepper = mad::NlsStepper::new(n, length, dt).map_err(value_err)?;
    stepper.evolve(&mut psi, &model, steps).map_err(runtime_err)?;
    Ok(psi.samples.iter().map(|z| (z.re, z.im)).unzip())
}

#[pyclass(name = "Filament", module = "geoflow", skip_from_py_object)]
#[derive(Clone)]
struct PyFilament {
    inner: fil::Filament,
}

#[pymethods]
impl PyFilament {
    #[staticmethod]
    fn circle(radius: f64, m: usize) -> PyResult<Self> {
        Ok(Self { inner: fil::Filament::circle(radius, m).map_err(value_err)? })
    }

    #[staticmethod]
    fn helix(a: f64, b: f64, m: usize) -> PyResult<Self> {
        Ok(Self { inner: fil::Filament::helix(a, b, m).map_err(value_err)? })
    }

    #[staticmethod]
    fn closed(points: Vec<[f64; 3]>) -> PyResult<Self> {
        Ok(Self { inner: fil::Filament::closed(points).map_err(value_err)? })
    }

    #[getter]
    fn points(&self) -> Vec<[f64; 3]> {
        self.inner.points.clone()
    }

    fn length(&self) -> f64 {
        self.inner.length()
    }

    fn impulse(&self) -> [f64; 3] {
        self.inner.impulse()
    }

    /// RK4 binormal-flow steps.
    fn evolve(&self, dt: f64, steps: usize) -> PyResult<Self> {
        let mut f = self.inner.clone();
        for _ in 0..steps {
            f = fil::step_rk4(&f, dt).map_err(runtime_err)?;
        }
        Ok(Self { inner: f })
    }

    /// Hasimoto function `(re, im)` at the vertices.
    fn hasimoto(&self) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let psi = fil::hasimoto(&self.inner).map_err(runtime_err)?;
        Ok(psi.samples.iter().map(|z| (z.re, z.im)).unzip())
    }
}

fn summary_dict<'py>(py: Python<'py>, s: topo3d::TopoSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("energy", s.energy)?;
    d.set_item("helicity", s.helicity)?;
    d.set_item("beltrami_residual", s.beltrami_residual)?;
    d.set_item("divergence", s.divergence)?;
    Ok(d)
}

/// Energy, helicity and Beltrami residual of the ABC field.
#[pyfunction]
#[pyo3(signature = (n, a = 1.0, b = 1.0, c = 1.0, lam = 1.0))]
fn abc_summary(py: Python<'_>, n: usize, a: f64, b: f64, c: f64, lam: f64) -> PyResult<Bound<'_, PyDict>> {
    let u = topo3d::abc_field(Grid3::new(n).map_err(value_err)?, a, b, c).map_err(value_err)?;
    summary_dict(py, topo3d::summarize(&u, lam).map_err(runtime_err)?)
}

/// Same summary for a seeded random divergence-free field.
#[pyfunction]
#[pyo3(signature = (n, seed, kmax = 4.0, lam = 1.0))]
fn random_field_summary(py: Python<'_>, n: usize, seed: u64, kmax: f64, lam: f64) -> PyResult<Bound<'_, PyDict>> {
    let u = topo3d::random_divfree_field(Grid3::new(n).map_err(value_err)?, seed, kmax);
    summary_dict(py, topo3d::summarize(&u, lam).map_err(runtime_err)?)
}

#[pyfunction]
fn finite_entropy(weights: Vec<f64>) -> PyResult<f64> {
    ent::finite_entropy(&weights).map_err(value_err)
}

/// `(cover_count, packing_count)` for closed ε-balls.
#[pyfunction]
fn eps_entropy_set(points: Vec<Vec<f64>>, eps: f64) -> PyResult<(usize, usize)> {
    let s = ent::eps_entropy_set(&points, eps).map_err(value_err)?;
    Ok((s.cover_count, s.packing_count))
}

#[pyfunction]
fn cube_entropy(points: Vec<Vec<f64>>, n_list: Vec<usize>, eps: f64) -> PyResult<f64> {
    ent::cube_entropy(&points, &n_list, eps).map_err(value_err)
}

/// `(H, undersampled)`; uniform weights when `weights` is omitted.
#[pyfunction]
#[pyo3(signature = (points, n, eps, weights = None))]
fn measure_entropy(points: Vec<Vec<f64>>, n: usize, eps: f64, weights: Option<Vec<f64>>) -> PyResult<(f64, bool)> {
    let ens = match weights {
        Some(w) => ent::WeightedEnsemble::new(points, w),
        None => ent::WeightedEnsemble::uniform(points),
    }
    .map_err(value_err)?;
    let m = ent::measure_entropy(&ens, n, eps).map_err(value_err)?;
    Ok((m.value, m.undersampled))
}

#[pyfunction]
#[pyo3(signature = (points, eps, delta, weights = None))]
fn eps_delta_entropy(points: Vec<Vec<f64>>, eps: f64, delta: f64, weights: Option<Vec<f64>>) -> PyResult<f64> {
    let ens = match weights {
        Some(w) => ent::WeightedEnsemble::new(points, w),
        None => ent::WeightedEnsemble::uniform(points),
    }
    .map_err(value_err)?;
    ent::eps_delta_entropy(&ens, eps, delta).map_err(value_err)
}

/// Parses a config, runs it, and returns the manifest as JSON text.
#[pyfunction]
#[pyo3(signature = (text, output = None))]
fn run_config(text: &str, output: Option<String>) -> PyResult<String> {
    let mut cfg = runner::parse_config(text)
        .map_err(|errs| value_err(errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n")))?;
    if let Some(o) = output {
        cfg.output = o.into();
    }
    let m = runner::run_experiment(&cfg).map_err(|e| match e.exit_code() {
        2 => value_err(e),
        _ => runtime_err(e),
    })?;
    Ok(m.to_json())
}

#[pymodule]
fn geoflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVorticity>()?;
    m.add_class::<PyVortexSystem>()?;
    m.add_class::<PyStickySystem>()?;
    m.add_class::<PyFilament>()?;
    m.add_function(wrap_pyfunction!(zeitlin_run, m)?)?;
    m.add_function(wrap_pyfunction!(shock_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(pav, m)?)?;
    m.add_function(wrap_pyfunction!(madelung_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(nls_evolve, m)?)?;
    m.add_function(wrap_pyfunction!(abc_summary, m)?)?;
    m.add_function(wrap_pyfunction!(random_field_summary, m)?)?;
    m.add_function(wrap_pyfunction!(finite_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(eps_entropy_set, m)?)?;
    m.add_function(wrap_pyfunction!(cube_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(measure_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(eps_delta_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
