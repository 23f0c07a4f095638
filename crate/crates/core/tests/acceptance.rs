//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//! Oracles are closed forms or computed here independently of the library.

use std::f64::consts::{PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use geoflow_core::entropy::{cube_entropy, eps_delta_entropy, eps_entropy_set, finite_entropy, measure_entropy, WeightedEnsemble};
use geoflow_core::euler2d::{self, detect_blobs, random_vorticity, steady_functional_fit, EulerConfig, EulerSolver};
use geoflow_core::filament::{self, hasimoto, random_knot, step_rk4, Filament};
use geoflow_core::madelung::{madelung_forward, madelung_inverse, observed_orders, random_pair, residual_study, NlsStepper, TestFamily, WaveFunction1D};
use geoflow_core::point_vortex::{self as pv, Geometry, Section, VortexSystem};
use geoflow_core::spectral::{energy2d, Grid2, Grid3, VorticityField2D};
use geoflow_core::sticky::{self, continuum_evolve, embed_system, event_driven_run, oracle_endpoint, shock_velocity, variational_minimize};
use geoflow_core::topo3d::{abc_field, random_divfree_field, summarize};
use geoflow_core::zeitlin::{self, bracket_structure_constant, Integrator, ZeitlinConfig, ZeitlinModel};
use geoflow_core::{entropy, Complex64};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// ∫ωᵖ by the rectangle rule on the physical samples.
fn moment(w: &VorticityField2D, p: i32) -> f64 {
    w.to_physical().iter().map(|x| x.powi(p)).sum::<f64>() * w.grid().cell_area()
}

fn abs_moment(w: &VorticityField2D, p: i32) -> f64 {
    w.to_physical().iter().map(|x| x.abs().powi(p)).sum::<f64>() * w.grid().cell_area()
}

fn coeff_diff(a: &VorticityField2D, b: &VorticityField2D) -> f64 {
    a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn c1_steady_flow() -> Outcome {
    let grid = Grid2::square(128).unwrap();
    let w0 = VorticityField2D::from_stream_fn(grid, |_, y| y.cos());
    let cfg = EulerConfig { nx: 128, ny: 128, dt: 5e-3, t_end: 10.0, diag_every: 200, ..Default::default() };
    let out = euler2d::run(&cfg, &w0).unwrap();
    let z0 = moment(&w0, 2);
    let drift = out.series.iter().map(|r| rel(r.enstrophy, z0)).fold(0.0, f64::max);
    let drift_samples = rel(moment(&out.final_field, 2), z0);
    let fit = steady_functional_fit(&out.final_field).unwrap();
    // Δψ = −ψ for ψ = cos y
    let slope = fit.linear_slope();
    let pointwise = fit.psi.iter().zip(&fit.f).map(|(s, f)| (f + s).abs()).fold(0.0, f64::max);
    let ok = drift < 1e-6 && drift_samples < 1e-6 && fit.residual < 1e-10 && (slope + 1.0).abs() < 1e-8 && pointwise < 1e-8;
    (ok, format!("enstrophy drift {drift:.2e}, fit residual {:.2e}, slope {slope:.12}", fit.residual))
}

fn c2_conservation() -> Outcome {
    // Galerkin truncation conserves only the quadratic invariants; C3 and C4
    // hold while the enstrophy cascade stays below the cutoff
    let grid = Grid2::square(256).unwrap();
    let cfg = EulerConfig { nx: 256, ny: 256, dt: 2.5e-3, t_end: 1.0, diag_every: 40, ..Default::default() };
    let (mut de, mut dz, mut d3, mut d4) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for seed in 0..10 {
        let w0 = random_vorticity(grid, seed, 4.0);
        let out = euler2d::run(&cfg, &w0).unwrap();
        let w1 = &out.final_field;
        de = de.max(rel(energy2d(w1), energy2d(&w0)));
        dz = dz.max(rel(moment(w1, 2), moment(&w0, 2)));
        // odd moments can vanish: scale by ∫|ω|ᵖ
        d3 = d3.max((moment(w1, 3) - moment(&w0, 3)).abs() / abs_moment(&w0, 3));
        d4 = d4.max(rel(moment(w1, 4), moment(&w0, 4)));
        for r in &out.series {
            de = de.max(rel(r.energy, out.series[0].energy));
            dz = dz.max(rel(r.enstrophy, out.series[0].enstrophy));
        }
    }
    // Richardson halving on a band-limited field
    let g = Grid2::square(32).unwrap();
    let solver = EulerSolver::inviscid(g);
    let w0 = random_vorticity(g, 7, 4.0);
    let t = 0.8;
    let finals: Vec<VorticityField2D> = [0.04, 0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| {
            let mut w = w0.clone();
            for _ in 0..(t / dt as f64).round() as usize {
                w = solver.step_rk4(&w, dt);
            }
            w
        })
        .collect();
    let diffs: Vec<f64> = finals.windows(2).map(|p| coeff_diff(&p[0], &p[1])).collect();
    let orders: Vec<f64> = diffs.windows(2).map(|d| (d[0] / d[1]).log2()).collect();
    let order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = de < 1e-6 && dz < 1e-6 && d3 < 1e-4 && d4 < 1e-4 && order >= 3.9;
    (ok, format!("E {de:.1e}, Omega {dz:.1e}, C3 {d3:.1e}, C4 {d4:.1e}, RK4 orders {orders:.3?}"))
}

fn c3_zeitlin() -> Outcome {
    let n = 33;
    let model = ZeitlinModel::new(n).unwrap();
    let init = zeitlin::random_state(&model, 5, 3.0);
    let cfg = ZeitlinConfig { n, dt: 0.01, steps: 1000, diag_every: 100, integrator: Integrator::Isospectral };
    let (series, last) = zeitlin::run(&cfg, &init).unwrap();
    // traces of (−iW)ᵏ from the eigenvalues, scaled by Σ|λ|ᵏ
    let eig = |w: &zeitlin::CMatrix| (w * Complex64::new(0.0, -1.0)).symmetric_eigenvalues();
    let (l0, l1) = (eig(&init.w), eig(&last.w));
    let mut drift = [0.0f64; 4];
    for (k, d) in (2..=5).zip(drift.iter_mut()) {
        let tr = |l: &DVector<f64>| l.iter().map(|x| x.powi(k)).sum::<f64>();
        let scale: f64 = l0.iter().map(|x| x.abs().powi(k)).sum();
        *d = (tr(&l1) - tr(&l0)).abs() / scale;
    }
    let mut series_drift = 0.0f64;
    for row in &series {
        for k in 0..4 {
            let scale: f64 = l0.iter().map(|x| x.abs().powi(k as i32 + 2)).sum();
            series_drift = series_drift.max((row.traces[k] - series[0].traces[k]).abs() / scale);
        }
    }
    // sine bracket against the Poisson constant k × l, for every pair of
    // modes with components in {-1, 0, 1}; larger |k × l| is reported only
    let ns = [17usize, 33, 65];
    let order_of = |k: (i64, i64), l: (i64, i64)| {
        let exact = (k.0 * l.1 - k.1 * l.0) as f64;
        let errs: Vec<f64> = ns.iter().map(|&n| rel(bracket_structure_constant(n, k, l).unwrap(), exact)).collect();
        (0..2).map(|i| (errs[i] / errs[i + 1]).ln() / (ns[i + 1] as f64 / ns[i] as f64).ln()).fold(f64::INFINITY, f64::min)
    };
    let unit: Vec<(i64, i64)> = (-1..=1).flat_map(|a| (-1..=1).map(move |b| (a, b))).filter(|&m| m != (0, 0)).collect();
    let mut min_order = f64::INFINITY;
    for &k in &unit {
        for &l in &unit {
            if k.0 * l.1 != k.1 * l.0 {
                min_order = min_order.min(order_of(k, l));
            }
        }
    }
    let high = [order_of((1, 2), (2, -1)), order_of((3, 1), (0, 2))];
    let ok_orders = min_order >= 1.9;
    let worst = drift.iter().cloned().fold(series_drift, f64::max);
    let ok = worst < 1e-9 && ok_orders;
    (ok, format!("trace drift {worst:.1e}, min bracket order {min_order:.3} (|k x l| = 5, 6: {high:.3?})"))
}

fn plane_pair(dx: f64, dy: f64) -> (f64, f64) {
    let r2 = dx * dx + dy * dy;
    (-dy / (TAU * r2), dx / (TAU * r2))
}

/// Square image sums at M = 50..400, extrapolated in 1/M, minus the uniform
/// drift that square truncation adds.
fn torus_image_sum(sys: &VortexSystem) -> Vec<f64> {
    let n = sys.len();
    let ms = [50i64, 100, 200, 400];
    let levels: Vec<Vec<f64>> = ms
        .iter()
        .map(|&m| {
            let mut v = vec![0.0; 2 * n];
            for i in 0..n {
                for j in 0..n {
                    let dx = sys.positions[2 * i] - sys.positions[2 * j];
                    let dy = sys.positions[2 * i + 1] - sys.positions[2 * j + 1];
                    for a in -m..=m {
                        for b in -m..=m {
                            if i == j && a == 0 && b == 0 {
                                continue;
                            }
                            let (u, w) = plane_pair(dx + TAU * a as f64, dy + TAU * b as f64);
                            v[2 * i] += sys.strengths[j] * u;
                            v[2 * i + 1] += sys.strengths[j] * w;
                        }
                    }
                }
            }
            v
        })
        .collect();
    let x = nalgebra::Matrix4::from_fn(|r, c| if c == 0 { 1.0 } else { (ms[r] as f64).powi(-(c as i32 + 1)) });
    let lu = x.lu();
    let area = TAU * TAU;
    let gx: f64 = (0..n).map(|i| sys.strengths[i] * sys.positions[2 * i]).sum();
    let gy: f64 = (0..n).map(|i| sys.strengths[i] * sys.positions[2 * i + 1]).sum();
    (0..2 * n)
        .map(|c| {
            let v = lu.solve(&nalgebra::Vector4::from_fn(|r, _| levels[r][c])).unwrap()[0];
            if c % 2 == 0 {
                v - gy / (2.0 * area)
            } else {
                v + gx / (2.0 * area)
            }
        })
        .collect()
}

fn c4_point_vortex() -> Outcome {
    // equal pair at distance d: angular speed Γ/(πd²)
    let (g, d) = (1.0, 1.0);
    let sys = VortexSystem::new(Geometry::Plane, vec![-d / 2.0, 0.0, d / 2.0, 0.0], vec![g, g]).unwrap();
    let period = TAU / (g / (PI * d * d));
    let traj = pv::integrate(&sys, 3.0 * period, 1e-12, 0.1).unwrap();
    let xs = pv::poincare_section(&traj, &Section { component: 1, value: 0.0, direction: 1 });
    let period_err = xs.windows(2).map(|w| (w[1].t - w[0].t - period).abs()).fold(0.0, f64::max);
    let ok_period = xs.len() == 3 && period_err < 1e-8;

    let tol = 1e-10;
    let mut worst = Vec::new();
    let mut ok_drift = true;
    for geometry in Geometry::ALL {
        let mut w = 0.0f64;
        for seed in 0..100 {
            let sys = pv::random_system(geometry, 2 + seed as usize % 4, seed);
            let drift = pv::integrate(&sys, 5.0, tol, 0.5).unwrap().conserved_drift();
            w = w.max(drift);
        }
        ok_drift &= w < 100.0 * tol;
        worst.push(format!("{geometry} {w:.1e}"));
    }

    let mut kernel_err = 0.0f64;
    for seed in [1u64, 4, 8] {
        let sys = pv::random_system(Geometry::Torus, 3, seed);
        let ours = pv::rhs(&sys).unwrap();
        for (a, b) in ours.iter().zip(torus_image_sum(&sys)) {
            kernel_err = kernel_err.max((a - b).abs());
        }
    }

    let floor = 1e-2;
    let lam2 = pv::lyapunov_max(&sys, 1000.0, 1e-12).unwrap();
    let lam4 = pv::lyapunov_max(&pv::standard_chaotic_instance(), 300.0, 1e-12).unwrap();
    let ok = ok_period && ok_drift && kernel_err < 1e-10 && lam2 < floor && lam4 > 3.0 * floor;
    (
        ok,
        format!(
            "period err {period_err:.1e} ({} crossings), drift [{}], torus kernel {kernel_err:.1e}, lambda N=2 {lam2:.1e} N=4 {lam4:.3}",
            xs.len(),
            worst.join(", ")
        ),
    )
}

/// Smallest enclosing ball by exhaustive search over supports of size ≤ d+1,
/// circumcentres from the normal equations in the affine hull.
fn brute_ball(points: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let d = points[0].len();
    let n = points.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 1u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        if s.len() > d + 1 {
            continue;
        }
        let p0 = &points[s[0]];
        let k = s.len() - 1;
        let centre = if k == 0 {
            p0.clone()
        } else {
            let a = DMatrix::from_fn(d, k, |r, c| points[s[c + 1]][r] - p0[r]);
            let gram = a.transpose() * &a * 2.0;
            let rhs = DVector::from_fn(k, |c, _| (0..d).map(|r| a[(r, c)].powi(2)).sum());
            if gram.determinant().abs() < 1e-12 {
                continue;
            }
            let lam = gram.lu().solve(&rhs).unwrap();
            let off = &a * lam;
            (0..d).map(|r| p0[r] + off[r]).collect()
        };
        let radius = points.iter().map(|p| p.iter().zip(&centre).map(|(x, c)| (x - c).powi(2)).sum::<f64>().sqrt()).fold(0.0, f64::max);
        let on_sphere = s.iter().all(|&i| {
            let r: f64 = points[i].iter().zip(&centre).map(|(x, c)| (x - c).powi(2)).sum::<f64>().sqrt();
            (r - radius).abs() < 1e-9
        });
        if on_sphere && best.as_ref().is_none_or(|b| radius < b.1) {
            best = Some((centre, radius));
        }
    }
    best.unwrap()
}

fn c5_sticky() -> Outcome {
    let mut path_err = 0.0f64;
    let mut momentum_err = 0.0f64;
    let mut mismatched = 0;
    for seed in 0..50u64 {
        let n = 2 + seed as usize % 4;
        let sys = sticky::random_system(n, 1000 + seed);
        let run = event_driven_run(&sys, 1.0);
        let p0 = sys.momentum();
        let scale: f64 = sys.masses.iter().zip(&sys.velocities).map(|(m, v)| (m * v).abs()).sum();
        let momentum = |t: f64| run.velocities_at(t).iter().zip(&sys.masses).map(|(v, m)| v * m).sum::<f64>();
        for ev in &run.events {
            momentum_err = momentum_err
                .max((ev.momentum_after - ev.momentum_before).abs() / scale)
                .max((ev.momentum_after - p0).abs() / scale)
                .max((momentum(ev.t) - p0).abs() / scale);
        }
        let res = variational_minimize(&sys.masses, &sys.positions, &oracle_endpoint(&sys)).unwrap();
        if res.history.events.len() != run.events.len() {
            mismatched += 1;
        }
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            for (a, b) in res.path.visible_at(t).iter().zip(run.positions_at(t)) {
                path_err = path_err.max((a - b).abs());
            }
        }
    }

    let grid = 120;
    let counts = [20.0, 35.0, 40.0, 25.0];
    let mut continuum_err = 0.0f64;
    for seed in 0..10 {
        let mut sys = sticky::random_system(4, 2000 + seed);
        sys.masses = counts.to_vec();
        let (f0, v0) = embed_system(&sys, grid).unwrap();
        let run = event_driven_run(&sys, 2.0);
        for k in 0..=20 {
            let t = k as f64 * 0.1;
            let prof = continuum_evolve(&f0, &v0, t).unwrap();
            let x = run.positions_at(t);
            let expect = counts.iter().zip(&x).flat_map(|(c, xi)| std::iter::repeat_n(*xi, *c as usize));
            for (a, b) in prof.samples().iter().zip(expect) {
                continuum_err = continuum_err.max((a - b).abs());
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ball_err = 0.0f64;
    for _ in 0..1000 {
        let d = rng.random_range(1..=3);
        let n = rng.random_range(1..=8);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ours = shock_velocity(&pts).unwrap();
        let (centre, radius) = brute_ball(&pts);
        for (a, b) in ours.center.iter().zip(&centre) {
            ball_err = ball_err.max((a - b).abs());
        }
        ball_err = ball_err.max((ours.radius - radius).abs());
    }
    let ok = path_err < 1e-8 && mismatched == 0 && momentum_err < 1e-14 && continuum_err < 1e-8 && ball_err < 1e-10;
    (
        ok,
        format!("path err {path_err:.1e}, history mismatches {mismatched}, momentum {momentum_err:.1e}, continuum {continuum_err:.1e}, ball {ball_err:.1e}"),
    )
}

fn norm2(psi: &WaveFunction1D) -> f64 {
    psi.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * psi.length / psi.samples.len() as f64
}

fn c6_madelung() -> Outcome {
    let levels = residual_study(&TestFamily::default(), 0.5, &[0.004, 0.002, 0.001]).unwrap();
    let orders = observed_orders(&levels);
    let ok_orders = orders.iter().all(|&(a, b)| a >= 1.9 && b >= 1.9);

    let mut trip = 0.0f64;
    for seed in 0..20 {
        let p = random_pair(64, 3.0, seed);
        let q = madelung_inverse(&madelung_forward(&p)).unwrap();
        // phase is defined modulo 4π
        let shift = ((q.theta[0] - p.theta[0]) / (2.0 * TAU)).round() * 2.0 * TAU;
        for j in 0..64 {
            trip = trip.max((q.rho[j] - p.rho[j]).abs()).max((q.theta[j] - shift - p.theta[j]).abs());
        }
    }

    let family = TestFamily::default();
    let model = family.model();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let samples = (0..family.n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let mut psi = WaveFunction1D::new(TAU, samples).unwrap();
    let stepper = NlsStepper::new(family.n, TAU, 1e-3).unwrap();
    let n0 = norm2(&psi);
    let mut per_step = 0.0f64;
    let mut prev = n0;
    for _ in 0..2000 {
        stepper.step(&mut psi, &model).unwrap();
        let now = norm2(&psi);
        per_step = per_step.max((now - prev).abs() / n0);
        prev = now;
    }
    let ok = ok_orders && trip < 1e-12 && per_step < 1e-12;
    (ok, format!("residual orders {orders:.3?}, round trip {trip:.1e}, norm per step {per_step:.1e}"))
}

fn c7_filament() -> Outcome {
    let mut speed_err = 0.0f64;
    let mut radius_err = 0.0f64;
    for (r, m, dt) in [(1.0, 256, 1e-4), (2.0, 256, 2e-4)] {
        let mut f = Filament::circle(r, m).unwrap();
        for _ in 0..1000 {
            f = step_rk4(&f, dt).unwrap();
        }
        let t = 1000.0 * dt;
        let zc = f.points.iter().map(|p| p[2]).sum::<f64>() / m as f64;
        speed_err = speed_err.max(((zc / t) * r - 1.0).abs());
        let (cx, cy) = (f.points.iter().map(|p| p[0]).sum::<f64>() / m as f64, f.points.iter().map(|p| p[1]).sum::<f64>() / m as f64);
        for p in &f.points {
            radius_err = radius_err.max(((p[0] - cx).hypot(p[1] - cy) - r).abs());
        }
    }

    let mut length_rate = 0.0f64;
    for seed in [11u64, 12, 13] {
        let f = random_knot(128, seed).unwrap();
        let (dt, steps) = (2e-4, 1000);
        let (diags, _) = filament::run(&f, dt, steps, 100).unwrap();
        let l0 = diags[0].length;
        for d in &diags[1..] {
            length_rate = length_rate.max(rel(d.length, l0) / d.t);
        }
    }

    let mut hasimoto_err = 0.0f64;
    for (a, b) in [(1.0, 0.5), (0.8, -0.3), (2.0, 1.0)] {
        let c2 = a * a + b * b;
        let (k0, t0) = (a / c2, b / c2);
        let psi = hasimoto(&Filament::helix(a, b, 64).unwrap()).unwrap();
        let phase = psi.samples[0] / Complex64::from_polar(k0, t0 * psi.x(0));
        let phase = phase / phase.norm();
        for (j, z) in psi.samples.iter().enumerate() {
            hasimoto_err = hasimoto_err.max((z / phase - Complex64::from_polar(k0, t0 * psi.x(j))).norm());
        }
    }
    let ok = speed_err < 1e-6 && radius_err < 1e-8 && length_rate < 1e-6 && hasimoto_err < 1e-8;
    (ok, format!("speed err {speed_err:.1e}, radius drift {radius_err:.1e}, length rate {length_rate:.1e}, hasimoto {hasimoto_err:.1e}"))
}

fn c8_topology() -> Outcome {
    let u = abc_field(Grid3::new(32).unwrap(), 1.0, 1.0, 1.0).unwrap();
    let s = summarize(&u, 1.0).unwrap();
    let vol = TAU.powi(3);
    let (de, dh) = (rel(s.energy, 1.5 * vol), rel(s.helicity, 3.0 * vol));
    // energy from the samples
    let de_samples = rel(0.5 * u.components.iter().flatten().map(|x| x * x).sum::<f64>() * u.grid.cell_volume(), 1.5 * vol);
    let grid = Grid3::new(16).unwrap();
    let mut worst_ratio = 0.0f64;
    for seed in 0..1000 {
        let v = random_divfree_field(grid, seed, 5.0);
        let t = summarize(&v, 1.0).unwrap();
        worst_ratio = worst_ratio.max(t.helicity.abs() / (2.0 * t.energy));
    }
    let ok = s.beltrami_residual < 1e-12 && de < 1e-10 && dh < 1e-10 && de_samples < 1e-10 && worst_ratio <= 1.0;
    (ok, format!("beltrami {:.1e}, E err {de:.1e}, H err {dh:.1e}, max |H|/2E {worst_ratio:.4}", s.beltrami_residual))
}

fn uniform_cube(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect()).collect()
}

fn c9_entropy() -> Outcome {
    let mut ok_endpoints = finite_entropy(&[1.0]).unwrap() == 0.0 && finite_entropy(&[0.0, 1.0, 0.0]).unwrap() == 0.0;
    for n in [2usize, 3, 7, 16, 100, 1000] {
        ok_endpoints &= finite_entropy(&vec![1.0 / n as f64; n]).unwrap() == (n as f64).log2();
    }

    let mut leb = 0.0f64;
    for d in 1..=3usize {
        let ens = WeightedEnsemble::uniform(uniform_cube(d, 50_000, 30 + d as u64)).unwrap();
        for eps in [0.5, 0.25, 0.125] {
            let m = measure_entropy(&ens, d, eps).unwrap();
            leb = leb.max((m.value / (d as f64 * (1.0 / eps).log2()) - 1.0).abs());
        }
    }

    let mut cover_violations = 0;
    let mut instances = 0;
    for seed in 0..30 {
        let d = 1 + seed as usize % 3;
        let pts = uniform_cube(d, 150, 100 + seed);
        for eps in [0.03, 0.07, 0.15, 0.3, 0.6] {
            let s = eps_entropy_set(&pts, eps).unwrap();
            instances += 1;
            if s.packing_count > s.cover_count {
                cover_violations += 1;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<Vec<f64>> = (0..4000).map(|_| vec![rng.random_range(0.0..1.0f64).powi(2), rng.random_range(0.0..1.0)]).collect();
    let ens = WeightedEnsemble::uniform(pts.clone()).unwrap();
    let eps_list = [0.5, 0.25, 0.125, 0.0625];
    let deltas = [0.0, 0.01, 0.05, 0.1, 0.3];
    let table: Vec<Vec<f64>> = eps_list.iter().map(|&e| deltas.iter().map(|&dl| eps_delta_entropy(&ens, e, dl).unwrap()).collect()).collect();
    let mono_delta = table.iter().all(|row| row.windows(2).all(|w| w[1] <= w[0]));
    let mono_eps = (0..deltas.len()).all(|j| table.windows(2).all(|w| w[1][j] >= w[0][j]));
    // δ = 0 keeps every occupied cube
    let full = eps_list.iter().zip(&table).all(|(&e, row)| row[0] == cube_entropy(&pts, &[2], e).unwrap());

    let ok = ok_endpoints && leb < 0.05 && cover_violations == 0 && mono_delta && mono_eps && full;
    (
        ok,
        format!(
            "endpoints exact {ok_endpoints}, Lebesgue max rel err {leb:.3}, packing > cover on {cover_violations}/{instances}, eps_delta monotone delta {mono_delta} eps {mono_eps}"
        ),
    )
}

fn trend(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let (mt, my) = (ts.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = ts.iter().zip(ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    sxy / sxx
}

fn c10_deliverables() -> Outcome {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();

    let grid = Grid2::square(256).unwrap();
    let cfg = EulerConfig { nx: 256, ny: 256, dt: 4e-3, t_end: 10.0, nu_h: 1e-14, hyper_order: 4, diag_every: 50, ..Default::default() };
    let w0 = random_vorticity(grid, 1, 12.0);
    let out = euler2d::run(&cfg, &w0).unwrap();
    let mut csv = String::from(euler2d::DiagnosticRow::CSV_HEADER);
    csv.push('\n');
    for r in &out.series {
        csv.push_str(&r.csv());
        csv.push('\n');
    }
    std::fs::write(dir.join("blob_series.csv"), csv).unwrap();
    let late: Vec<&euler2d::DiagnosticRow> = out.series.iter().filter(|r| r.t >= 2.0).collect();
    let slope = trend(&late.iter().map(|r| r.t).collect::<Vec<_>>(), &late.iter().map(|r| r.n_blobs as f64).collect::<Vec<_>>());
    let (first, last) = (out.series[0].n_blobs, detect_blobs(&out.final_field, cfg.blob_threshold).count());

    // n = 8 saturates at log₂K for K = 32 members; lower n stays informative
    let ecfg = entropy::EntropyExperimentConfig { n_list: vec![1, 2, 8], ..Default::default() };
    let series = entropy::entropy_decrease_experiment(&ecfg).unwrap();
    std::fs::write(dir.join("entropy_series.csv"), series.to_csv()).unwrap();
    let (h0, h1) = (&series.rows[0].values, &series.rows[series.rows.len() - 1].values);
    let ends: Vec<String> = ecfg.n_list.iter().enumerate().map(|(i, n)| format!("n={n}: {:.3} -> {:.3}", h0[i], h1[i])).collect();
    (
        true,
        format!(
            "blobs {first} -> {last}, post-transient trend {slope:+.3}/time, max CFL {:.2}; entropy bits {} over {} samples; written to {}",
            out.max_cfl,
            ends.join(", "),
            series.rows.len(),
            dir.display()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("steady-flow fidelity", c1_steady_flow),
        ("conservation suite", c2_conservation),
        ("zeitlin suite", c3_zeitlin),
        ("point-vortex suite", c4_point_vortex),
        ("sticky suite", c5_sticky),
        ("madelung suite", c6_madelung),
        ("filament suite", c7_filament),
        ("topology suite", c8_topology),
        ("entropy suite", c9_entropy),
        ("phenomenology deliverables (observational)", c10_deliverables),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => (false, format!("panicked: {}", e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {name}: {} ({detail}) [{:.1}s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
