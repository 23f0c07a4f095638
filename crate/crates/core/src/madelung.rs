//! Madelung transform between (ρ, θ) and wave functions on a periodic 1D grid,
//! split-step NLS `i ψ_t = −ψ_xx + Vψ − f(|ψ|²)ψ`, and the residual of the
//! barotropic system
//!
//! ```text
//! ρ_t + (ρ v)_x = 0
//! v_t + v v_x + ∂x(2V − 2f(ρ) − 2 (√ρ)_xx / √ρ) = 0,   v = θ_x
//! ```
//!
//! Convention: `|ψ|² = ρ`, `arg ψ = θ/2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{derivative_index, signed_index, FftNd};

/// Smallest |ψ| accepted by the inverse transform.
pub const MIN_AMPLITUDE: f64 = 1e-6;
/// Positivity floor for ρ in residual evaluation.
pub const RHO_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MadelungError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("wave function vanishes at sample {index} (|psi| = {amplitude:e}); zeros are not supported")]
    ZeroCrossing { index: usize, amplitude: f64 },
    #[error("density {value:e} at sample {index} is below the positivity floor")]
    NonPositiveDensity { index: usize, value: f64 },
    #[error("time step {dt} does not resolve the fastest linear phase (needs dt*kmax^2 < pi)")]
    StepTooLarge { dt: f64 },
}

pub type Result<T> = std::result::Result<T, MadelungError>;

fn check_grid(n: usize, length: f64) -> Result<()> {
    if n < 4 {
        return Err(MadelungError::Invalid("grid needs at least 4 samples".into()));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(MadelungError::Invalid("period must be positive".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction1D {
    pub length: f64,
    pub samples: Vec<Complex64>,
}

impl WaveFunction1D {
    pub fn new(length: f64, samples: Vec<Complex64>) -> Result<Self> {
        check_grid(samples.len(), length)?;
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(MadelungError::Invalid("non-finite wave function sample".into()));
        }
        Ok(Self { length, samples })
    }

    pub fn from_fn(n: usize, length: f64, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        check_grid(n, length)?;
        Self::new(length, (0..n).map(|j| f(j as f64 * length / n as f64)).collect())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dx(&self) -> f64 {
        self.length / self.len() as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    /// ∫|ψ|² dx.
    pub fn norm2(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dx()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadelungPair {
    pub length: f64,
    pub rho: Vec<f64>,
    /// Continuous branch along the grid; `θ(L) − θ(0) = 4π·winding`.
    pub theta: Vec<f64>,
    pub winding: i64,
}

impl MadelungPair {
    /// Winding is inferred from the jump across the periodic seam.
    pub fn new(length: f64, rho: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        check_grid(rho.len(), length)?;
        if theta.len() != rho.len() {
            return Err(MadelungError::Invalid("rho and theta lengths differ".into()));
        }
        if let Some(index) = rho.iter().position(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(MadelungError::NonPositiveDensity { index, value: rho[index] });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(MadelungError::Invalid("non-finite phase sample".into()));
        }
        let n = theta.len();
        let seam = 2.0 * theta[n - 1] - theta[n - 2] - theta[0];
        let winding = (seam / (4.0 * PI)).round() as i64;
        Ok(Self {
            length,
            rho,
            theta,
            winding,
        })
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// v = θ_x: constant winding slope plus the spectral derivative of the periodic remainder.
    pub fn velocity(&self) -> Vec<f64> {
        let n = self.len();
        let slope = 4.0 * PI * self.winding as f64 / self.length;
        let periodic: Vec<f64> = (0..n).map(|j| self.theta[j] - slope * j as f64 * self.length / n as f64).collect();
        let d = Spectral1D::new(n, self.length).derivative(&periodic, 1);
        d.into_iter().map(|x| x + slope).collect()
    }
}

/// Real periodic spectral derivatives.
struct Spectral1D {
    fft: FftNd,
    n: usize,
    k0: f64,
}

impl Spectral1D {
    fn new(n: usize, length: f64) -> Self {
        Self {
            fft: FftNd::new(&[n]),
            n,
            k0: 2.0 * PI / length,
        }
    }

    fn derivative(&self, f: &[f64], order: u32) -> Vec<f64> {
        let mut c = self.fft.forward_real(f);
        for (i, z) in c.iter_mut().enumerate() {
            let k = if order % 2 == 1 {
                derivative_index(i, self.n)
            } else {
                signed_index(i, self.n)
            } as f64
                * self.k0;
            *z *= Complex64::new(0.0, k).powu(order);
        }
        self.fft.inverse_real(&c)
    }
}

/// ψ = √ρ · e^{iθ/2}.
pub fn madelung_forward(pair: &MadelungPair) -> WaveFunction1D {
    WaveFunction1D {
        length: pair.length,
        samples: pair
            .rho
            .iter()
            .zip(&pair.theta)
            .map(|(r, t)| Complex64::from_polar(r.sqrt(), 0.5 * t))
            .collect(),
    }
}

/// ρ = |ψ|², θ = 2·(arg ψ continued along the grid), starting on the principal branch.
pub fn madelung_inverse(psi: &WaveFunction1D) -> Result<MadelungPair> {
    if let Some(index) = psi.samples.iter().position(|z| z.norm() < MIN_AMPLITUDE) {
        return Err(MadelungError::ZeroCrossing {
            index,
            amplitude: psi.samples[index].norm(),
        });
    }
    let n = psi.len();
    let mut phase = Vec::with_capacity(n);
    let mut acc = psi.samples[0].arg();
    phase.push(acc);
    for j in 1..n {
        // increment by the principal argument of the ratio of neighbours
        acc += (psi.samples[j] / psi.samples[j - 1]).arg();
        phase.push(acc);
    }
    let seam = acc + (psi.samples[0] / psi.samples[n - 1]).arg() - phase[0];
    let winding = (seam / (2.0 * PI)).round() as i64;
    Ok(MadelungPair {
        length: psi.length,
        rho: psi.samples.iter().map(|z| z.norm_sqr()).collect(),
        theta: phase.into_iter().map(|p| 2.0 * p).collect(),
        winding,
    })
}

/// f(ρ) = Σ cₖ ρᵏ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub coeffs: Vec<f64>,
}

impl Nonlinearity {
    pub fn zero() -> Self {
        Self { coeffs: vec![] }
    }

    pub fn cubic(g: f64) -> Self {
        Self { coeffs: vec![0.0, g] }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * rho + c)
    }

    /// Antiderivative F with F(0) = 0.
    pub fn primitive(&self, rho: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * rho.powi(k as i32 + 1) / (k as f64 + 1.0))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlsModel {
    pub potential: Vec<f64>,
    pub nonlinearity: Nonlinearity,
}

impl NlsModel {
    pub fn free(n: usize) -> Self {
        Self {
            potential: vec![0.0; n],
            nonlinearity: Nonlinearity::zero(),
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.potential.len() != n {
            return Err(MadelungError::Invalid("potential length differs from grid".into()));
        }
        Ok(())
    }

    /// E = ∫ |ψ_x|² + V|ψ|² − F(|ψ|²) dx.
    pub fn energy(&self, psi: &WaveFunction1D) -> f64 {
        let n = psi.len();
        let fft = FftNd::new(&[n]);
        let k0 = 2.0 * PI / psi.length;
        let mut c = psi.samples.clone();
        fft.forward(&mut c);
        // Parseval with normalized coefficients: ∫|ψ_x|² = L Σ k²|ĉ|²
        let kinetic: f64 = c
            .iter()
            .enumerate()
            .map(|(i, z)| (signed_index(i, n) as f64 * k0).powi(2) * z.norm_sqr())
            .sum::<f64>()
            * psi.length;
        let local: f64 = psi
            .samples
            .iter()
            .zip(&self.potential)
            .map(|(z, v)| v * z.norm_sqr() - self.nonlinearity.primitive(z.norm_sqr()))
            .sum::<f64>()
            * psi.dx();
        kinetic + local
    }
}

/// Compensated Σ|z|².
fn sum_sq(v: &[Complex64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for z in v {
        let y = z.norm_sqr() - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

/// Reusable Strang splitting stepper.
pub struct NlsStepper {
    fft: FftNd,
    half_kinetic: Vec<Complex64>,
    dt: f64,
}

impl NlsStepper {
    pub fn new(n: usize, length: f64, dt: f64) -> Result<Self> {
        check_grid(n, length)?;
        let k0 = 2.0 * PI / length;
        let kmax = (n / 2) as f64 * k0;
        if !(dt > 0.0) || dt * kmax * kmax >= PI {
            return Err(MadelungError::StepTooLarge { dt });
        }
        let half_kinetic = (0..n)
            .map(|i| {
                let k = signed_index(i, n) as f64 * k0;
                Complex64::from_polar(1.0, -k * k * 0.5 * dt)
            })
            .collect();
        Ok(Self {
            fft: FftNd::new(&[n]),
            half_kinetic,
            dt,
        })
    }

    fn kinetic(&self, psi: &mut [Complex64]) {
        self.fft.forward(psi);
        for (z, p) in psi.iter_mut().zip(&self.half_kinetic) {
            *z *= p;
        }
        self.fft.inverse(psi);
    }

    /// Every substep is unitary. The FFT's twiddle rounding leaves a
    /// systematic ~1e-16 norm bias per transform pair, so the discrete L²
    /// norm is restored at the end of the step.
    pub fn step(&self, psi: &mut WaveFunction1D, model: &NlsModel) -> Result<()> {
        let n0 = sum_sq(&psi.samples);
        self.step_to_norm(psi, model, n0)
    }

    /// `steps` steps, each renormalized to the initial norm so the rounding
    /// corrections do not compound.
    pub fn evolve(&self, psi: &mut WaveFunction1D, model: &NlsModel, steps: usize) -> Result<()> {
        let n0 = sum_sq(&psi.samples);
        for _ in 0..steps {
            self.step_to_norm(psi, model, n0)?;
        }
        Ok(())
    }

    fn step_to_norm(&self, psi: &mut WaveFunction1D, model: &NlsModel, n0: f64) -> Result<()> {
        model.check(psi.len())?;
        self.kinetic(&mut psi.samples);
        for (z, v) in psi.samples.iter_mut().zip(&model.potential) {
            let rate = v - model.nonlinearity.eval(z.norm_sqr());
            *z *= Complex64::from_polar(1.0, -rate * self.dt);
        }
        self.kinetic(&mut psi.samples);
        let n1 = sum_sq(&psi.samples);
        if n1 > 0.0 {
            let c = (n0 / n1).sqrt();
            psi.samples.iter_mut().for_each(|z| *z *= c);
        }
        Ok(())
    }
}

/// One split step: half kinetic, full potential and nonlinearity, half kinetic.
pub fn nls_step(psi: &WaveFunction1D, model: &NlsModel, dt: f64) -> Result<WaveFunction1D> {
    let stepper = NlsStepper::new(psi.len(), psi.length, dt)?;
    let mut out = psi.clone();
    stepper.step(&mut out, model)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarotropicResidual {
    /// RMS of ρ_t + (ρv)_x.
    pub continuity: f64,
    /// RMS of the momentum equation.
    pub momentum: f64,
}

/// Residual of the barotropic system at the middle of three snapshots spaced `dt`.
pub fn barotropic_residual(
    prev: &MadelungPair,
    cur: &MadelungPair,
    next: &MadelungPair,
    dt: f64,
    model: &NlsModel,
) -> Result<BarotropicResidual> {
    let n = cur.len();
    model.check(n)?;
    if prev.len() != n || next.len() != n {
        return Err(MadelungError::Invalid("snapshots must share a grid".into()));
    }
    for p in [prev, cur, next] {
        if let Some(index) = p.rho.iter().position(|r| !(*r >= RHO_FLOOR)) {
            return Err(MadelungError::NonPositiveDensity { index, value: p.rho[index] });
        }
    }
    let sp = Spectral1D::new(n, cur.length);
    let (vp, v, vn) = (prev.velocity(), cur.velocity(), next.velocity());
    let rho = &cur.rho;
    let flux: Vec<f64> = rho.iter().zip(&v).map(|(r, v)| r * v).collect();
    let dflux = sp.derivative(&flux, 1);
    let amp: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    let amp_xx = sp.derivative(&amp, 2);
    let pressure: Vec<f64> = (0..n)
        .map(|j| 2.0 * model.potential[j] - 2.0 * model.nonlinearity.eval(rho[j]) - 2.0 * amp_xx[j] / amp[j])
        .collect();
    let dpressure = sp.derivative(&pressure, 1);
    let vx = sp.derivative(&v, 1);
    let mut c2 = 0.0;
    let mut m2 = 0.0;
    for j in 0..n {
        let rho_t = (next.rho[j] - prev.rho[j]) / (2.0 * dt);
        let v_t = (vn[j] - vp[j]) / (2.0 * dt);
        c2 += (rho_t + dflux[j]).powi(2);
        m2 += (v_t + v[j] * vx[j] + dpressure[j]).powi(2);
    }
    Ok(BarotropicResidual {
        continuity: (c2 / n as f64).sqrt(),
        momentum: (m2 / n as f64).sqrt(),
    })
}

/// Smooth zero-free initial data and model used for residual convergence checks:
/// ψ₀ = (1 + a cos x)·exp(i b sin x) on [0, 2π), V = c cos x, f(ρ) = g ρ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFamily {
    pub n: usize,
    pub amplitude: f64,
    pub phase: f64,
    pub potential: f64,
    pub coupling: f64,
}

impl Default for TestFamily {
    fn default() -> Self {
        Self {
            n: 32,
            amplitude: 0.2,
            phase: 0.3,
            potential: 0.5,
            coupling: 1.0,
        }
    }
}

impl TestFamily {
    pub fn initial(&self) -> WaveFunction1D {
        let (a, b) = (self.amplitude, self.phase);
        WaveFunction1D::from_fn(self.n, 2.0 * PI, |x| Complex64::from_polar(1.0 + a * x.cos(), b * x.sin())).expect("valid grid")
    }

    pub fn model(&self) -> NlsModel {
        NlsModel {
            potential: (0..self.n).map(|j| self.potential * (2.0 * PI * j as f64 / self.n as f64).cos()).collect(),
            nonlinearity: Nonlinearity::cubic(self.coupling),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualLevel {
    pub dt: f64,
    pub continuity: f64,
    pub momentum: f64,
}

impl ResidualLevel {
    pub const CSV_HEADER: &'static str = "dt,continuity,momentum";

    pub fn csv(&self) -> String {
        crate::io::csv_row(&[self.dt, self.continuity, self.momentum])
    }
}

/// Evolves the family to `t_end` at each step size and evaluates the residual
/// there from snapshots one step apart.
pub fn residual_study(family: &TestFamily, t_end: f64, dts: &[f64]) -> Result<Vec<ResidualLevel>> {
    let model = family.model();
    dts.iter()
        .map(|&dt| {
            let steps = (t_end / dt).round() as usize;
            if steps < 1 {
                return Err(MadelungError::Invalid("t_end shorter than one step".into()));
            }
            let stepper = NlsStepper::new(family.n, 2.0 * PI, dt)?;
            let mut psi = family.initial();
            // snapshots at t_end − dt, t_end, t_end + dt
            stepper.evolve(&mut psi, &model, steps - 1)?;
            let mut snaps = Vec::with_capacity(3);
            for _ in 0..3 {
                snaps.push(madelung_inverse(&psi)?);
                stepper.step(&mut psi, &model)?;
            }
            let r = barotropic_residual(&snaps[0], &snaps[1], &snaps[2], dt, &model)?;
            Ok(ResidualLevel {
                dt,
                continuity: r.continuity,
                momentum: r.momentum,
            })
        })
        .collect()
}

/// Observed orders `log2(r(dt)/r(dt/2))` between consecutive levels (momentum, continuity).
pub fn observed_orders(levels: &[ResidualLevel]) -> Vec<(f64, f64)> {
    levels
        .windows(2)
        .map(|w| {
            let ratio = w[0].dt / w[1].dt;
            (
                (w[0].continuity / w[1].continuity).ln() / ratio.ln(),
                (w[0].momentum / w[1].momentum).ln() / ratio.ln(),
            )
        })
        .collect()
}

/// Positive random density and smooth random phase built from a few low modes.
pub fn random_pair(n: usize, length: f64, seed: u64) -> MadelungPair {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, f64, f64)> = (1..=4)
        .map(|_| {
            (
                rng.random_range(-0.15..0.15),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let k0 = 2.0 * PI / length;
    let x = |j: usize| j as f64 * length / n as f64;
    let rho = (0..n)
        .map(|j| 1.0 + modes.iter().enumerate().map(|(m, p)| p.0 * ((m + 1) as f64 * k0 * x(j) + p.1).cos()).sum::<f64>())
        .collect();
    let theta = (0..n)
        .map(|j| modes.iter().enumerate().map(|(m, p)| p.2 * ((m + 1) as f64 * k0 * x(j) + p.3).sin()).sum::<f64>())
        .collect();
    MadelungPair::new(length, rho, theta).expect("positive by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pi_grid(n: usize) -> Vec<f64> {
        (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
    }

    #[test]
    fn trivial_pair_gives_unit_wave() {
        let p = MadelungPair::new(2.0 * PI, vec![1.0; 16], vec![0.0; 16]).unwrap();
        let psi = madelung_forward(&p);
        assert!(psi.samples.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn linear_phase_gives_plane_wave() {
        let n = 32;
        let k = 3.0;
        let xs = two_pi_grid(n);
        let p = MadelungPair::new(2.0 * PI, vec![1.0; n], xs.iter().map(|x| 2.0 * k * x).collect()).unwrap();
        assert_eq!(p.winding, 3);
        let psi = madelung_forward(&p);
        for (z, x) in psi.samples.iter().zip(&xs) {
            assert!((z - Complex64::from_polar(1.0, k * x)).norm() < 1e-13);
        }
        // v = θ_x = 2k
        assert!(p.velocity().iter().all(|v| (v - 2.0 * k).abs() < 1e-12));
        let back = madelung_inverse(&psi).unwrap();
        assert_eq!(back.winding, 3);
    }

    #[test]
    fn round_trip_is_identity_up_to_constant() {
        for seed in 0..10 {
            let p = random_pair(64, 3.0, seed);
            let q = madelung_inverse(&madelung_forward(&p)).unwrap();
            // θ is determined modulo 4π
            let shift = ((q.theta[0] - p.theta[0]) / (4.0 * PI)).round() * 4.0 * PI;
            for j in 0..64 {
                assert!((q.rho[j] - p.rho[j]).abs() < 1e-12);
                assert!((q.theta[j] - shift - p.theta[j]).abs() < 1e-12);
            }
            assert_eq!(q.winding, p.winding);
        }
    }

    #[test]
    fn zeros_are_refused() {
        let psi = WaveFunction1D::from_fn(32, 2.0 * PI, |x| Complex64::new(x.cos(), 0.0)).unwrap();
        assert!(matches!(madelung_inverse(&psi), Err(MadelungError::ZeroCrossing { .. })));
        assert!(MadelungPair::new(1.0, vec![1.0, 0.0, 1.0, 1.0], vec![0.0; 4]).is_err());
    }

    #[test]
    fn free_plane_wave_phase_advance() {
        let n = 32;
        let k = 5.0;
        let dt = 0.01;
        let psi = WaveFunction1D::from_fn(n, 2.0 * PI, |x| Complex64::from_polar(1.0, k * x)).unwrap();
        let out = nls_step(&psi, &NlsModel::free(n), dt).unwrap();
        let expect = Complex64::from_polar(1.0, -k * k * dt);
        for (a, b) in out.samples.iter().zip(&psi.samples) {
            assert!((a - b * expect).norm() < 1e-13);
        }
    }

    #[test]
    fn uniform_state_rotates_at_f_minus_v() {
        let n = 16;
        let rho0: f64 = 2.0;
        let v0 = 0.3;
        let model = NlsModel {
            potential: vec![v0; n],
            nonlinearity: Nonlinearity::cubic(1.0),
        };
        let psi = WaveFunction1D::new(2.0 * PI, vec![Complex64::new(rho0.sqrt(), 0.0); n]).unwrap();
        let dt = 0.01;
        let stepper = NlsStepper::new(n, 2.0 * PI, dt).unwrap();
        let mut cur = psi.clone();
        for _ in 0..100 {
            stepper.step(&mut cur, &model).unwrap();
        }
        let expect = Complex64::from_polar(rho0.sqrt(), (rho0 - v0) * 1.0);
        assert!(cur.samples.iter().all(|z| (z - expect).norm() < 1e-12));
    }

    #[test]
    fn step_size_limit() {
        // kmax = 16 on a 32-point 2π grid: dt < π/256
        assert!(NlsStepper::new(32, 2.0 * PI, 0.013).is_err());
        assert!(NlsStepper::new(32, 2.0 * PI, 0.012).is_ok());
    }

    #[test]
    fn norm_is_conserved() {
        let family = TestFamily::default();
        let model = family.model();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples = (0..family.n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let mut psi = WaveFunction1D::new(2.0 * PI, samples).unwrap();
        let n0 = psi.norm2();
        let stepper = NlsStepper::new(family.n, 2.0 * PI, 0.001).unwrap();
        stepper.evolve(&mut psi, &model, 10_000).unwrap();
        assert!(((psi.norm2() - n0) / n0).abs() < 1e-12, "{:e}", (psi.norm2() - n0) / n0);
    }

    #[test]
    fn energy_drift_is_second_order() {
        let family = TestFamily::default();
        let model = family.model();
        let drift = |dt: f64| {
            let stepper = NlsStepper::new(family.n, 2.0 * PI, dt).unwrap();
            let mut psi = family.initial();
            let e0 = model.energy(&psi);
            let mut worst: f64 = 0.0;
            for _ in 0..(1.0 / dt).round() as usize {
                stepper.step(&mut psi, &model).unwrap();
                worst = worst.max((model.energy(&psi) - e0).abs());
            }
            worst
        };
        let (a, b) = (drift(0.004), drift(0.002));
        let order = (a / b).log2();
        assert!(order > 1.8, "{a} {b} {order}");
    }

    #[test]
    fn static_ground_state_has_zero_residual() {
        let n = 32;
        let rho0: f64 = 1.5;
        let model = NlsModel {
            potential: vec![0.0; n],
            nonlinearity: Nonlinearity::cubic(1.0),
        };
        let dt = 0.01;
        let snap = |t: f64| MadelungPair::new(2.0 * PI, vec![rho0; n], vec![2.0 * rho0 * t; n]).unwrap();
        let r = barotropic_residual(&snap(0.0), &snap(dt), &snap(2.0 * dt), dt, &model).unwrap();
        assert!(r.continuity < 1e-10 && r.momentum < 1e-10, "{r:?}");
    }

    #[test]
    fn travelling_plane_wave_is_exact_solution() {
        // ψ = e^{i(kx − k²t)}: ρ = 1, v = 2k constant
        let n = 32;
        let k = 2.0;
        let xs = two_pi_grid(n);
        let snap = |t: f64| {
            let psi = WaveFunction1D::new(2.0 * PI, xs.iter().map(|x| Complex64::from_polar(1.0, k * x - k * k * t)).collect()).unwrap();
            madelung_inverse(&psi).unwrap()
        };
        let r = barotropic_residual(&snap(0.0), &snap(0.01), &snap(0.02), 0.01, &NlsModel::free(n)).unwrap();
        assert!(r.continuity < 1e-10 && r.momentum < 1e-10, "{r:?}");
    }

    #[test]
    fn residual_converges_at_second_order() {
        let levels = residual_study(&TestFamily::default(), 0.5, &[0.004, 0.002, 0.001]).unwrap();
        for (oc, om) in observed_orders(&levels) {
            assert!(oc >= 1.9 && om >= 1.9, "{levels:?}");
        }
        assert!(levels[2].momentum < 1e-4);
    }

    #[test]
    fn corrupted_phase_is_detected() {
        let family = TestFamily::default();
        let model = family.model();
        let dt = 0.001;
        let stepper = NlsStepper::new(family.n, 2.0 * PI, dt).unwrap();
        let mut psi = family.initial();
        let mut snaps = vec![];
        for _ in 0..3 {
            snaps.push(madelung_inverse(&psi).unwrap());
            stepper.step(&mut psi, &model).unwrap();
        }
        let clean = barotropic_residual(&snaps[0], &snaps[1], &snaps[2], dt, &model).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for t in snaps[1].theta.iter_mut() {
            *t += 0.05 * rng.random_range(-1.0..1.0);
        }
        let dirty = barotropic_residual(&snaps[0], &snaps[1], &snaps[2], dt, &model).unwrap();
        assert!(clean.momentum < 1e-3);
        assert!(dirty.momentum > 1.0 && dirty.continuity > 0.1, "{dirty:?}");
    }
}
