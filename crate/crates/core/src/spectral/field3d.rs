use std::f64::consts::TAU;

use num_complex::Complex64;

use super::{check_pow2, derivative_index, signed_index, FftNd, Result, SpectralError};

/// Cubic periodic grid with `n` points per axis on `[0, 2π)³`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid3 {
    pub n: usize,
}

impl Grid3 {
    pub fn new(n: usize) -> Result<Self> {
        check_pow2(n, 4)?;
        Ok(Self { n })
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    /// Index order is `[z][y][x]` with x fastest.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        let (iz, rem) = (idx / (n * n), idx % (n * n));
        let (iy, ix) = (rem / n, rem % n);
        let h = self.spacing();
        [ix as f64 * h, iy as f64 * h, iz as f64 * h]
    }

    pub fn mode(&self, idx: usize) -> [i64; 3] {
        let n = self.n;
        let (iz, rem) = (idx / (n * n), idx % (n * n));
        let (iy, ix) = (rem / n, rem % n);
        [signed_index(ix, n), signed_index(iy, n), signed_index(iz, n)]
    }

    pub fn deriv_k(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        let (iz, rem) = (idx / (n * n), idx % (n * n));
        let (iy, ix) = (rem / n, rem % n);
        [
            derivative_index(ix, n) as f64,
            derivative_index(iy, n) as f64,
            derivative_index(iz, n) as f64,
        ]
    }

    pub fn fft(&self) -> FftNd {
        FftNd::new(&[self.n, self.n, self.n])
    }
}

/// Real three-component vector field sampled on a [`Grid3`].
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField3D {
    pub grid: Grid3,
    pub components: [Vec<f64>; 3],
}

impl VelocityField3D {
    pub fn new(grid: Grid3, components: [Vec<f64>; 3]) -> Result<Self> {
        for c in &components {
            if c.len() != grid.len() {
                return Err(SpectralError::ShapeMismatch {
                    expected: grid.len(),
                    got: c.len(),
                });
            }
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: Grid3) -> Self {
        Self {
            grid,
            components: [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]],
        }
    }

    pub fn from_fn(grid: Grid3, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid);
        for idx in 0..grid.len() {
            let v = f(grid.coords(idx));
            for c in 0..3 {
                out.components[c][idx] = v[c];
            }
        }
        out
    }

    pub fn to_spectral(&self) -> [Vec<Complex64>; 3] {
        let fft = self.grid.fft();
        [
            fft.forward_real(&self.components[0]),
            fft.forward_real(&self.components[1]),
            fft.forward_real(&self.components[2]),
        ]
    }

    pub fn from_spectral(grid: Grid3, hat: &[Vec<Complex64>; 3]) -> Self {
        let fft = grid.fft();
        Self {
            grid,
            components: [
                fft.inverse_real(&hat[0]),
                fft.inverse_real(&hat[1]),
                fft.inverse_real(&hat[2]),
            ],
        }
    }

    /// `∫ u·v` by the rectangle rule.
    pub fn inner(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for c in 0..3 {
            s += self.components[c]
                .iter()
                .zip(&other.components[c])
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        s * self.grid.cell_volume()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for c in 0..3 {
            for (a, b) in out.components[c].iter_mut().zip(&other.components[c]) {
                *a -= b;
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.components.iter_mut().flatten().for_each(|a| *a *= s);
        out
    }

    /// Largest spectral `|k·û_k|`, a divergence measure.
    pub fn spectral_divergence(&self) -> f64 {
        let hat = self.to_spectral();
        (0..self.grid.len())
            .map(|i| {
                let k = self.grid.deriv_k(i);
                (hat[0][i] * k[0] + hat[1][i] * k[1] + hat[2][i] * k[2]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Spectral curl.
    pub fn curl(&self) -> Self {
        let hat = self.to_spectral();
        Self::from_spectral(self.grid, &curl_hat(&self.grid, &hat))
    }

    /// Mean of each component.
    pub fn mean(&self) -> [f64; 3] {
        let n = self.grid.len() as f64;
        [
            self.components[0].iter().sum::<f64>() / n,
            self.components[1].iter().sum::<f64>() / n,
            self.components[2].iter().sum::<f64>() / n,
        ]
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

pub(crate) fn curl_hat(grid: &Grid3, hat: &[Vec<Complex64>; 3]) -> [Vec<Complex64>; 3] {
    let mut out = [
        Vec::with_capacity(grid.len()),
        Vec::with_capacity(grid.len()),
        Vec::with_capacity(grid.len()),
    ];
    let i = Complex64::i();
    for idx in 0..grid.len() {
        let k = grid.deriv_k(idx);
        let u = [hat[0][idx], hat[1][idx], hat[2][idx]];
        out[0].push(i * (k[1] * u[2] - k[2] * u[1]));
        out[1].push(i * (k[2] * u[0] - k[0] * u[2]));
        out[2].push(i * (k[0] * u[1] - k[1] * u[0]));
    }
    out
}

/// Leray–Helmholtz projection onto divergence-free fields. The mean mode is
/// kept (a constant field is divergence-free).
pub fn project_divfree(u: &VelocityField3D) -> VelocityField3D {
    let grid = u.grid;
    let mut hat = u.to_spectral();
    for idx in 1..grid.len() {
        let k = grid.deriv_k(idx);
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == 0.0 {
            // pure Nyquist slot: no derivative, drop it
            for c in hat.iter_mut() {
                c[idx] = Complex64::new(0.0, 0.0);
            }
            continue;
        }
        let dot = hat[0][idx] * k[0] + hat[1][idx] * k[1] + hat[2][idx] * k[2];
        for c in 0..3 {
            hat[c][idx] -= dot * (k[c] / k2);
        }
    }
    // Nyquist planes carry partial derivative information only; zero them so
    // that the projected field is exactly representable.
    for idx in 0..grid.len() {
        let m = grid.mode(idx);
        if m.iter().any(|&mi| mi == -(grid.n as i64) / 2) {
            for c in hat.iter_mut() {
                c[idx] = Complex64::new(0.0, 0.0);
            }
        }
    }
    VelocityField3D::from_spectral(grid, &hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Grid3, rng: &mut ChaCha8Rng) -> VelocityField3D {
        let comps = std::array::from_fn(|_| (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
        VelocityField3D::new(grid, comps).unwrap()
    }

    #[test]
    fn projection_is_idempotent_and_orthogonal() {
        let grid = Grid3::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let u = random_field(grid, &mut rng);
            let pu = project_divfree(&u);
            let ppu = project_divfree(&pu);
            let diff = ppu.sub(&pu).l2_norm();
            assert!(diff < 1e-12 * pu.l2_norm().max(1.0));
            assert!(pu.spectral_divergence() < 1e-12);
        }
        let u = random_field(grid, &mut rng);
        let pu = project_divfree(&u);
        let residual = u.sub(&pu);
        assert!(residual.inner(&pu).abs() < 1e-12 * u.inner(&u));
    }

    #[test]
    fn projection_is_self_adjoint() {
        let grid = Grid3::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_field(grid, &mut rng);
        let v = random_field(grid, &mut rng);
        let lhs = project_divfree(&u).inner(&v);
        let rhs = u.inner(&project_divfree(&v));
        assert!((lhs - rhs).abs() < 1e-12 * u.l2_norm() * v.l2_norm());
    }

    #[test]
    fn gradient_fields_project_to_zero() {
        let grid = Grid3::new(16).unwrap();
        // φ = sin x cos 2y + cos(z + y)
        let grad = VelocityField3D::from_fn(grid, |[x, y, z]| {
            [
                x.cos() * (2.0 * y).cos(),
                -2.0 * x.sin() * (2.0 * y).sin() - (z + y).sin(),
                -(z + y).sin(),
            ]
        });
        assert!(project_divfree(&grad).l2_norm() < 1e-12);
    }
}
