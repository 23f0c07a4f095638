use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Multi-dimensional complex FFT over a row-major array (last axis fastest).
///
/// `forward` produces Fourier-series coefficients, i.e. it divides by the
/// total number of points, so that `f(x) = sum_k c_k exp(i k.x)`.
/// `inverse` is the plain synthesis sum.
#[derive(Clone)]
pub struct FftNd {
    dims: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("dims", &self.dims).finish()
    }
}

impl FftNd {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = dims.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Self {
            dims: dims.to_vec(),
            forward,
            inverse,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
        let scale = 1.0 / self.len() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }

    /// Forward transform of real samples.
    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Inverse transform keeping the real part (input assumed Hermitian).
    pub fn inverse_real(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut buf = coeffs.to_vec();
        self.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.len(), "buffer does not match FFT shape");
        let total = self.len();
        for (axis, plan) in plans.iter().enumerate() {
            let n = self.dims[axis];
            let stride: usize = self.dims[axis + 1..].iter().product();
            if stride == 1 {
                // contiguous lines
                plan.process(data);
                continue;
            }
            let block = n * stride;
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, value) in line.iter().enumerate() {
                        data[base + j * stride] = *value;
                    }
                }
            }
        }
    }
}

/// Signed integer wavenumber for FFT index `i` on an `n`-point axis.
/// The Nyquist index maps to `-n/2`.
#[inline]
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Wavenumber used for odd derivatives: the Nyquist mode has no real
/// derivative and is mapped to zero.
#[inline]
pub fn derivative_index(i: usize, n: usize) -> i64 {
    if n % 2 == 0 && i == n / 2 {
        0
    } else {
        signed_index(i, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dims in [vec![16], vec![16, 32], vec![8, 16, 4]] {
            let fft = FftNd::new(&dims);
            let data: Vec<Complex64> = (0..fft.len())
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let mut buf = data.clone();
            fft.forward(&mut buf);
            fft.inverse(&mut buf);
            let err = data
                .iter()
                .zip(&buf)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-13, "dims {dims:?} err {err}");
        }
    }

    #[test]
    fn single_mode_lands_in_expected_bin() {
        let (ny, nx) = (16, 32);
        let fft = FftNd::new(&[ny, nx]);
        let two_pi = std::f64::consts::TAU;
        let samples: Vec<f64> = (0..ny * nx)
            .map(|idx| {
                let (iy, ix) = (idx / nx, idx % nx);
                let x = two_pi * ix as f64 / nx as f64;
                let y = two_pi * iy as f64 / ny as f64;
                (3.0 * x - 2.0 * y).cos()
            })
            .collect();
        let coeffs = fft.forward_real(&samples);
        // cos(3x - 2y) = (e^{i(3x-2y)} + e^{-i(3x-2y)})/2
        let at = |ky: usize, kx: usize| coeffs[ky * nx + kx];
        assert!((at(ny - 2, 3).re - 0.5).abs() < 1e-14);
        assert!((at(2, nx - 3).re - 0.5).abs() < 1e-14);
        let rest: f64 = coeffs.iter().map(|c| c.norm()).sum::<f64>() - 1.0;
        assert!(rest.abs() < 1e-12);
    }
}
