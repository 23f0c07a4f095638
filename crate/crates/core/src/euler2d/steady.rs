use crate::spectral::VorticityField2D;

use super::EulerError;

/// Number of equal-probability ψ bins used by [`steady_functional_fit`].
pub const FIT_BINS: usize = 64;

/// Result of fitting `Δψ = F(ψ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyFit {
    /// RMS deviation from the fitted curve divided by RMS(Δψ).
    pub residual: f64,
    /// Bin centres (mean ψ per bin).
    pub psi: Vec<f64>,
    /// Fitted F at the bin centres.
    pub f: Vec<f64>,
}

impl SteadyFit {
    /// Least-squares slope of the sampled F against ψ.
    pub fn linear_slope(&self) -> f64 {
        let n = self.psi.len() as f64;
        let mx = self.psi.iter().sum::<f64>() / n;
        let my = self.f.iter().sum::<f64>() / n;
        let sxy: f64 = self.psi.iter().zip(&self.f).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = self.psi.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }
}

/// Bins the scatter `{(ψ(x), Δψ(x))}` into [`FIT_BINS`] equal-count ψ bins and
/// fits F inside each bin by a local linear least-squares line, giving a
/// single-valued piecewise-linear F. Bins whose ψ values are all equal fall
/// back to the bin mean.
pub fn steady_functional_fit(w: &VorticityField2D) -> Result<SteadyFit, EulerError> {
    let psi = w.stream_function();
    // ω = −Δψ
    let lap: Vec<f64> = w.to_physical().into_iter().map(|x| -x).collect();
    let (lo, hi) = psi
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let rms_lap = (lap.iter().map(|x| x * x).sum::<f64>() / lap.len() as f64).sqrt();
    if !(hi - lo > 1e-14 * (hi.abs() + lo.abs()).max(1e-300)) || rms_lap == 0.0 {
        return Err(EulerError::DegenerateStream);
    }

    let mut order: Vec<usize> = (0..psi.len()).collect();
    order.sort_by(|&a, &b| psi[a].total_cmp(&psi[b]));
    let n = order.len();
    let bins = FIT_BINS.min(n);
    let mut sq_err = 0.0;
    let mut centres = Vec::with_capacity(bins);
    let mut values = Vec::with_capacity(bins);
    for b in 0..bins {
        let members = &order[b * n / bins..(b + 1) * n / bins];
        let m = members.len() as f64;
        let mx = members.iter().map(|&i| psi[i]).sum::<f64>() / m;
        let my = members.iter().map(|&i| lap[i]).sum::<f64>() / m;
        let sxx: f64 = members.iter().map(|&i| (psi[i] - mx).powi(2)).sum();
        let sxy: f64 = members.iter().map(|&i| (psi[i] - mx) * (lap[i] - my)).sum();
        let slope = if sxx > 1e-28 * m * (mx * mx).max(1e-300) { sxy / sxx } else { 0.0 };
        for &i in members {
            let r = lap[i] - (my + slope * (psi[i] - mx));
            sq_err += r * r;
        }
        centres.push(mx);
        values.push(my);
    }
    let residual = (sq_err / n as f64).sqrt() / rms_lap;
    Ok(SteadyFit {
        residual,
        psi: centres,
        f: values,
    })
}
