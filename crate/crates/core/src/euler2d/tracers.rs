use crate::spectral::{velocity_from_vorticity, Velocity2D};

use super::{DiagnosticRow, Snapshot};

/// Velocity field known at time `t`.
#[derive(Debug, Clone)]
pub struct TracerFrame {
    pub t: f64,
    pub velocity: Velocity2D,
}

impl TracerFrame {
    pub fn from_snapshot(s: &Snapshot) -> Self {
        Self {
            t: s.t,
            velocity: velocity_from_vorticity(&s.field),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracerPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

fn velocity_at(frames: &[TracerFrame], t: f64, x: f64, y: f64) -> (f64, f64) {
    if frames.len() == 1 || t <= frames[0].t {
        return frames[0].velocity.sample(x, y);
    }
    let last = frames.len() - 1;
    if t >= frames[last].t {
        return frames[last].velocity.sample(x, y);
    }
    let j = frames.partition_point(|f| f.t <= t).max(1) - 1;
    let (a, b) = (&frames[j], &frames[j + 1]);
    let s = (t - a.t) / (b.t - a.t);
    let (ua, va) = a.velocity.sample(x, y);
    let (ub, vb) = b.velocity.sample(x, y);
    (ua + s * (ub - ua), va + s * (vb - va))
}

/// RK4 tracer integration through a sequence of velocity frames, linearly
/// interpolated in time. A single frame is treated as a frozen field and is
/// integrated for `duration`; otherwise the frames' time span is used.
/// Positions are left unwrapped.
pub fn advect_tracers(
    frames: &[TracerFrame],
    seeds: &[(f64, f64)],
    dt: f64,
    duration: Option<f64>,
) -> Vec<Vec<TracerPoint>> {
    assert!(!frames.is_empty(), "need at least one velocity frame");
    assert!(dt > 0.0);
    let t0 = frames[0].t;
    let span = duration.unwrap_or(frames[frames.len() - 1].t - t0);
    let steps = (span / dt).round() as usize;
    seeds
        .iter()
        .map(|&(x0, y0)| {
            let mut traj = Vec::with_capacity(steps + 1);
            let (mut x, mut y) = (x0, y0);
            traj.push(TracerPoint { t: t0, x, y });
            for s in 0..steps {
                let t = t0 + s as f64 * dt;
                let k1 = velocity_at(frames, t, x, y);
                let k2 = velocity_at(frames, t + 0.5 * dt, x + 0.5 * dt * k1.0, y + 0.5 * dt * k1.1);
                let k3 = velocity_at(frames, t + 0.5 * dt, x + 0.5 * dt * k2.0, y + 0.5 * dt * k2.1);
                let k4 = velocity_at(frames, t + dt, x + dt * k3.0, y + dt * k3.1);
                x += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                y += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
                traj.push(TracerPoint { t: t + dt, x, y });
            }
            traj
        })
        .collect()
}

/// Exponential fit `max|∇ω| ≈ A·exp(rate·t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthFit {
    pub rate: f64,
    pub log_intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(t, ln max|∇ω|)`; rows with zero gradient are skipped.
pub fn gradient_growth(series: &[DiagnosticRow]) -> Option<GrowthFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|r| r.max_grad > 0.0)
        .map(|r| (r.t, r.max_grad.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let rate = sty / stt;
    let r_squared = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Some(GrowthFit {
        rate,
        log_intercept: my - rate * mt,
        r_squared,
    })
}
