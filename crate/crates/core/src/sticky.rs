//! One-dimensional sticky particles.
//!
//! * [`event_driven_run`]: exact event simulation, the reference dynamics.
//! * [`stratum_action`] / [`variational_minimize`]: least action on the extended
//!   configuration space. Coordinates `z ∈ ℝᴺ` carry the mass-weighted metric
//!   `⟨a, b⟩ = Σ mᵢaᵢbᵢ`. For a partition Π of the particles into contiguous
//!   clusters, `Δ_Π` is the subspace where all members of a cluster share one
//!   position and the visible configuration is the orthogonal projection
//!   `P_Π z` (cluster centres of mass). A history of merges Π₀ → Π₁ → … forces
//!   the path through `Δ_{Πⱼ} ⊕ Δ_{Πⱼ₋₁}^⊥` at the j-th merge time.
//! * [`continuum_evolve`]: monotone-cone projection of free flight.
//! * [`shock_velocity`]: centre of the smallest ball enclosing a set of velocities.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest N accepted by [`variational_minimize`].
pub const MAX_VARIATIONAL_N: usize = 6;
/// Smallest segment duration used while optimizing merge times.
const MIN_SEGMENT: f64 = 1e-10;
const MAX_NEWTON_ITERS: usize = 200;
/// Minimum samples of a [`MonotoneProfile`].
pub const MIN_PROFILE_SAMPLES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StickyError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("variational search supports at most {MAX_VARIATIONAL_N} particles, got {0}")]
    TooLarge(usize),
    #[error("inconsistent collision history: {0}")]
    InconsistentHistory(String),
    #[error("no admissible collision history reaches the endpoint")]
    NoAdmissibleHistory,
    #[error("empty velocity set")]
    Empty,
}

pub type Result<T> = std::result::Result<T, StickyError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickySystem {
    pub masses: Vec<f64>,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
}

impl StickySystem {
    pub fn new(masses: Vec<f64>, positions: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        let n = masses.len();
        if n == 0 || positions.len() != n || velocities.len() != n {
            return Err(StickyError::Invalid("masses, positions and velocities must have equal nonzero length".into()));
        }
        if masses.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(StickyError::Invalid("masses must be positive and finite".into()));
        }
        if positions.iter().chain(&velocities).any(|x| !x.is_finite()) {
            return Err(StickyError::Invalid("non-finite position or velocity".into()));
        }
        if positions.windows(2).any(|w| w[0] > w[1]) {
            return Err(StickyError::Invalid("positions must be nondecreasing".into()));
        }
        Ok(Self {
            masses,
            positions,
            velocities,
        })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn momentum(&self) -> f64 {
        self.masses.iter().zip(&self.velocities).map(|(m, v)| m * v).sum()
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.masses.iter().zip(&self.velocities).map(|(m, v)| m * v * v).sum::<f64>()
    }
}

/// Contiguous block of particles `first..=last` moving as one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub first: usize,
    pub last: usize,
    pub mass: f64,
    /// Position at time `t_ref`.
    pub position: f64,
    pub velocity: f64,
    pub t_ref: f64,
}

impl Cluster {
    pub fn position_at(&self, t: f64) -> f64 {
        self.position + self.velocity * (t - self.t_ref)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub t: f64,
    pub first: usize,
    pub last: usize,
    pub position: f64,
    pub velocity: f64,
    pub momentum_before: f64,
    pub momentum_after: f64,
    pub energy_before: f64,
    pub energy_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub system: StickySystem,
    pub t_end: f64,
    pub events: Vec<MergeEvent>,
    /// Cluster state after each event (index 0 = initial clusters).
    stages: Vec<(f64, Vec<Cluster>)>,
}

impl OracleRun {
    pub fn clusters_at(&self, t: f64) -> &[Cluster] {
        let k = self.stages.partition_point(|(ts, _)| *ts <= t).max(1) - 1;
        &self.stages[k].1
    }

    /// Per-particle positions at time `t`.
    pub fn positions_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.system.len()];
        for c in self.clusters_at(t) {
            let x = c.position_at(t);
            out[c.first..=c.last].iter_mut().for_each(|v| *v = x);
        }
        out
    }

    pub fn velocities_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.system.len()];
        for c in self.clusters_at(t) {
            out[c.first..=c.last].iter_mut().for_each(|v| *v = c.velocity);
        }
        out
    }

    pub const EVENT_CSV_HEADER: &'static str = "t,event,first,last,position,velocity";

    pub fn event_csv_rows(&self) -> Vec<String> {
        self.events
            .iter()
            .enumerate()
            .map(|(k, e)| format!("{},{},{},{},{},{}", e.t, k, e.first, e.last, e.position, e.velocity))
            .collect()
    }

    /// The collision history realized by the run, as merge ranges with times.
    pub fn history(&self) -> CollisionHistory {
        CollisionHistory {
            n: self.system.len(),
            events: self
                .events
                .iter()
                .map(|e| HistoryEvent {
                    t: e.t,
                    first: e.first,
                    last: e.last,
                })
                .collect(),
        }
    }
}

fn cluster_energy(cs: &[Cluster]) -> f64 {
    cs.iter().map(|c| 0.5 * c.mass * c.velocity * c.velocity).sum()
}

fn cluster_momentum(cs: &[Cluster]) -> f64 {
    cs.iter().map(|c| c.mass * c.velocity).sum()
}

/// Exact event-driven sticky dynamics on `[0, t_end]`. Touching clusters that
/// approach (or move together) merge; all such contacts at one instant are
/// merged before time advances.
pub fn event_driven_run(sys: &StickySystem, t_end: f64) -> OracleRun {
    let mut clusters: Vec<Cluster> = (0..sys.len())
        .map(|i| Cluster {
            first: i,
            last: i,
            mass: sys.masses[i],
            position: sys.positions[i],
            velocity: sys.velocities[i],
            t_ref: 0.0,
        })
        .collect();
    let scale = sys.positions.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let touch = 1e-13 * scale;
    let mut t = 0.0;
    let mut events = Vec::new();
    let mut stages = Vec::new();
    loop {
        // merge every touching, non-separating neighbour pair at time t
        loop {
            let k = clusters.windows(2).position(|w| {
                (w[1].position_at(t) - w[0].position_at(t)).abs() <= touch && w[0].velocity >= w[1].velocity
            });
            let Some(k) = k else { break };
            // grow the contact run greedily to the right and left
            let (mut a, mut b) = (k, k + 1);
            let merged = |a: usize, b: usize, cs: &[Cluster]| {
                let m: f64 = cs[a..=b].iter().map(|c| c.mass).sum();
                let p: f64 = cs[a..=b].iter().map(|c| c.mass * c.velocity).sum();
                p / m
            };
            loop {
                let v = merged(a, b, &clusters);
                let pos = clusters[a].position_at(t);
                if b + 1 < clusters.len()
                    && (clusters[b + 1].position_at(t) - pos).abs() <= touch
                    && v >= clusters[b + 1].velocity
                {
                    b += 1;
                } else if a > 0 && (pos - clusters[a - 1].position_at(t)).abs() <= touch && clusters[a - 1].velocity >= v {
                    a -= 1;
                } else {
                    break;
                }
            }
            let before = clusters.clone();
            let mass: f64 = clusters[a..=b].iter().map(|c| c.mass).sum();
            let mom: f64 = clusters[a..=b].iter().map(|c| c.mass * c.velocity).sum();
            let pos = clusters[a..=b].iter().map(|c| c.mass * c.position_at(t)).sum::<f64>() / mass;
            let new = Cluster {
                first: clusters[a].first,
                last: clusters[b].last,
                mass,
                position: pos,
                velocity: mom / mass,
                t_ref: t,
            };
            clusters.splice(a..=b, [new]);
            events.push(MergeEvent {
                t,
                first: new.first,
                last: new.last,
                position: pos,
                velocity: new.velocity,
                momentum_before: cluster_momentum(&before),
                momentum_after: cluster_momentum(&clusters),
                energy_before: cluster_energy(&before),
                energy_after: cluster_energy(&clusters),
            });
        }
        stages.push((t, clusters.clone()));
        // next collision among approaching neighbours
        let mut next = f64::INFINITY;
        for w in clusters.windows(2) {
            if w[0].velocity > w[1].velocity {
                let gap = w[1].position_at(t) - w[0].position_at(t);
                let dt = gap.max(0.0) / (w[0].velocity - w[1].velocity);
                next = next.min(t + dt);
            }
        }
        if !(next <= t_end) {
            break;
        }
        // snap contacts exactly at the event time
        t = next;
        for c in clusters.iter_mut() {
            c.position = c.position_at(t);
            c.t_ref = t;
        }
        for k in 0..clusters.len().saturating_sub(1) {
            if clusters[k].velocity > clusters[k + 1].velocity {
                let (l, r) = (clusters[k].position, clusters[k + 1].position);
                if (r - l).abs() <= 1e-12 * scale {
                    clusters[k + 1].position = l;
                }
            }
        }
    }
    OracleRun {
        system: sys.clone(),
        t_end,
        events,
        stages,
    }
}

/// Endpoint in the extended space for the run over unit time: each particle's
/// free-flight position. With hidden coordinates advancing at the relative
/// velocities lost in each merge, this is where the oracle's extended path ends.
pub fn oracle_endpoint(sys: &StickySystem) -> Vec<f64> {
    sys.positions.iter().zip(&sys.velocities).map(|(x, v)| x + v).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub t: f64,
    /// Particle range fused by this event; must be a union of at least two current clusters.
    pub first: usize,
    pub last: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionHistory {
    pub n: usize,
    pub events: Vec<HistoryEvent>,
}

type Partition = Vec<(usize, usize)>;

fn singletons(n: usize) -> Partition {
    (0..n).map(|i| (i, i)).collect()
}

fn apply_merge(p: &Partition, first: usize, last: usize) -> Option<Partition> {
    let a = p.iter().position(|c| c.0 == first)?;
    let b = p.iter().position(|c| c.1 == last)?;
    if b <= a {
        return None;
    }
    let mut out = p[..a].to_vec();
    out.push((first, last));
    out.extend_from_slice(&p[b + 1..]);
    Some(out)
}

impl CollisionHistory {
    /// Partitions before the first event and after each event.
    pub fn partitions(&self) -> Result<Vec<Partition>> {
        let mut parts = vec![singletons(self.n)];
        let mut t_prev = 0.0;
        for (k, e) in self.events.iter().enumerate() {
            if !(e.t >= t_prev && e.t <= 1.0) {
                return Err(StickyError::InconsistentHistory(format!("event {k} time {} out of order or outside [0,1]", e.t)));
            }
            t_prev = e.t;
            let next = apply_merge(parts.last().unwrap(), e.first, e.last).ok_or_else(|| {
                StickyError::InconsistentHistory(format!("event {k} range {}..={} does not fuse whole clusters", e.first, e.last))
            })?;
            parts.push(next);
        }
        Ok(parts)
    }
}

/// All merge sequences for `n` particles (ranges only; times unassigned).
pub fn enumerate_histories(n: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(p: &Partition, prefix: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        out.push(prefix.clone());
        let k = p.len();
        for a in 0..k {
            for b in a + 1..k {
                let (first, last) = (p[a].0, p[b].1);
                let next = apply_merge(p, first, last).unwrap();
                prefix.push((first, last));
                rec(&next, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(&singletons(n), &mut Vec::new(), &mut out);
    out
}

/// Geometry of the mass-weighted space, working in scaled coordinates `qᵢ = √mᵢ zᵢ`.
struct Metric {
    sqrt_m: Vec<f64>,
}

impl Metric {
    fn new(masses: &[f64]) -> Self {
        Self {
            sqrt_m: masses.iter().map(|m| m.sqrt()).collect(),
        }
    }

    fn n(&self) -> usize {
        self.sqrt_m.len()
    }

    fn to_scaled(&self, z: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.n(), z.iter().zip(&self.sqrt_m).map(|(a, s)| a * s))
    }

    fn from_scaled(&self, q: &DVector<f64>) -> Vec<f64> {
        q.iter().zip(&self.sqrt_m).map(|(a, s)| a / s).collect()
    }

    /// Orthogonal projector onto `Δ_Π`.
    fn projector(&self, p: &Partition) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(n, n);
        for &(a, b) in p {
            let mass: f64 = self.sqrt_m[a..=b].iter().map(|s| s * s).sum();
            for i in a..=b {
                for j in a..=b {
                    out[(i, j)] = self.sqrt_m[i] * self.sqrt_m[j] / mass;
                }
            }
        }
        out
    }

    /// Cluster centres of mass of `z` (scaled) under partition `p`, ordered.
    fn visible(&self, p: &Partition, q: &DVector<f64>) -> Vec<f64> {
        p.iter()
            .map(|&(a, b)| {
                let mass: f64 = self.sqrt_m[a..=b].iter().map(|s| s * s).sum();
                (a..=b).map(|i| self.sqrt_m[i] * q[i]).sum::<f64>() / mass
            })
            .collect()
    }
}

/// Orthonormal basis of the common range of the given projectors.
fn intersection_basis(projectors: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = projectors[0].nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut stacked = DMatrix::zeros(n * projectors.len(), n);
    for (k, p) in projectors.iter().enumerate() {
        stacked.view_mut((k * n, 0), (n, n)).copy_from(&(&id - p));
    }
    // null space of the stacked complements via the Gram matrix eigenvectors
    let gram = stacked.transpose() * &stacked;
    let eig = gram.symmetric_eigen();
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&k| eig.eigenvalues[k].abs() < 1e-9)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Piecewise-linear extended path through the merge waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumPath {
    pub masses: Vec<f64>,
    /// Node times, starting at 0 and ending at 1.
    pub times: Vec<f64>,
    /// Extended configuration at each node (physical coordinates).
    pub nodes: Vec<Vec<f64>>,
    /// Partition in force on each segment `[times[k], times[k+1]]`.
    pub partitions: Vec<Vec<(usize, usize)>>,
}

impl StratumPath {
    fn segment(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.clamp(1, self.times.len() - 1) - 1
    }

    pub fn z_at(&self, t: f64) -> Vec<f64> {
        let k = self.segment(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        self.nodes[k].iter().zip(&self.nodes[k + 1]).map(|(a, b)| a + s * (b - a)).collect()
    }

    /// Visible particle positions `P z(t)`.
    pub fn visible_at(&self, t: f64) -> Vec<f64> {
        let k = self.segment(t);
        let z = self.z_at(t);
        let mut out = vec![0.0; z.len()];
        for &(a, b) in &self.partitions[k] {
            let mass: f64 = self.masses[a..=b].iter().sum();
            let x = (a..=b).map(|i| self.masses[i] * z[i]).sum::<f64>() / mass;
            out[a..=b].iter_mut().for_each(|v| *v = x);
        }
        out
    }

    pub fn action(&self) -> f64 {
        let mut j = 0.0;
        for k in 0..self.nodes.len() - 1 {
            let dt = self.times[k + 1] - self.times[k];
            let d2: f64 = (0..self.masses.len())
                .map(|i| self.masses[i] * (self.nodes[k + 1][i] - self.nodes[k][i]).powi(2))
                .sum();
            if d2 > 0.0 {
                j += 0.5 * d2 / dt;
            }
        }
        j
    }

    /// Visible cluster order holds at both ends of every segment (up to `tol`).
    pub fn is_ordered(&self, tol: f64) -> bool {
        let metric = Metric::new(&self.masses);
        for k in 0..self.nodes.len() - 1 {
            for node in [&self.nodes[k], &self.nodes[k + 1]] {
                let vis = metric.visible(&self.partitions[k], &metric.to_scaled(node));
                if vis.windows(2).any(|w| w[1] - w[0] < -tol) {
                    return false;
                }
            }
        }
        true
    }
}

struct Problem<'a> {
    metric: Metric,
    masses: &'a [f64],
    z0: DVector<f64>,
    z1: DVector<f64>,
    parts: Vec<Partition>,
    /// Subspace projector for each event.
    event_proj: Vec<DMatrix<f64>>,
}

impl<'a> Problem<'a> {
    fn new(masses: &'a [f64], ranges: &[(usize, usize)], z0: &[f64], z1: &[f64]) -> Result<Self> {
        let metric = Metric::new(masses);
        let n = masses.len();
        let mut parts = vec![singletons(n)];
        for (k, &(a, b)) in ranges.iter().enumerate() {
            let next = apply_merge(parts.last().unwrap(), a, b)
                .ok_or_else(|| StickyError::InconsistentHistory(format!("event {k} range {a}..={b} does not fuse whole clusters")))?;
            parts.push(next);
        }
        let id = DMatrix::<f64>::identity(n, n);
        let event_proj = (1..parts.len())
            .map(|j| metric.projector(&parts[j]) + (&id - metric.projector(&parts[j - 1])))
            .collect();
        Ok(Self {
            z0: metric.to_scaled(z0),
            z1: metric.to_scaled(z1),
            metric,
            masses,
            parts,
            event_proj,
        })
    }

    /// Minimal path for given event times (nondecreasing, within [0,1]).
    /// Events sharing a time share one waypoint in the intersection of their subspaces.
    fn solve(&self, times: &[f64]) -> Result<StratumPath> {
        let n = self.metric.n();
        // group equal times
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for (j, &t) in times.iter().enumerate() {
            match groups.last_mut() {
                Some((tg, members)) if *tg == t => members.push(j),
                _ => groups.push((t, vec![j])),
            }
        }
        // node list: fixed z0 at 0, groups, fixed z1 at 1; groups at 0 or 1 are pinned
        enum Node {
            Fixed(DVector<f64>),
            Free(DMatrix<f64>),
        }
        let mut nodes: Vec<(f64, Node, usize)> = vec![(0.0, Node::Fixed(self.z0.clone()), 0)];
        for (t, members) in &groups {
            let projs: Vec<DMatrix<f64>> = members.iter().map(|&j| self.event_proj[j].clone()).collect();
            let basis = intersection_basis(&projs);
            let last_event = *members.last().unwrap();
            let pinned = if *t <= 0.0 {
                Some(&self.z0)
            } else if *t >= 1.0 {
                Some(&self.z1)
            } else {
                None
            };
            match pinned {
                Some(z) => {
                    let resid = z - &basis * (basis.transpose() * z);
                    if resid.amax() > 1e-10 * z.amax().max(1.0) {
                        return Err(StickyError::InconsistentHistory(format!(
                            "merge at t = {t} requires the endpoint to lie in the merge stratum"
                        )));
                    }
                    nodes.push((*t, Node::Fixed(z.clone()), last_event + 1));
                }
                None => nodes.push((*t, Node::Free(basis), last_event + 1)),
            }
        }
        nodes.push((1.0, Node::Fixed(self.z1.clone()), self.parts.len() - 1));
        // unknown offsets
        let mut offsets = Vec::with_capacity(nodes.len());
        let mut total = 0;
        for (_, node, _) in &nodes {
            offsets.push(total);
            if let Node::Free(b) = node {
                total += b.ncols();
            }
        }
        let mut h = DMatrix::<f64>::zeros(total, total);
        let mut g = DVector::<f64>::zeros(total);
        for s in 0..nodes.len() - 1 {
            let dt = nodes[s + 1].0 - nodes[s].0;
            if dt <= 0.0 {
                // zero-length segment: both ends must coincide
                match (&nodes[s].1, &nodes[s + 1].1) {
                    (Node::Fixed(a), Node::Fixed(b)) if (a - b).amax() <= 1e-10 * a.amax().max(1.0) => continue,
                    _ => {
                        return Err(StickyError::InconsistentHistory(
                            "merge at t = 0 or t = 1 is incompatible with the endpoint".into(),
                        ))
                    }
                }
            }
            let w = 1.0 / dt;
            // diff = B1 c1 + f1 − B0 c0 − f0
            let mut blocks: Vec<(usize, DMatrix<f64>)> = Vec::new();
            let mut e = DVector::<f64>::zeros(n);
            for (sign, idx) in [(-1.0, s), (1.0, s + 1)] {
                match &nodes[idx].1 {
                    Node::Fixed(f) => e += f * sign,
                    Node::Free(b) => blocks.push((offsets[idx], b * sign)),
                }
            }
            for (oa, ba) in &blocks {
                let gt = ba.transpose() * &e * w;
                for r in 0..gt.len() {
                    g[oa + r] += gt[r];
                }
                for (ob, bb) in &blocks {
                    let blk = ba.transpose() * bb * w;
                    let mut view = h.view_mut((*oa, *ob), (blk.nrows(), blk.ncols()));
                    view += &blk;
                }
            }
        }
        let c = if total == 0 {
            DVector::zeros(0)
        } else {
            let chol = h.clone().cholesky().ok_or_else(|| StickyError::InconsistentHistory("singular waypoint system".into()))?;
            chol.solve(&(-g))
        };
        let mut path_nodes = Vec::with_capacity(nodes.len());
        let mut path_times = Vec::with_capacity(nodes.len());
        let mut partitions = Vec::with_capacity(nodes.len() - 1);
        for (k, (t, node, part_after)) in nodes.iter().enumerate() {
            let q = match node {
                Node::Fixed(f) => f.clone(),
                Node::Free(b) => b * c.rows(offsets[k], b.ncols()),
            };
            path_nodes.push(self.metric.from_scaled(&q));
            path_times.push(*t);
            if k + 1 < nodes.len() {
                partitions.push(self.parts[*part_after].clone());
            }
        }
        Ok(StratumPath {
            masses: self.masses.to_vec(),
            times: path_times,
            nodes: path_nodes,
            partitions,
        })
    }
}

/// Minimal action within a fixed history (merge ranges and times): straight
/// segments between waypoints, waypoints solved from the quadratic action.
pub fn stratum_action(masses: &[f64], history: &CollisionHistory, z0: &[f64], z1: &[f64]) -> Result<(f64, StratumPath)> {
    check_endpoints(masses, z0, z1)?;
    if history.n != masses.len() {
        return Err(StickyError::InconsistentHistory("history size differs from particle count".into()));
    }
    history.partitions()?;
    let ranges: Vec<(usize, usize)> = history.events.iter().map(|e| (e.first, e.last)).collect();
    let times: Vec<f64> = history.events.iter().map(|e| e.t).collect();
    let prob = Problem::new(masses, &ranges, z0, z1)?;
    let path = prob.solve(&times)?;
    Ok((path.action(), path))
}

fn check_endpoints(masses: &[f64], z0: &[f64], z1: &[f64]) -> Result<()> {
    if masses.is_empty() || z0.len() != masses.len() || z1.len() != masses.len() {
        return Err(StickyError::Invalid("endpoint length must match particle count".into()));
    }
    if masses.iter().any(|m| !(*m > 0.0)) || z0.iter().chain(z1).any(|x| !x.is_finite()) {
        return Err(StickyError::Invalid("masses must be positive and endpoints finite".into()));
    }
    Ok(())
}

/// Optimizes event times for one history. For fixed waypoints the best
/// durations are proportional to segment lengths, giving action `L²/2` with
/// `L` the total path length through the merge subspaces. `L` is convex in
/// the waypoints; it is minimized by damped Newton on a slightly smoothed
/// norm, and the times are read off the segment lengths.
fn optimize_times(prob: &Problem, k: usize) -> Option<StratumPath> {
    if k == 0 {
        return prob.solve(&[]).ok();
    }
    let bases: Vec<DMatrix<f64>> = prob.event_proj.iter().map(|p| intersection_basis(std::slice::from_ref(p))).collect();
    let mut offs = Vec::with_capacity(k);
    let mut m = 0;
    for b in &bases {
        offs.push(m);
        m += b.ncols();
    }
    let uniform: Vec<f64> = (1..=k).map(|j| j as f64 / (k + 1) as f64).collect();
    let start = prob.solve(&uniform).ok()?;
    let mut c = DVector::<f64>::zeros(m);
    for j in 0..k {
        let q = prob.metric.to_scaled(&start.nodes[j + 1]);
        c.rows_mut(offs[j], bases[j].ncols()).copy_from(&(bases[j].transpose() * q));
    }
    let scale = prob.z0.amax().max(prob.z1.amax()).max(1.0);
    let eps2 = (1e-13 * scale).powi(2);
    let node = |c: &DVector<f64>, j: usize| -> DVector<f64> {
        if j == 0 {
            prob.z0.clone()
        } else if j == k + 1 {
            prob.z1.clone()
        } else {
            &bases[j - 1] * c.rows(offs[j - 1], bases[j - 1].ncols())
        }
    };
    let residuals = |c: &DVector<f64>| -> Vec<DVector<f64>> { (0..=k).map(|s| node(c, s + 1) - node(c, s)).collect() };
    let objective = |c: &DVector<f64>| -> f64 { residuals(c).iter().map(|r| (r.norm_squared() + eps2).sqrt()).sum() };
    let mut f = objective(&c);
    for _ in 0..MAX_NEWTON_ITERS {
        let res = residuals(&c);
        let mut g = DVector::<f64>::zeros(m);
        let mut h = DMatrix::<f64>::zeros(m, m);
        for (s, r) in res.iter().enumerate() {
            let rho = (r.norm_squared() + eps2).sqrt();
            let hr = DMatrix::<f64>::identity(r.len(), r.len()) / rho - r * r.transpose() / rho.powi(3);
            // r depends on node s (sign −1) and node s+1 (sign +1)
            let ends: Vec<(usize, f64)> = [(s, -1.0), (s + 1, 1.0)].into_iter().filter(|(j, _)| *j >= 1 && *j <= k).collect();
            for &(ja, sa) in &ends {
                let ba = &bases[ja - 1];
                let gb = ba.transpose() * r * (sa / rho);
                let mut gv = g.rows_mut(offs[ja - 1], ba.ncols());
                gv += &gb;
                for &(jb, sb) in &ends {
                    let bb = &bases[jb - 1];
                    let blk = ba.transpose() * &hr * bb * (sa * sb);
                    let mut hv = h.view_mut((offs[ja - 1], offs[jb - 1]), (ba.ncols(), bb.ncols()));
                    hv += &blk;
                }
            }
        }
        let dir = match h.cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => -&g,
        };
        let slope = g.dot(&dir);
        if !(slope < 0.0) || dir.amax() <= 1e-15 * scale {
            break;
        }
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-12 {
            let trial = &c + &dir * step;
            let ft = objective(&trial);
            if ft <= f + 1e-4 * step * slope {
                c = trial;
                f = ft;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let lens: Vec<f64> = residuals(&c).iter().map(|r| r.norm()).collect();
    let total: f64 = lens.iter().sum();
    let times = if total > 0.0 {
        let mut durations: Vec<f64> = lens.iter().map(|l| (l / total).max(MIN_SEGMENT)).collect();
        let sum: f64 = durations.iter().sum();
        durations.iter_mut().for_each(|d| *d /= sum);
        durations[..k]
            .iter()
            .scan(0.0, |acc, d| {
                *acc += d;
                Some(*acc)
            })
            .collect()
    } else {
        uniform
    };
    prob.solve(&times).ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalResult {
    pub history: CollisionHistory,
    pub action: f64,
    pub path: StratumPath,
    pub histories_examined: usize,
}

/// Global least-action history between `z0` (a valid ordered configuration)
/// and `z1`, by enumerating every merge sequence and optimizing its times.
/// Ties (within 1e-12 relative) go to the history with fewer events.
pub fn variational_minimize(masses: &[f64], z0: &[f64], z1: &[f64]) -> Result<VariationalResult> {
    let n = masses.len();
    if n > MAX_VARIATIONAL_N {
        return Err(StickyError::TooLarge(n));
    }
    check_endpoints(masses, z0, z1)?;
    if z0.windows(2).any(|w| w[0] > w[1]) {
        return Err(StickyError::Invalid("z0 must be an ordered configuration".into()));
    }
    let metric = Metric::new(masses);
    let q1 = metric.to_scaled(z1);
    let scale = z0.iter().chain(z1).fold(1.0f64, |m, x| m.max(x.abs()));
    let histories = enumerate_histories(n);
    let examined = histories.len();
    let candidates: Vec<(f64, usize, StratumPath, Vec<(usize, usize)>)> = histories
        .into_par_iter()
        .filter_map(|ranges| {
            let prob = Problem::new(masses, &ranges, z0, z1).ok()?;
            // the endpoint's visible part must already be ordered under the final partition
            let vis = metric.visible(prob.parts.last().unwrap(), &q1);
            if vis.windows(2).any(|w| w[1] - w[0] < -1e-9 * scale) {
                return None;
            }
            let path = optimize_times(&prob, ranges.len())?;
            if !path.is_ordered(1e-9 * scale) {
                return None;
            }
            Some((path.action(), ranges.len(), path, ranges))
        })
        .collect();
    let min_action = candidates
        .iter()
        .map(|c| c.0)
        .fold(f64::INFINITY, f64::min);
    if !min_action.is_finite() {
        return Err(StickyError::NoAdmissibleHistory);
    }
    let tie = 1e-12 * min_action.max(1e-300) + 1e-15;
    let (action, _, path, ranges) = candidates
        .into_iter()
        .filter(|c| c.0 <= min_action + tie)
        .min_by(|a, b| a.1.cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .unwrap();
    // durations are floored, so interior nodes map one-to-one onto events
    let times = path.times[1..path.times.len() - 1].to_vec();
    let history = CollisionHistory {
        n,
        events: ranges
            .iter()
            .zip(times)
            .map(|(&(first, last), t)| HistoryEvent { t, first, last })
            .collect(),
    };
    Ok(VariationalResult {
        history,
        action,
        path,
        histories_examined: examined,
    })
}

/// Nondecreasing samples of a map `S = [0,1] → ℝ` on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneProfile {
    samples: Vec<f64>,
}

impl MonotoneProfile {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < MIN_PROFILE_SAMPLES {
            return Err(StickyError::Invalid(format!("profile needs at least {MIN_PROFILE_SAMPLES} samples")));
        }
        if samples.iter().any(|x| !x.is_finite()) || samples.windows(2).any(|w| w[0] > w[1]) {
            return Err(StickyError::Invalid("profile must be finite and nondecreasing".into()));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Pool-adjacent-violators: Euclidean projection onto nondecreasing sequences.
pub fn pav(values: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.last_mut().unwrap();
                *last = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in blocks {
        out.extend(std::iter::repeat_n(s / c as f64, c));
    }
    out
}

/// Sticky evolution of a continuum: metric projection of `f0 + t v0` onto the monotone cone.
pub fn continuum_evolve(f0: &MonotoneProfile, v0: &[f64], t: f64) -> Result<MonotoneProfile> {
    if v0.len() != f0.len() {
        return Err(StickyError::Invalid("velocity samples must match the profile grid".into()));
    }
    let free: Vec<f64> = f0.samples.iter().zip(v0).map(|(f, v)| f + t * v).collect();
    Ok(MonotoneProfile { samples: pav(&free) })
}

/// Step-profile embedding of a finite system: particle `i` occupies a block of
/// grid cells proportional to its mass. Masses must be integer multiples of
/// `total/grid`.
pub fn embed_system(sys: &StickySystem, grid: usize) -> Result<(MonotoneProfile, Vec<f64>)> {
    let total: f64 = sys.masses.iter().sum();
    let mut f = Vec::with_capacity(grid);
    let mut v = Vec::with_capacity(grid);
    for i in 0..sys.len() {
        let cells = sys.masses[i] / total * grid as f64;
        let k = cells.round();
        if (cells - k).abs() > 1e-9 || k < 1.0 {
            return Err(StickyError::Invalid(format!("mass of particle {i} is not a multiple of 1/{grid} of the total")));
        }
        for _ in 0..k as usize {
            f.push(sys.positions[i]);
            v.push(sys.velocities[i]);
        }
    }
    Ok((MonotoneProfile::new(f)?, v))
}

/// Smallest enclosing ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        dist(&self.center, p) <= self.radius * (1.0 + tol) + tol
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Ball with all `support` points on its boundary and centre in their affine hull.
pub fn circumball(support: &[&[f64]]) -> Option<Ball> {
    let p0 = support[0];
    let d = p0.len();
    let k = support.len() - 1;
    if k == 0 {
        return Some(Ball {
            center: p0.to_vec(),
            radius: 0.0,
        });
    }
    let diffs: Vec<Vec<f64>> = support[1..].iter().map(|p| p.iter().zip(p0).map(|(a, b)| a - b).collect()).collect();
    let a = DMatrix::from_fn(k, k, |r, c| diffs[r].iter().zip(&diffs[c]).map(|(x, y)| x * y).sum());
    let b = DVector::from_fn(k, |r, _| 0.5 * diffs[r].iter().map(|x| x * x).sum::<f64>());
    let lu = a.clone().lu();
    let lam = lu.solve(&b)?;
    // reject near-singular (affinely dependent) supports
    let resid = (&a * &lam - &b).amax();
    if !lam.iter().all(|x| x.is_finite()) || resid > 1e-9 * b.amax().max(1e-300) {
        return None;
    }
    let mut center = p0.to_vec();
    for (l, dv) in lam.iter().zip(&diffs) {
        for i in 0..d {
            center[i] += l * dv[i];
        }
    }
    let radius = support.iter().map(|p| dist(&center, p)).fold(0.0, f64::max);
    Some(Ball { center, radius })
}

fn ball_of(support: &[Vec<f64>]) -> Ball {
    let refs: Vec<&[f64]> = support.iter().map(|v| v.as_slice()).collect();
    circumball(&refs).unwrap_or_else(|| {
        // degenerate support: fall back to the widest pair
        let mut best = Ball {
            center: support[0].clone(),
            radius: 0.0,
        };
        for i in 0..support.len() {
            for j in i + 1..support.len() {
                let r = 0.5 * dist(&support[i], &support[j]);
                if r > best.radius {
                    best = Ball {
                        center: support[i].iter().zip(&support[j]).map(|(a, b)| 0.5 * (a + b)).collect(),
                        radius: r,
                    };
                }
            }
        }
        best
    })
}

const BALL_TOL: f64 = 1e-12;

fn welzl_mtf(points: &mut [Vec<f64>], n: usize, support: &mut Vec<Vec<f64>>, dim: usize) -> Ball {
    let mut ball = if support.is_empty() {
        Ball {
            center: points.first().cloned().unwrap_or_default(),
            radius: -1.0,
        }
    } else {
        ball_of(support)
    };
    if support.len() == dim + 1 {
        return ball;
    }
    for i in 0..n {
        let outside = ball.radius < 0.0 || !ball.contains(&points[i], BALL_TOL);
        if outside {
            support.push(points[i].clone());
            ball = welzl_mtf(points, i, support, dim);
            support.pop();
            points[..=i].rotate_right(1);
        }
    }
    ball
}

/// Joint shock velocity: centre of the smallest ball covering all velocities (d ≤ 3).
pub fn shock_velocity(velocities: &[Vec<f64>]) -> Result<Ball> {
    let first = velocities.first().ok_or(StickyError::Empty)?;
    let d = first.len();
    if !(1..=3).contains(&d) || velocities.iter().any(|v| v.len() != d) {
        return Err(StickyError::Invalid("velocities must share a dimension in 1..=3".into()));
    }
    if velocities.len() > 64 {
        return Err(StickyError::Invalid("at most 64 velocities".into()));
    }
    if velocities.iter().flatten().any(|x| !x.is_finite()) {
        return Err(StickyError::Invalid("non-finite velocity".into()));
    }
    let mut pts = velocities.to_vec();
    let n = pts.len();
    let mut ball = welzl_mtf(&mut pts, n, &mut Vec::new(), d);
    ball.radius = velocities.iter().map(|p| dist(&ball.center, p)).fold(0.0, f64::max);
    Ok(ball)
}

/// Seeded random sticky system with `n` particles, masses in `[0.5, 2]`.
pub fn random_system(n: usize, seed: u64) -> StickySystem {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let masses = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut positions: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    positions.sort_by(f64::total_cmp);
    let velocities = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    StickySystem::new(masses, positions, velocities).expect("valid by construction")
}
