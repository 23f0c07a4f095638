use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::spectral::VorticityField2D;

pub const DEFAULT_BLOB_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    /// `∫ω` over the blob cells.
    pub circulation: f64,
    pub area: f64,
    /// `|ω|`-weighted centroid, wrapped into the domain.
    pub centroid: (f64, f64),
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSummary {
    pub blobs: Vec<Blob>,
    /// Circulation of everything below threshold; with the blobs it sums to ∫ω = 0.
    pub background_circulation: f64,
}

impl BlobSummary {
    pub fn count(&self) -> usize {
        self.blobs.len()
    }

    pub fn total_circulation(&self) -> f64 {
        self.blobs.iter().map(|b| b.circulation).sum::<f64>() + self.background_circulation
    }

    pub fn count_by_sign(&self) -> (usize, usize) {
        let pos = self.blobs.iter().filter(|b| b.circulation > 0.0).count();
        (pos, self.blobs.len() - pos)
    }
}

/// Connected components (4-neighbour, periodic) of `{|ω| > threshold·max|ω|}`.
pub fn detect_blobs(w: &VorticityField2D, threshold: f64) -> BlobSummary {
    let grid = *w.grid();
    let omega = w.to_physical();
    let (nx, ny) = (grid.nx, grid.ny);
    let max = omega.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let da = grid.cell_area();
    let total: f64 = omega.iter().sum::<f64>() * da;
    if max == 0.0 {
        return BlobSummary {
            blobs: Vec::new(),
            background_circulation: total,
        };
    }
    let cut = threshold * max;
    let mask: Vec<bool> = omega.iter().map(|x| x.abs() > cut).collect();
    let mut visited = vec![false; omega.len()];
    let mut blobs = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..omega.len() {
        if !mask[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        // unwrapped integer coordinates so that centroids straddling the seam stay correct
        queue.push_back((start, (start % nx) as i64, (start / nx) as i64));
        let (mut circ, mut cells, mut wsum, mut cx, mut cy) = (0.0, 0usize, 0.0, 0.0, 0.0);
        while let Some((idx, ux, uy)) = queue.pop_front() {
            let val = omega[idx];
            circ += val * da;
            cells += 1;
            wsum += val.abs();
            cx += val.abs() * ux as f64;
            cy += val.abs() * uy as f64;
            let (ix, iy) = (idx % nx, idx / nx);
            let neighbours = [
                ((ix + 1) % nx, iy, ux + 1, uy),
                ((ix + nx - 1) % nx, iy, ux - 1, uy),
                (ix, (iy + 1) % ny, ux, uy + 1),
                (ix, (iy + ny - 1) % ny, ux, uy - 1),
            ];
            for (jx, jy, vx, vy) in neighbours {
                let j = jy * nx + jx;
                if mask[j] && !visited[j] {
                    visited[j] = true;
                    queue.push_back((j, vx, vy));
                }
            }
        }
        let centroid = (
            (cx / wsum * grid.dx()).rem_euclid(grid.lx),
            (cy / wsum * grid.dy()).rem_euclid(grid.ly),
        );
        blobs.push(Blob {
            circulation: circ,
            area: cells as f64 * da,
            centroid,
            cells,
        });
    }
    let in_blobs: f64 = blobs.iter().map(|b| b.circulation).sum();
    BlobSummary {
        blobs,
        background_circulation: total - in_blobs,
    }
}
