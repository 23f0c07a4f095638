//! GFL1 binary snapshot format and small CSV helpers.
//!
//! Layout (little-endian):
//!
//! | offset | type  | field                         |
//! |--------|-------|-------------------------------|
//! | 0      | [u8;4]| magic `GFL1`                  |
//! | 4      | u32   | nx                            |
//! | 8      | u32   | ny                            |
//! | 12     | u32   | ncomp                         |
//! | 16     | u64   | reserved (written as 0)       |
//! | 24     | u32   | nz (1 for planar data)        |
//! | 28     | u32   | padding (0)                   |
//!
//! followed by `nz*ny*nx*ncomp` f64 values ordered `[z][y][x][comp]`.
//! Complex data uses `ncomp = 2` with interleaved (re, im).

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::spectral::{Grid2, Grid3, VelocityField3D, VorticityField2D};

pub const MAGIC: &[u8; 4] = b"GFL1";
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum GflError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("payload has {got} values, header implies {expected}")]
    Truncated { expected: usize, got: usize },
    #[error("unexpected shape: {0}")]
    Shape(String),
}

/// In-memory GFL1 record.
#[derive(Debug, Clone, PartialEq)]
pub struct GflArray {
    pub nx: u32,
    pub ny: u32,
    pub nz: u32,
    pub ncomp: u32,
    pub data: Vec<f64>,
}

impl GflArray {
    pub fn expected_len(&self) -> usize {
        self.nx as usize * self.ny as usize * self.nz.max(1) as usize * self.ncomp as usize
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), GflError> {
        if self.data.len() != self.expected_len() {
            return Err(GflError::Truncated {
                expected: self.expected_len(),
                got: self.data.len(),
            });
        }
        let mut header = [0u8; HEADER_LEN];
        header[0..4].copy_from_slice(MAGIC);
        header[4..8].copy_from_slice(&self.nx.to_le_bytes());
        header[8..12].copy_from_slice(&self.ny.to_le_bytes());
        header[12..16].copy_from_slice(&self.ncomp.to_le_bytes());
        header[16..24].copy_from_slice(&0u64.to_le_bytes());
        header[24..28].copy_from_slice(&self.nz.max(1).to_le_bytes());
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, GflError> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        let magic: [u8; 4] = header[0..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(GflError::BadMagic(magic));
        }
        let word = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let (nx, ny, ncomp) = (word(4), word(8), word(12));
        let nz = word(24).max(1);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let arr = Self { nx, ny, nz, ncomp, data };
        if arr.data.len() != arr.expected_len() || bytes.len() % 8 != 0 {
            return Err(GflError::Truncated {
                expected: arr.expected_len(),
                got: arr.data.len(),
            });
        }
        Ok(arr)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GflError> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GflError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }

    pub fn from_scalar_2d(grid: &Grid2, samples: &[f64]) -> Self {
        Self {
            nx: grid.nx as u32,
            ny: grid.ny as u32,
            nz: 1,
            ncomp: 1,
            data: samples.to_vec(),
        }
    }

    pub fn from_vorticity(w: &VorticityField2D) -> Self {
        Self::from_scalar_2d(w.grid(), &w.to_physical())
    }

    /// Row-major complex matrix (`ny` rows, `nx` columns).
    pub fn from_complex_matrix(rows: usize, cols: usize, entries: &[Complex64]) -> Self {
        let mut data = Vec::with_capacity(entries.len() * 2);
        for z in entries {
            data.push(z.re);
            data.push(z.im);
        }
        Self {
            nx: cols as u32,
            ny: rows as u32,
            nz: 1,
            ncomp: 2,
            data,
        }
    }

    pub fn to_complex(&self) -> Result<Vec<Complex64>, GflError> {
        if self.ncomp != 2 {
            return Err(GflError::Shape(format!("expected ncomp=2, got {}", self.ncomp)));
        }
        Ok(self
            .data
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect())
    }

    /// 1D profile stored as a single row.
    pub fn from_profile(samples: &[f64]) -> Self {
        Self {
            nx: samples.len() as u32,
            ny: 1,
            nz: 1,
            ncomp: 1,
            data: samples.to_vec(),
        }
    }

    pub fn from_velocity3d(u: &VelocityField3D) -> Self {
        let n = u.grid.n;
        let mut data = Vec::with_capacity(u.grid.len() * 3);
        for idx in 0..u.grid.len() {
            for c in 0..3 {
                data.push(u.components[c][idx]);
            }
        }
        Self {
            nx: n as u32,
            ny: n as u32,
            nz: n as u32,
            ncomp: 3,
            data,
        }
    }

    pub fn to_velocity3d(&self) -> Result<VelocityField3D, GflError> {
        if self.ncomp != 3 || self.nx != self.ny || self.ny != self.nz {
            return Err(GflError::Shape(format!(
                "expected cubic 3-component field, got {}x{}x{} with {} components",
                self.nx, self.ny, self.nz, self.ncomp
            )));
        }
        let grid = Grid3::new(self.nx as usize).map_err(|e| GflError::Shape(e.to_string()))?;
        let mut comps = [
            Vec::with_capacity(grid.len()),
            Vec::with_capacity(grid.len()),
            Vec::with_capacity(grid.len()),
        ];
        for chunk in self.data.chunks_exact(3) {
            for c in 0..3 {
                comps[c].push(chunk[c]);
            }
        }
        VelocityField3D::new(grid, comps).map_err(|e| GflError::Shape(e.to_string()))
    }
}

/// Formats a CSV row with full round-trip precision.
pub fn csv_row(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(",")
}
