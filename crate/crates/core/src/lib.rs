//! Numerical laboratory for the geometry of ideal fluids.
//!
//! Modules:
//!
//! * [`spectral`]: transforms, Biot–Savart, quadratic functionals on periodic grids
//! * [`euler2d`]: pseudo-spectral 2D Euler in vorticity form with diagnostics
//! * [`zeitlin`]: SU(N) sine-bracket truncation and isospectral integration
//! * [`point_vortex`]: Kirchhoff dynamics on the plane, half-plane, sphere and torus
//! * [`sticky`]: sticking particles, their variational principle, and the circle law
//! * [`madelung`]: Madelung transform and split-step NLS
//! * [`filament`]: binormal flow of vortex filaments and the Hasimoto map
//! * [`topo3d`]: helicity and Beltrami diagnostics on the 3-torus
//! * [`entropy`]: ε-entropy estimators
//! * [`runner`]: config parsing and experiment orchestration

pub mod entropy;
pub mod euler2d;
pub mod filament;
pub mod io;
pub mod madelung;
pub mod point_vortex;
pub mod runner;
pub mod spectral;
pub mod sticky;
pub mod topo3d;
pub mod zeitlin;

pub use num_complex::Complex64;
