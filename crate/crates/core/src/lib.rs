//! Variational and finite-volume solvers for the parabolic-parabolic
//! Keller-Segel system with critical porous-medium diffusion
//!
//! ```text
//! u_t = div(grad u^m - chi u grad v),   tau v_t = Laplacian v - alpha v + u,   m = 2 - 2/d.
//! ```
//!
//! The main entry point is the minimizing-movement scheme in [`jko`]; [`fd`]
//! provides an independent finite-volume oracle.

pub mod energy;
pub mod error;
pub mod fd;
pub mod field;
pub mod grid;
pub mod hls;
pub mod jko;
pub mod kernels;
pub mod ops;
pub mod params;
pub mod runner;
pub mod scenario;
pub mod transport;

pub use error::{Error, Result};
pub use field::{ChemField, DensityField, GridFunction};
pub use grid::{GridMode, GridSpec};
pub use params::ModelParams;
