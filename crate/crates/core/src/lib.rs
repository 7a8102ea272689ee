//! Numerical toolkit for weighted estimates of Beltrami-type equations in the
//! plane: spectral singular integrals, Muckenhoupt weights, commutator
//! compactness diagnostics, Neumann-series solvers and quasiconformal maps.

pub mod builders;
pub mod commutators;
mod conv;
pub mod error;
pub mod grid;
pub mod io;
pub mod qcmap;
pub mod solver;
pub mod stats;
pub mod transforms;
pub mod weights;

pub use num_complex::Complex64;

pub use error::{Error, Result};
pub use grid::{make_grid, weighted_lp_norm, wirtinger_derivative, Field, Grid, Wirtinger};
pub use qcmap::{InverseTable, QcMap};
pub use solver::{BeltramiCoefficients, SolveResult};
pub use transforms::{BeurlingKernel, Kernel};
pub use weights::{power_weight, CubeFamily, Weight};
