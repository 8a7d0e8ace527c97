//! Global para-differential calculus on SU(2) and the 2-sphere, with a
//! spherical capillary water-waves solver built on top of it.
//!
//! Module layout follows the data flow: [`repr`] gives Wigner matrices and
//! the symbols of the left-invariant fields, [`transform`] the Peter-Weyl
//! transform and the Hopf lift, [`diffops`] difference and Taylor operators,
//! [`lp`] Littlewood-Paley cutoffs, [`symcalc`] quantization and symbolic
//! calculus, [`paradiff`] para-products and regularized symbols, [`dno`] the
//! Dirichlet-Neumann operator and [`waves`] the evolution problem.

pub mod cli;
pub mod diffops;
pub mod dno;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod paradiff;
pub mod repr;
pub mod symcalc;
pub mod transform;
pub mod waves;

pub use error::{Error, Result};
pub use linalg::{CMat, C64};
pub use repr::{EndoMatrix, EulerPoint, RepLabel, Su2};
pub use transform::{EulerGrid, Grid, GridFn, HopfGrid, SpectralFn, SphFn};
