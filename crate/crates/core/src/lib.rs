//! Spectral solver for the generalized complex Monge-Ampère equation
//! `(omega + D_J^+(phi))^2 = e^f omega^2` on flat almost Kähler 4-tori.

pub mod algebra;
pub mod calculus;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod krylov;
pub mod lejmi;
pub mod manufactured;
pub mod solver;

pub use algebra::{AcStructure, CompatibleTriple, EigenPairField, PositivityReport, Sign};
pub use error::{Error, Result};
pub use field::{FourForm, OneForm, ScalarField, ThreeForm, TwoForm};
pub use grid::{Grid, GridSpec};
