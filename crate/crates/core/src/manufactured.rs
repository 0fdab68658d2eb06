//! Analytic test problems.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;

/// A right-hand side with its known solution.
#[derive(Clone, Debug)]
pub struct Manufactured {
    pub f: ScalarField,
    pub phi: ScalarField,
    /// Exact `min a1` of the solution.
    pub min_a1: f64,
}

/// The one-dimensional family `phi = eps (L0 / 2 pi)^2 sin(2 pi x0 / L0)`
/// on the flat Kähler torus, for which `omega + D_J^+(phi)` has eigenvalues
/// `(1 - eps sin(2 pi x0 / L0), 1)` and `f = log(1 - eps sin(2 pi x0 / L0))`.
/// Both identities hold exactly at the grid points.
pub fn sine_x0(grid: &Arc<Grid>, eps: f64) -> Result<Manufactured> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidConfig(format!("epsilon {eps} outside [0, 1)")));
    }
    let l0 = grid.spec().periods[0];
    let k = 2.0 * PI / l0;
    Ok(Manufactured {
        f: ScalarField::sample(grid, |x| (1.0 - eps * (k * x[0]).sin()).ln()),
        phi: ScalarField::sample(grid, |x| eps / (k * k) * (k * x[0]).sin()),
        min_a1: (0..grid.dims()[0])
            .map(|i| 1.0 - eps * (k * grid.coordinate(0, i)).sin())
            .fold(1.0, f64::min),
    })
}
