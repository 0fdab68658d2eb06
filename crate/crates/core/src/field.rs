//! Discretized differential forms on the periodic grid.
//!
//! Every form stores its coefficients in the coordinate coframe
//! `dx^0..dx^3`. Two-forms use the ordered basis `dx^a ^ dx^b`, `a < b`,
//! in the order `(01, 02, 03, 12, 13, 23)`; three-forms use
//! `(012, 013, 023, 123)`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Index pairs of the 2-form basis.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Index triples of the 3-form basis.
pub const TRIPLES: [(usize, usize, usize); 4] = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];

/// Position of `(a, b)` with `a < b` in [`PAIRS`].
pub fn pair_index(a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < 4);
    match (a, b) {
        (0, 1) => 0,
        (0, 2) => 1,
        (0, 3) => 2,
        (1, 2) => 3,
        (1, 3) => 4,
        _ => 5,
    }
}

macro_rules! form_type {
    ($(#[$meta:meta])* $name:ident, $n:expr) => {
        $(#[$meta])*
        #[derive(Clone, Debug)]
        pub struct $name {
            grid: Arc<Grid>,
            comps: [Vec<f64>; $n],
        }

        impl $name {
            pub const COMPONENTS: usize = $n;

            pub fn from_components(grid: Arc<Grid>, comps: [Vec<f64>; $n]) -> Result<Self> {
                for c in &comps {
                    if c.len() != grid.len() {
                        return Err(Error::GridMismatch);
                    }
                }
                Ok($name { grid, comps })
            }

            pub fn zeros(grid: &Arc<Grid>) -> Self {
                let comps = std::array::from_fn(|_| vec![0.0; grid.len()]);
                $name { grid: grid.clone(), comps }
            }

            pub fn grid(&self) -> &Arc<Grid> {
                &self.grid
            }

            pub fn components(&self) -> &[Vec<f64>; $n] {
                &self.comps
            }

            pub fn components_mut(&mut self) -> &mut [Vec<f64>; $n] {
                &mut self.comps
            }

            pub fn into_components(self) -> [Vec<f64>; $n] {
                self.comps
            }

            pub fn component(&self, i: usize) -> &[f64] {
                &self.comps[i]
            }

            pub fn at(&self, idx: usize) -> [f64; $n] {
                std::array::from_fn(|k| self.comps[k][idx])
            }

            pub fn check_finite(&self) -> Result<()> {
                if self.comps.iter().all(|c| c.iter().all(|v| v.is_finite())) {
                    Ok(())
                } else {
                    Err(Error::InvalidField(stringify!($name)))
                }
            }

            pub fn same_grid(&self, grid: &Grid) -> Result<()> {
                if *self.grid == *grid {
                    Ok(())
                } else {
                    Err(Error::GridMismatch)
                }
            }

            /// Max over points and components of the absolute value.
            pub fn max_abs(&self) -> f64 {
                self.comps
                    .iter()
                    .flat_map(|c| c.iter())
                    .fold(0.0f64, |m, v| m.max(v.abs()))
            }

            pub fn scale(&self, s: f64) -> Self {
                let comps = std::array::from_fn(|k| self.comps[k].iter().map(|v| v * s).collect());
                $name { grid: self.grid.clone(), comps }
            }

            /// `self + s * other`.
            pub fn axpy(&self, s: f64, other: &Self) -> Self {
                let comps = std::array::from_fn(|k| {
                    self.comps[k]
                        .par_iter()
                        .zip(other.comps[k].par_iter())
                        .map(|(a, b)| a + s * b)
                        .collect()
                });
                $name { grid: self.grid.clone(), comps }
            }

            pub fn add(&self, other: &Self) -> Self {
                self.axpy(1.0, other)
            }

            pub fn sub(&self, other: &Self) -> Self {
                self.axpy(-1.0, other)
            }

            /// Max componentwise distance.
            pub fn max_diff(&self, other: &Self) -> f64 {
                self.sub(other).max_abs()
            }

            /// Builds a form from a per-point closure.
            pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(usize) -> [f64; $n] + Sync + Send) -> Self {
                let vals: Vec<[f64; $n]> = (0..grid.len()).into_par_iter().map(&f).collect();
                let comps = std::array::from_fn(|k| vals.iter().map(|v| v[k]).collect());
                $name { grid: grid.clone(), comps }
            }
        }
    };
}

form_type!(
    /// A 0-form.
    ScalarField, 1
);
form_type!(
    /// A 1-form `sum alpha_a dx^a`.
    OneForm, 4
);
form_type!(
    /// A 2-form in the basis [`PAIRS`].
    TwoForm, 6
);
form_type!(
    /// A 3-form in the basis [`TRIPLES`].
    ThreeForm, 4
);
form_type!(
    /// A top form `density * dx^0 ^ dx^1 ^ dx^2 ^ dx^3`.
    FourForm, 1
);

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        Self::from_components(grid, [values])
    }

    /// Samples a function of the coordinates.
    pub fn sample(grid: &Arc<Grid>, f: impl Fn([f64; 4]) -> f64 + Sync) -> Self {
        ScalarField {
            grid: grid.clone(),
            comps: [grid.sample(f)],
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            comps: [vec![c; grid.len()]],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.comps[0]
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.comps[0]
    }

    pub fn mean(&self) -> f64 {
        self.values().iter().sum::<f64>() / self.values().len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max - min`.
    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            comps: [self.values().par_iter().map(|&v| f(v)).collect()],
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            comps: [self
                .values()
                .par_iter()
                .zip(other.values().par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect()],
        }
    }

    pub fn shift(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// Root-mean-square value.
    pub fn rms(&self) -> f64 {
        (self.values().iter().map(|v| v * v).sum::<f64>() / self.values().len() as f64).sqrt()
    }
}

impl FourForm {
    pub fn new(grid: Arc<Grid>, density: Vec<f64>) -> Result<Self> {
        Self::from_components(grid, [density])
    }

    pub fn density(&self) -> &[f64] {
        &self.comps[0]
    }

    pub fn into_scalar(self) -> ScalarField {
        let [d] = self.comps;
        ScalarField {
            grid: self.grid,
            comps: [d],
        }
    }
}

impl TwoForm {
    /// Constant 2-form with the given basis coefficients.
    pub fn constant(grid: &Arc<Grid>, c: [f64; 6]) -> Self {
        TwoForm {
            grid: grid.clone(),
            comps: std::array::from_fn(|k| vec![c[k]; grid.len()]),
        }
    }

    /// `dx^0^dx^1 + dx^2^dx^3`.
    pub fn standard_symplectic(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, [1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    }

    /// Pointwise `f * self`.
    pub fn mul_scalar(&self, f: &ScalarField) -> Self {
        let comps = std::array::from_fn(|k| {
            self.comps[k]
                .par_iter()
                .zip(f.values().par_iter())
                .map(|(a, b)| a * b)
                .collect()
        });
        TwoForm {
            grid: self.grid.clone(),
            comps,
        }
    }
}

impl OneForm {
    pub fn constant(grid: &Arc<Grid>, c: [f64; 4]) -> Self {
        OneForm {
            grid: grid.clone(),
            comps: std::array::from_fn(|k| vec![c[k]; grid.len()]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn pair_index_matches_table() {
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            assert_eq!(pair_index(a, b), k);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let grid = Grid::new(GridSpec::cube(4).unwrap()).unwrap();
        assert_eq!(
            ScalarField::new(grid.clone(), vec![0.0; 3]).unwrap_err(),
            Error::GridMismatch
        );
        let s = ScalarField::constant(&grid, 2.0);
        assert_eq!(s.mean(), 2.0);
        assert_eq!(s.oscillation(), 0.0);
        let bad = ScalarField::new(grid, vec![f64::NAN; 256]).unwrap();
        assert!(bad.check_finite().is_err());
    }
}
