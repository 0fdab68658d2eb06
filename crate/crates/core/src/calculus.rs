//! Spectral exterior calculus: `d`, the metric codifferential, Laplacians,
//! the flat Poisson inverse and integration.
//!
//! Every derivative is the Fourier multiplier `i k` with the Nyquist entry
//! zeroed. That matrix is real and skew, so discrete summation by parts is
//! exact and `d o d = 0` holds at the level of grid values.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::algebra::CompatibleTriple;
use crate::error::{Error, Result};
use crate::field::{pair_index, FourForm, OneForm, ScalarField, ThreeForm, TwoForm, PAIRS, TRIPLES};
use crate::grid::Grid;

/// Relative tolerance on the mean of a Poisson right-hand side.
pub const MEAN_TOL: f64 = 1e-10;

/// Degree-raising exterior derivative.
pub trait ExteriorDerivative {
    type Output;
    fn exterior_d(&self) -> Result<Self::Output>;
}

/// `d` of a scalar, 1-, 2- or 3-form.
pub fn exterior_d<F: ExteriorDerivative>(form: &F) -> Result<F::Output> {
    form.exterior_d()
}

fn ik(grid: &Grid, m: [usize; 4], axis: usize) -> Complex64 {
    Complex64::new(0.0, grid.dk(axis)[m[axis]])
}

impl ExteriorDerivative for ScalarField {
    type Output = OneForm;

    fn exterior_d(&self) -> Result<OneForm> {
        self.check_finite()?;
        let grid = self.grid().clone();
        let g = &grid;
        let out = g.spectral_map(&[self.values()], 4, |m, i, o| {
            for a in 0..4 {
                o[a] = ik(g, m, a) * i[0];
            }
        });
        OneForm::from_components(grid.clone(), vec_array(out))
    }
}

impl ExteriorDerivative for OneForm {
    type Output = TwoForm;

    fn exterior_d(&self) -> Result<TwoForm> {
        self.check_finite()?;
        let grid = self.grid().clone();
        let g = &grid;
        let inputs: Vec<&[f64]> = self.components().iter().map(|c| c.as_slice()).collect();
        let out = g.spectral_map(&inputs, 6, |m, i, o| {
            for (k, &(a, b)) in PAIRS.iter().enumerate() {
                o[k] = ik(g, m, a) * i[b] - ik(g, m, b) * i[a];
            }
        });
        TwoForm::from_components(grid.clone(), vec_array(out))
    }
}

impl ExteriorDerivative for TwoForm {
    type Output = ThreeForm;

    fn exterior_d(&self) -> Result<ThreeForm> {
        self.check_finite()?;
        let grid = self.grid().clone();
        let g = &grid;
        let inputs: Vec<&[f64]> = self.components().iter().map(|c| c.as_slice()).collect();
        let out = g.spectral_map(&inputs, 4, |m, i, o| {
            for (k, &(a, b, c)) in TRIPLES.iter().enumerate() {
                o[k] = ik(g, m, a) * i[pair_index(b, c)] - ik(g, m, b) * i[pair_index(a, c)]
                    + ik(g, m, c) * i[pair_index(a, b)];
            }
        });
        ThreeForm::from_components(grid.clone(), vec_array(out))
    }
}

impl ExteriorDerivative for ThreeForm {
    type Output = FourForm;

    fn exterior_d(&self) -> Result<FourForm> {
        self.check_finite()?;
        let grid = self.grid().clone();
        let g = &grid;
        let inputs: Vec<&[f64]> = self.components().iter().map(|c| c.as_slice()).collect();
        // d(g012, g013, g023, g123) = d0 g123 - d1 g023 + d2 g013 - d3 g012
        let out = g.spectral_map(&inputs, 1, |m, i, o| {
            o[0] = ik(g, m, 0) * i[3] - ik(g, m, 1) * i[2] + ik(g, m, 2) * i[1] - ik(g, m, 3) * i[0];
        });
        FourForm::from_components(grid.clone(), vec_array(out))
    }
}

fn vec_array<const N: usize>(v: Vec<Vec<f64>>) -> [Vec<f64>; N] {
    v.try_into().expect("component count")
}

/// Codifferential `d* = -*d*` with respect to the triple's metric.
pub trait Codifferential {
    type Output;
    fn codifferential(&self, triple: &CompatibleTriple) -> Result<Self::Output>;
}

pub fn codifferential<F: Codifferential>(form: &F, triple: &CompatibleTriple) -> Result<F::Output> {
    form.codifferential(triple)
}

impl Codifferential for OneForm {
    type Output = ScalarField;

    /// `d* alpha = -(1/sqrt g) d_a (sqrt g g^{ab} alpha_b)`.
    fn codifferential(&self, triple: &CompatibleTriple) -> Result<ScalarField> {
        triple.check_grid(self.grid())?;
        let flux = OneForm::from_fn(self.grid(), |i| {
            let up = triple.inv_metric(i) * nalgebra::Vector4::from(self.at(i));
            let s = triple.sqrt_det(i);
            [s * up[0], s * up[1], s * up[2], s * up[3]]
        });
        let div = divergence(&flux);
        let vals = div
            .par_iter()
            .zip(triple.sqrt_dets().par_iter())
            .map(|(d, s)| -d / s)
            .collect();
        ScalarField::new(self.grid().clone(), vals)
    }
}

impl Codifferential for TwoForm {
    type Output = OneForm;

    /// `(d* beta)^b = -(1/sqrt g) d_a (sqrt g beta^{ab})`, then lowered.
    fn codifferential(&self, triple: &CompatibleTriple) -> Result<OneForm> {
        triple.check_grid(self.grid())?;
        let flux = TwoForm::from_fn(self.grid(), |i| {
            let s = triple.sqrt_det(i);
            triple.raise_two(i, &self.at(i)).map(|v| s * v)
        });
        Ok(codifferential_of_flux(&flux, triple))
    }
}

/// `d* beta` given the density `sqrt g beta^{ab}` (both indices raised).
pub(crate) fn codifferential_of_flux(flux: &TwoForm, triple: &CompatibleTriple) -> OneForm {
    let up = two_form_divergence(flux);
    OneForm::from_fn(flux.grid(), |i| {
        let s = triple.sqrt_det(i);
        let v = nalgebra::Vector4::new(up[0][i], up[1][i], up[2][i], up[3][i]) * (-1.0 / s);
        let low = triple.metric(i) * v;
        [low[0], low[1], low[2], low[3]]
    })
}

/// `sum_a d_a X^a` for the components of a vector density.
fn divergence(flux: &OneForm) -> Vec<f64> {
    let g = flux.grid().clone();
    let inputs: Vec<&[f64]> = flux.components().iter().map(|c| c.as_slice()).collect();
    g.spectral_map(&inputs, 1, |m, i, o| {
        o[0] = (0..4).map(|a| ik(&g, m, a) * i[a]).sum();
    })
    .pop()
    .unwrap()
}

/// `Y^b = sum_a d_a X^{ab}` for an antisymmetric bivector density.
fn two_form_divergence(flux: &TwoForm) -> Vec<Vec<f64>> {
    let g = flux.grid().clone();
    let inputs: Vec<&[f64]> = flux.components().iter().map(|c| c.as_slice()).collect();
    g.spectral_map(&inputs, 4, |m, i, o| {
        for b in 0..4 {
            let mut acc = Complex64::default();
            for a in 0..4 {
                if a < b {
                    acc += ik(&g, m, a) * i[pair_index(a, b)];
                } else if a > b {
                    acc -= ik(&g, m, a) * i[pair_index(b, a)];
                }
            }
            o[b] = acc;
        }
    })
}

/// `Delta_g phi = d* d phi` (non-negative spectrum).
pub fn laplacian(phi: &ScalarField, triple: &CompatibleTriple) -> Result<ScalarField> {
    triple.check_grid(phi.grid())?;
    codifferential(&exterior_d(phi)?, triple)
}

/// Flat Laplacian `-sum_a d_a d_a`.
pub fn flat_laplacian(phi: &ScalarField) -> ScalarField {
    let g = phi.grid().clone();
    let out = g
        .spectral_map(&[phi.values()], 1, |m, i, o| o[0] = i[0] * g.laplace_symbol(m))
        .pop()
        .unwrap();
    ScalarField::new(g.clone(), out).expect("same grid")
}

/// Mean-zero solution of the flat Poisson problem `Delta_flat phi = rho`.
///
/// Modes on which the discrete Laplacian vanishes (the mean and the pure
/// Nyquist combinations) are set to zero.
pub fn flat_poisson_solve(rho: &ScalarField) -> Result<ScalarField> {
    rho.check_finite()?;
    let mean = rho.mean();
    let scale = rho.max_abs().max(f64::MIN_POSITIVE);
    if mean.abs() > MEAN_TOL * scale.max(1.0) {
        return Err(Error::NotSolvable { mean });
    }
    Ok(flat_inverse(rho, 0.0))
}

/// Fourier inverse of the flat Laplacian, with `null_value` as the
/// multiplier on its null modes (no mean check).
pub(crate) fn flat_inverse(rho: &ScalarField, null_value: f64) -> ScalarField {
    let g = rho.grid().clone();
    let out = g
        .spectral_map(&[rho.values()], 1, |m, i, o| {
            let s = g.laplace_symbol(m);
            o[0] = if s > 0.0 { i[0] / s } else { i[0] * null_value };
        })
        .pop()
        .unwrap();
    ScalarField::new(g.clone(), out).expect("same grid")
}

/// Riemann sum of a top form.
pub fn integrate(mu: &FourForm) -> f64 {
    let cell = mu.grid().spec().cell_volume();
    mu.density().iter().sum::<f64>() * cell
}

/// `L^2(g)` pairing of functions.
pub fn l2_scalar(a: &ScalarField, b: &ScalarField, triple: &CompatibleTriple) -> f64 {
    let cell = a.grid().spec().cell_volume();
    (0..a.grid().len())
        .into_par_iter()
        .map(|i| a.values()[i] * b.values()[i] * triple.sqrt_det(i))
        .sum::<f64>()
        * cell
}

/// `L^2(g)` pairing of 1-forms.
pub fn l2_one(a: &OneForm, b: &OneForm, triple: &CompatibleTriple) -> f64 {
    let cell = a.grid().spec().cell_volume();
    (0..a.grid().len())
        .into_par_iter()
        .map(|i| triple.inner_one(i, &a.at(i), &b.at(i)) * triple.sqrt_det(i))
        .sum::<f64>()
        * cell
}

/// `L^2(g)` pairing of 2-forms.
pub fn l2_two(a: &TwoForm, b: &TwoForm, triple: &CompatibleTriple) -> f64 {
    let cell = a.grid().spec().cell_volume();
    (0..a.grid().len())
        .into_par_iter()
        .map(|i| triple.inner_two(i, &a.at(i), &b.at(i)) * triple.sqrt_det(i))
        .sum::<f64>()
        * cell
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use std::f64::consts::PI;

    #[test]
    fn codifferential_of_cos_mode() {
        let g = Grid::new(GridSpec::cube(8).unwrap()).unwrap();
        let t = CompatibleTriple::standard(&g);
        let mut c = [vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()]];
        c[0] = g.sample(|x| x[0].cos());
        let alpha = OneForm::from_components(g.clone(), c).unwrap();
        let d = codifferential(&alpha, &t).unwrap();
        for (i, v) in d.values().iter().enumerate() {
            assert!((v - g.point(i)[0].sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn codifferential_of_two_form_mode() {
        // d*(f(x0) dx0^dx1) = -f'(x0) dx1
        let g = Grid::new(GridSpec::cube(8).unwrap()).unwrap();
        let t = CompatibleTriple::standard(&g);
        let beta = TwoForm::from_fn(&g, |i| [g.point(i)[0].sin(), 0.0, 0.0, 0.0, 0.0, 0.0]);
        let d = codifferential(&beta, &t).unwrap();
        for i in 0..g.len() {
            let x = g.point(i);
            assert!((d.component(1)[i] + x[0].cos()).abs() < 1e-12);
            assert!(d.component(0)[i].abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_requires_mean_zero() {
        let g = Grid::new(GridSpec::cube(4).unwrap()).unwrap();
        let rho = ScalarField::constant(&g, 1.0);
        assert!(matches!(flat_poisson_solve(&rho), Err(Error::NotSolvable { .. })));
        let zero = ScalarField::constant(&g, 0.0);
        assert_eq!(flat_poisson_solve(&zero).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn flat_laplacian_eigenvalue_per_mode() {
        let spec = GridSpec::new([8, 8, 4, 4], [2.0, 3.0, 1.0, 5.0]).unwrap();
        let g = Grid::new(spec).unwrap();
        let u = g.sample(|x| (2.0 * PI * 2.0 * x[0] / 2.0).cos() * (2.0 * PI * x[1] / 3.0).sin());
        let lam = (2.0 * PI * 2.0 / 2.0).powi(2) + (2.0 * PI / 3.0).powi(2);
        let f = ScalarField::new(g.clone(), u.clone()).unwrap();
        let lu = flat_laplacian(&f);
        for (a, b) in lu.values().iter().zip(&u) {
            assert!((a - lam * b).abs() < 1e-10);
        }
    }

    #[test]
    fn integrate_unit_density() {
        let g = Grid::new(GridSpec::cube(4).unwrap()).unwrap();
        let mu = FourForm::new(g.clone(), vec![1.0; g.len()]).unwrap();
        assert!((integrate(&mu) - (2.0 * PI).powi(4)).abs() < 1e-9);
    }
}
