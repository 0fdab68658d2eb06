//! Pointwise algebra of an almost Kähler structure `(omega, J, g)`.
//!
//! Conventions:
//! - `J` acts on tangent vectors as the matrix `J[(a, b)] = J^a_b`, and the
//!   standard structure has `J d_0 = d_1`, `J d_2 = d_3`.
//! - `g(X, Y) = omega(X, J Y)`, i.e. `g = Omega * J` with `Omega` the
//!   antisymmetric coefficient matrix of `omega`.
//! - On 1-forms `(J alpha)(X) = -alpha(J X)`, so `J dx^0 = dx^1`.
//! - `*_g` is defined by `alpha ^ *beta = <alpha, beta>_g vol_g` with the
//!   orientation `dx^0 ^ dx^1 ^ dx^2 ^ dx^3`, and `|dx^0 ^ dx^1|^2 = 1` for the
//!   flat metric, so `|omega|_g^2 = 2`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calculus::exterior_d;
use crate::error::{Error, Result};
use crate::field::{FourForm, ScalarField, TwoForm, PAIRS};
use crate::grid::Grid;

/// Tolerance for `J^2 = -1`, compatibility and closedness, relative to the
/// size of the data.
pub const STRUCTURE_TOL: f64 = 1e-10;
/// Tolerance on `|P_J^- alpha|` for a form treated as J-invariant.
pub const INVARIANCE_TOL: f64 = 1e-8;
/// Relative tolerance for the pairing of generalized eigenvalues.
pub const PAIRING_TOL: f64 = 1e-8;

/// Sign and complementary pair of the Hodge star on the 2-form basis:
/// `(*alpha)_{pairs[k]} = sign * sqrt(det g) * alpha^{pairs[comp]}`.
const STAR: [(usize, f64); 6] = [(5, 1.0), (4, -1.0), (3, 1.0), (2, 1.0), (1, -1.0), (0, 1.0)];

/// `+` or `-` selector for the projections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Antisymmetric matrix of a 2-form's basis coefficients.
pub fn form_matrix(c: &[f64; 6]) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for (k, &(a, b)) in PAIRS.iter().enumerate() {
        m[(a, b)] = c[k];
        m[(b, a)] = -c[k];
    }
    m
}

/// Basis coefficients of (the antisymmetric part of) a matrix.
pub fn matrix_form(m: &Matrix4<f64>) -> [f64; 6] {
    std::array::from_fn(|k| {
        let (a, b) = PAIRS[k];
        0.5 * (m[(a, b)] - m[(b, a)])
    })
}

/// Coefficient of `dx^0123` in `alpha ^ beta`.
pub fn wedge_density(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a[0] * b[5] - a[1] * b[4] + a[2] * b[3] + a[3] * b[2] - a[4] * b[1] + a[5] * b[0]
}

/// The pointwise Pfaffian `omega^2 / (2 dx^0123)`.
pub fn pfaffian(a: &[f64; 6]) -> f64 {
    0.5 * wedge_density(a, a)
}

/// Almost complex structure: one 4x4 matrix per grid point.
#[derive(Clone, Debug)]
pub struct AcStructure {
    grid: Arc<Grid>,
    mats: Vec<Matrix4<f64>>,
}

fn standard_j() -> Matrix4<f64> {
    let mut j = Matrix4::zeros();
    j[(1, 0)] = 1.0;
    j[(0, 1)] = -1.0;
    j[(3, 2)] = 1.0;
    j[(2, 3)] = -1.0;
    j
}

impl AcStructure {
    /// Wraps per-point matrices. `J^2 = -1` is checked by [`build_triple`].
    pub fn new(grid: Arc<Grid>, mats: Vec<Matrix4<f64>>) -> Result<Self> {
        if mats.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if mats.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidField("AcStructure"));
        }
        Ok(AcStructure { grid, mats })
    }

    /// The constant structure with `J d_0 = d_1`, `J d_2 = d_3`.
    pub fn standard(grid: &Arc<Grid>) -> Self {
        AcStructure {
            grid: grid.clone(),
            mats: vec![standard_j(); grid.len()],
        }
    }

    /// The `omega`-compatible structure determined by an auxiliary metric
    /// `h`: the polar part of the `h`-skew endomorphism `A` with
    /// `omega(X, Y) = h(A X, Y)`.
    pub fn from_metric(
        omega: &TwoForm,
        h: impl Fn(usize) -> Matrix4<f64> + Sync,
    ) -> Result<Self> {
        let grid = omega.grid().clone();
        let mats: Result<Vec<_>> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let hm = h(i);
                let om = form_matrix(&omega.at(i));
                let chol = hm.cholesky().ok_or(Error::NotPositive {
                    min_eigenvalue: hm.symmetric_eigenvalues().min(),
                })?;
                let l = chol.l();
                let l_inv = l.try_inverse().expect("cholesky factor is invertible");
                let a = -(l_inv.transpose() * l_inv) * om;
                let b = l.transpose() * a * l_inv.transpose();
                let btb = b.transpose() * b;
                let eig = SymmetricEigen::new(btb);
                if eig.eigenvalues.min() <= 0.0 {
                    return Err(Error::NotCompatible("degenerate 2-form".into()));
                }
                let inv_sqrt = eig.eigenvectors
                    * Matrix4::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
                    * eig.eigenvectors.transpose();
                let jb = b * inv_sqrt;
                Ok(l_inv.transpose() * jb * l.transpose())
            })
            .collect();
        Ok(AcStructure { grid, mats: mats? })
    }

    /// Smooth non-integrable perturbation of the standard structure,
    /// compatible with `omega` by construction. The auxiliary metric is
    /// `I + S(x)` with `|S|_F <= amplitude`, built from random low Fourier
    /// modes drawn from `seed`.
    pub fn perturbed(omega: &TwoForm, seed: u64, amplitude: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&amplitude) {
            return Err(Error::NotCompatible(format!(
                "perturbation amplitude {amplitude} outside [0, 1)"
            )));
        }
        let grid = omega.grid().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // (coefficient, wave vector, phase) per upper-triangular entry
        let mut modes = Vec::new();
        for a in 0..4 {
            for b in a..4 {
                let c: f64 = rng.gen_range(-1.0..1.0);
                let k: [f64; 4] = loop {
                    let k = std::array::from_fn(|_| rng.gen_range(-1i32..=1) as f64);
                    if k.iter().any(|&v| v != 0.0) {
                        break k;
                    }
                };
                let phase: f64 = rng.gen_range(0.0..2.0 * PI);
                modes.push((a, b, c, k, phase));
            }
        }
        let spec = *grid.spec();
        let g2 = grid.clone();
        Self::from_metric(omega, move |i| {
            let x = g2.point(i);
            let mut h = Matrix4::identity();
            for &(a, b, c, k, phase) in &modes {
                let arg: f64 = (0..4).map(|d| k[d] * 2.0 * PI * x[d] / spec.periods[d]).sum();
                let v = 0.25 * amplitude * c * (arg + phase).cos();
                h[(a, b)] += v;
                if a != b {
                    h[(b, a)] += v;
                }
            }
            h
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn at(&self, idx: usize) -> &Matrix4<f64> {
        &self.mats[idx]
    }

    pub fn matrices(&self) -> &[Matrix4<f64>] {
        &self.mats
    }

    /// `max |J^2 + 1|`.
    pub fn square_defect(&self) -> f64 {
        self.mats
            .par_iter()
            .map(|j| (j * j + Matrix4::identity()).abs().max())
            .reduce(|| 0.0, f64::max)
    }
}

/// A validated almost Kähler structure with its cached metric data.
#[derive(Clone, Debug)]
pub struct CompatibleTriple {
    omega: TwoForm,
    j: AcStructure,
    g: Vec<Matrix4<f64>>,
    g_inv: Vec<Matrix4<f64>>,
    /// Inverse Cholesky factor of `g` (for the generalized eigenproblems).
    l_inv: Vec<Matrix4<f64>>,
    sqrt_det: Vec<f64>,
}

/// Computes `g = omega(., J .)`, validates every invariant of an almost
/// Kähler structure and caches the metric.
pub fn build_triple(omega: TwoForm, j: AcStructure) -> Result<CompatibleTriple> {
    omega.same_grid(j.grid())?;
    omega.check_finite()?;
    let scale = omega.max_abs().max(1.0);

    let square = j.square_defect();
    if square > STRUCTURE_TOL {
        return Err(Error::NotCompatible(format!("|J^2 + 1| = {square:e}")));
    }
    let closed = exterior_d(&omega)?.max_abs();
    if closed > STRUCTURE_TOL * scale {
        return Err(Error::NotClosed { residual: closed });
    }
    build_almost_hermitian(omega, j)
}

/// [`build_triple`] without the closedness check: `omega` is only required
/// to be a positive J-invariant 2-form.
pub(crate) fn build_almost_hermitian(omega: TwoForm, j: AcStructure) -> Result<CompatibleTriple> {
    omega.same_grid(j.grid())?;
    omega.check_finite()?;
    let scale = omega.max_abs().max(1.0);
    let square = j.square_defect();
    if square > STRUCTURE_TOL {
        return Err(Error::NotCompatible(format!("|J^2 + 1| = {square:e}")));
    }

    let n = omega.grid().len();
    let data: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let om = form_matrix(&omega.at(i));
            let jm = j.at(i);
            let invariance = (jm.transpose() * om * jm - om).abs().max();
            let g = om * jm;
            let asym = (g - g.transpose()).abs().max();
            let g = 0.5 * (g + g.transpose());
            (invariance.max(asym), pfaffian(&omega.at(i)), g)
        })
        .collect();

    let mut g = Vec::with_capacity(n);
    let mut min_eig = f64::INFINITY;
    for (defect, pf, gi) in data {
        if defect > STRUCTURE_TOL * scale {
            return Err(Error::NotCompatible(format!("|J^T omega J - omega| = {defect:e}")));
        }
        if pf <= 0.0 {
            return Err(Error::NotCompatible(
                "omega^2 is not positively oriented".into(),
            ));
        }
        min_eig = min_eig.min(gi.symmetric_eigenvalues().min());
        g.push(gi);
    }
    if min_eig <= 0.0 {
        return Err(Error::NotPositive { min_eigenvalue: min_eig });
    }

    let derived: Vec<_> = g
        .par_iter()
        .map(|gi| {
            let chol = gi.cholesky().expect("positive definite");
            let l_inv = chol.l().try_inverse().expect("invertible factor");
            let g_inv = l_inv.transpose() * l_inv;
            (g_inv, l_inv, gi.determinant().sqrt())
        })
        .collect();
    let mut g_inv = Vec::with_capacity(n);
    let mut l_inv = Vec::with_capacity(n);
    let mut sqrt_det = Vec::with_capacity(n);
    for (a, b, c) in derived {
        g_inv.push(a);
        l_inv.push(b);
        sqrt_det.push(c);
    }
    Ok(CompatibleTriple {
        omega,
        j,
        g,
        g_inv,
        l_inv,
        sqrt_det,
    })
}

impl CompatibleTriple {
    /// Flat Kähler torus: standard `omega` and `J`, Euclidean metric.
    pub fn standard(grid: &Arc<Grid>) -> Self {
        build_triple(TwoForm::standard_symplectic(grid), AcStructure::standard(grid))
            .expect("standard structure is almost Kähler")
    }

    /// Standard `omega` with a seeded non-integrable compatible `J`.
    pub fn perturbed(grid: &Arc<Grid>, seed: u64, amplitude: f64) -> Result<Self> {
        let omega = TwoForm::standard_symplectic(grid);
        let j = AcStructure::perturbed(&omega, seed, amplitude)?;
        build_triple(omega, j)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.omega.grid()
    }

    pub fn omega(&self) -> &TwoForm {
        &self.omega
    }

    pub fn j(&self) -> &AcStructure {
        &self.j
    }

    pub fn metric(&self, idx: usize) -> &Matrix4<f64> {
        &self.g[idx]
    }

    pub fn inv_metric(&self, idx: usize) -> &Matrix4<f64> {
        &self.g_inv[idx]
    }

    pub fn sqrt_det(&self, idx: usize) -> f64 {
        self.sqrt_det[idx]
    }

    pub fn sqrt_dets(&self) -> &[f64] {
        &self.sqrt_det
    }

    pub(crate) fn chol_inv(&self, idx: usize) -> &Matrix4<f64> {
        &self.l_inv[idx]
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if **self.grid() == *grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Raises both indices of a 2-form at a point.
    pub fn raise_two(&self, idx: usize, c: &[f64; 6]) -> [f64; 6] {
        let gi = &self.g_inv[idx];
        let up = gi * form_matrix(c) * gi;
        std::array::from_fn(|k| {
            let (a, b) = PAIRS[k];
            up[(a, b)]
        })
    }

    /// Pointwise `<alpha, beta>_g` on 2-forms.
    pub fn inner_two(&self, idx: usize, a: &[f64; 6], b: &[f64; 6]) -> f64 {
        let up = self.raise_two(idx, b);
        (0..6).map(|k| a[k] * up[k]).sum()
    }

    /// Pointwise `<alpha, beta>_g` on 1-forms.
    pub fn inner_one(&self, idx: usize, a: &[f64; 4], b: &[f64; 4]) -> f64 {
        let va = Vector4::from_column_slice(a);
        let vb = Vector4::from_column_slice(b);
        va.dot(&(self.g_inv[idx] * vb))
    }

    /// Pointwise Hodge star on 2-forms.
    pub fn star_two(&self, idx: usize, c: &[f64; 6]) -> [f64; 6] {
        let up = self.raise_two(idx, c);
        let s = self.sqrt_det[idx];
        std::array::from_fn(|k| {
            let (comp, sign) = STAR[k];
            sign * s * up[comp]
        })
    }

    /// Pointwise `alpha(J., J.)`.
    pub fn j_two(&self, idx: usize, c: &[f64; 6]) -> [f64; 6] {
        let jm = self.j.at(idx);
        matrix_form(&(jm.transpose() * form_matrix(c) * jm))
    }

    /// Pointwise `(J alpha)(X) = -alpha(J X)` on 1-forms.
    pub fn j_one(&self, idx: usize, a: &[f64; 4]) -> [f64; 4] {
        let v = -(self.j.at(idx).transpose() * Vector4::from_column_slice(a));
        [v[0], v[1], v[2], v[3]]
    }

    /// The ω²-weighted mean of a function.
    pub fn weighted_mean(&self, f: &ScalarField) -> f64 {
        let num: f64 = f.values().iter().zip(&self.sqrt_det).map(|(v, w)| v * w).sum();
        let den: f64 = self.sqrt_det.iter().sum();
        num / den
    }
}

/// `alpha |-> alpha(J., J.)`.
pub fn j_involution(alpha: &TwoForm, j: &AcStructure) -> Result<TwoForm> {
    alpha.same_grid(j.grid())?;
    Ok(TwoForm::from_fn(alpha.grid(), |i| {
        let jm = j.at(i);
        matrix_form(&(jm.transpose() * form_matrix(&alpha.at(i)) * jm))
    }))
}

/// `P_J^{+-} alpha = (alpha +- J alpha) / 2`.
pub fn project_invariant(alpha: &TwoForm, j: &AcStructure, sign: Sign) -> Result<TwoForm> {
    let ja = j_involution(alpha, j)?;
    Ok(alpha.axpy(sign.value(), &ja).scale(0.5))
}

/// Pointwise Hodge star of the triple's metric.
pub fn hodge_star_2(alpha: &TwoForm, triple: &CompatibleTriple) -> Result<TwoForm> {
    triple.check_grid(alpha.grid())?;
    Ok(TwoForm::from_fn(alpha.grid(), |i| triple.star_two(i, &alpha.at(i))))
}

/// `P_g^{+-} alpha = (alpha +- *alpha) / 2`.
pub fn project_selfdual(alpha: &TwoForm, triple: &CompatibleTriple, sign: Sign) -> Result<TwoForm> {
    let star = hodge_star_2(alpha, triple)?;
    Ok(alpha.axpy(sign.value(), &star).scale(0.5))
}

/// Pointwise `alpha ^ beta` for 2-forms.
pub fn wedge_22(alpha: &TwoForm, beta: &TwoForm) -> Result<FourForm> {
    beta.same_grid(alpha.grid())?;
    let density = (0..alpha.grid().len())
        .into_par_iter()
        .map(|i| wedge_density(&alpha.at(i), &beta.at(i)))
        .collect();
    FourForm::new(alpha.grid().clone(), density)
}

/// [`wedge_22`] with every coefficient product zero-padded against aliasing.
pub fn wedge_22_dealiased(alpha: &TwoForm, beta: &TwoForm) -> Result<FourForm> {
    beta.same_grid(alpha.grid())?;
    let grid = alpha.grid();
    // signs of wedge_density: a0 b5 - a1 b4 + a2 b3 + a3 b2 - a4 b1 + a5 b0
    let terms = [(0, 5, 1.0), (1, 4, -1.0), (2, 3, 1.0), (3, 2, 1.0), (4, 1, -1.0), (5, 0, 1.0)];
    let mut density = vec![0.0; grid.len()];
    for (a, b, s) in terms {
        let p = grid.dealiased_product(alpha.component(a), beta.component(b));
        for (d, v) in density.iter_mut().zip(p) {
            *d += s * v;
        }
    }
    FourForm::new(grid.clone(), density)
}

/// Pointwise eigenvalue pair `a1 <= a2`.
#[derive(Clone, Debug)]
pub struct EigenPairField {
    pub a1: ScalarField,
    pub a2: ScalarField,
}

/// Per-point simultaneous diagonalization of `omega1` against the triple's
/// `omega`: the eigenvalues of `g1 = omega1(., J.)` relative to `g`.
pub fn darboux_eigenvalues(omega1: &TwoForm, triple: &CompatibleTriple) -> Result<EigenPairField> {
    triple.check_grid(omega1.grid())?;
    let scale = omega1.max_abs().max(1.0);
    let anti = project_invariant(omega1, triple.j(), Sign::Minus)?.max_abs();
    if anti > INVARIANCE_TOL * scale {
        return Err(Error::NotInvariant { residual: anti });
    }
    let pairs: Result<Vec<(f64, f64)>> = (0..omega1.grid().len())
        .into_par_iter()
        .map(|i| point_eigenpair(triple, i, &omega1.at(i)))
        .collect();
    let pairs = pairs?;
    let grid = omega1.grid();
    Ok(EigenPairField {
        a1: ScalarField::new(grid.clone(), pairs.iter().map(|p| p.0).collect())?,
        a2: ScalarField::new(grid.clone(), pairs.iter().map(|p| p.1).collect())?,
    })
}

pub(crate) fn point_eigenpair(triple: &CompatibleTriple, i: usize, w1: &[f64; 6]) -> Result<(f64, f64)> {
    let g1 = form_matrix(w1) * triple.j().at(i);
    let g1 = 0.5 * (g1 + g1.transpose());
    let l_inv = triple.chol_inv(i);
    let m = l_inv * g1 * l_inv.transpose();
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    let size = ev.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mismatch = (ev[1] - ev[0]).abs().max((ev[3] - ev[2]).abs()) / size;
    if mismatch > PAIRING_TOL {
        return Err(Error::PairingBroken { mismatch });
    }
    Ok((0.5 * (ev[0] + ev[1]), 0.5 * (ev[2] + ev[3])))
}

/// Outcome of [`positivity_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct PositivityReport {
    pub min_a1: f64,
    pub anti_invariant: f64,
    pub ok: bool,
}

/// `omega_tilde` is positive iff it is J-invariant and `min a1 > 0`.
pub fn positivity_check(omega_tilde: &TwoForm, triple: &CompatibleTriple) -> Result<PositivityReport> {
    triple.check_grid(omega_tilde.grid())?;
    let scale = omega_tilde.max_abs().max(1.0);
    let anti = project_invariant(omega_tilde, triple.j(), Sign::Minus)?.max_abs();
    if anti > INVARIANCE_TOL * scale {
        return Ok(PositivityReport {
            min_a1: f64::NAN,
            anti_invariant: anti,
            ok: false,
        });
    }
    let mins: Vec<Option<f64>> = (0..omega_tilde.grid().len())
        .into_par_iter()
        .map(|i| point_eigenpair(triple, i, &omega_tilde.at(i)).ok().map(|p| p.0))
        .collect();
    if mins.iter().any(|m| m.is_none()) {
        return Ok(PositivityReport {
            min_a1: f64::NAN,
            anti_invariant: anti,
            ok: false,
        });
    }
    let min_a1 = mins.into_iter().flatten().fold(f64::INFINITY, f64::min);
    Ok(PositivityReport {
        min_a1,
        anti_invariant: anti,
        ok: min_a1 > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::new(GridSpec::cube(n).unwrap()).unwrap()
    }

    #[test]
    fn standard_triple_is_flat() {
        let t = CompatibleTriple::standard(&grid(4));
        for i in [0, 17, 255] {
            assert!((t.metric(i) - Matrix4::identity()).abs().max() < 1e-15);
            assert!((t.sqrt_det(i) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn one_form_j_sends_dx0_to_dx1() {
        let t = CompatibleTriple::standard(&grid(4));
        assert_eq!(t.j_one(0, &[1.0, 0.0, 0.0, 0.0]), [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.j_one(0, &[0.0, 0.0, 1.0, 0.0]), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn standard_j_flips_the_anti_invariant_pair() {
        let t = CompatibleTriple::standard(&grid(4));
        // dx01 - dx23 is J-invariant (anti-self-dual); dx02 - dx13 is anti-invariant.
        let asd = [1.0, 0.0, 0.0, 0.0, 0.0, -1.0];
        assert_eq!(t.j_two(0, &asd), asd);
        let b1 = [0.0, 1.0, 0.0, 0.0, -1.0, 0.0];
        let b2 = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        assert_eq!(t.j_two(0, &b1), b1.map(|v| -v));
        assert_eq!(t.j_two(0, &b2), b2.map(|v| -v));
    }

    #[test]
    fn star_of_basis_forms() {
        let t = CompatibleTriple::standard(&grid(4));
        let e = |k: usize| -> [f64; 6] { std::array::from_fn(|i| if i == k { 1.0 } else { 0.0 }) };
        // *dx01 = dx23, *dx02 = -dx13, *dx03 = dx12
        assert_eq!(t.star_two(0, &e(0)), e(5));
        assert_eq!(t.star_two(0, &e(1)), e(4).map(|v| -v));
        assert_eq!(t.star_two(0, &e(2)), e(3));
        for k in 0..6 {
            // alpha ^ *alpha = |alpha|^2 vol
            let s = t.star_two(0, &e(k));
            assert_eq!(wedge_density(&e(k), &s), 1.0);
        }
    }

    #[test]
    fn rejects_bad_structures() {
        let g = grid(4);
        let omega = TwoForm::standard_symplectic(&g);
        let mut bad = AcStructure::standard(&g).matrices().to_vec();
        for m in bad.iter_mut() {
            m[(0, 1)] = -2.0;
        }
        let j = AcStructure::new(g.clone(), bad).unwrap();
        assert!(matches!(build_triple(omega.clone(), j), Err(Error::NotCompatible(_))));

        let not_closed = TwoForm::from_fn(&g, |i| {
            let x = g.point(i);
            [1.0 + 0.3 * x[2].sin(), 0.0, 0.0, 0.0, 0.0, 1.0]
        });
        assert!(matches!(
            build_triple(not_closed, AcStructure::standard(&g)),
            Err(Error::NotClosed { .. })
        ));

        // -omega with J: g = -identity
        let neg = omega.scale(-1.0);
        let j_neg = AcStructure::new(g.clone(), AcStructure::standard(&g).matrices().iter().map(|m| -m).collect()).unwrap();
        assert!(build_triple(neg, AcStructure::standard(&g)).is_err());
        assert!(build_triple(omega, j_neg).is_err());
    }

    #[test]
    fn varying_closed_omega_with_retracted_j() {
        let g = grid(8);
        let omega = TwoForm::from_fn(&g, |i| {
            let x = g.point(i);
            [1.0 + 0.3 * x[0].sin(), 0.0, 0.0, 0.0, 0.0, 1.0]
        });
        let j = AcStructure::from_metric(&omega, |_| Matrix4::identity()).unwrap();
        let t = build_triple(omega, j).unwrap();
        for i in 0..g.len() {
            let gm = t.metric(i);
            assert!(gm.symmetric_eigenvalues().min() > 0.0);
            assert!((gm - gm.transpose()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn perturbed_structure_is_compatible() {
        let g = grid(8);
        let t = CompatibleTriple::perturbed(&g, 7, 0.3).unwrap();
        assert!(t.j().square_defect() < 1e-12);
        let omega = t.omega().clone();
        let jo = j_involution(&omega, t.j()).unwrap();
        assert!(jo.max_diff(&omega) < 1e-12);
        // actually varies
        let spread = (0..g.len()).map(|i| (t.metric(i) - t.metric(0)).abs().max()).fold(0.0, f64::max);
        assert!(spread > 1e-2);
        assert!(CompatibleTriple::perturbed(&g, 7, 1.0).is_err());
    }

    #[test]
    fn darboux_of_diagonal_form() {
        let g = grid(4);
        let t = CompatibleTriple::standard(&g);
        let w1 = TwoForm::constant(&g, [2.0, 0.0, 0.0, 0.0, 0.0, 3.0]);
        let e = darboux_eigenvalues(&w1, &t).unwrap();
        assert!((e.a1.min() - 2.0).abs() < 1e-14 && (e.a1.max() - 2.0).abs() < 1e-14);
        assert!((e.a2.min() - 3.0).abs() < 1e-14);
        let swapped = TwoForm::constant(&g, [3.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        let e = darboux_eigenvalues(&swapped, &t).unwrap();
        assert!((e.a1.max() - 2.0).abs() < 1e-14);
        let anti = TwoForm::constant(&g, [1.0, 0.5, 0.0, 0.0, -0.5, 1.0]);
        assert!(matches!(darboux_eigenvalues(&anti, &t), Err(Error::NotInvariant { .. })));
    }

    #[test]
    fn positivity_of_multiples() {
        let g = grid(4);
        let t = CompatibleTriple::standard(&g);
        let r = positivity_check(t.omega(), &t).unwrap();
        assert!(r.ok && (r.min_a1 - 1.0).abs() < 1e-14);
        let r = positivity_check(&t.omega().scale(-1.0), &t).unwrap();
        assert!(!r.ok);
    }

    #[test]
    fn wedge_basics() {
        let g = grid(4);
        let t = CompatibleTriple::standard(&g);
        let w = wedge_22(t.omega(), t.omega()).unwrap();
        assert!(w.density().iter().all(|&v| v == 2.0));
        let a = TwoForm::constant(&g, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let b = TwoForm::constant(&g, [0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(wedge_22(&a, &b).unwrap().density().iter().all(|&v| v == 0.0));
    }
}
