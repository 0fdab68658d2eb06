//! The operator `D_J^+`: Lejmi's elliptic system for the anti-invariant
//! correction `sigma(phi)`, the 1-form `W_J(phi) = J d phi + d* sigma` and
//! `D_J^+(phi) = d W_J(phi)`.
//!
//! Anti-invariant 2-forms are written `c1 beta1 + c2 beta2` in a global
//! orthonormal frame. With `W = 2 sqrt g` the coefficient system
//! `A c = W P(c)` is symmetric and positive semi-definite for the plain
//! Euclidean product on grid values, because `d` and the divergence form of
//! `d*` are exact discrete adjoints.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::algebra::CompatibleTriple;
use crate::calculus::{codifferential_of_flux, exterior_d, flat_inverse};
use crate::error::{Error, Result};
use crate::field::{OneForm, ScalarField, TwoForm};
use crate::grid::Grid;
use crate::krylov::{dot, norm, pcg};

/// Relative tolerance of the `sigma` solve.
pub const LEJMI_TOL: f64 = 1e-12;
/// Iteration cap of the `sigma` solve.
pub const LEJMI_MAX_ITER: usize = 10_000;
/// Smallest normalized Gram determinant accepted for the frame.
pub const FRAME_GRAM_TOL: f64 = 1e-8;

const CANDIDATES: [[f64; 6]; 2] = [
    // dx02 - dx13
    [0.0, 1.0, 0.0, 0.0, -1.0, 0.0],
    // dx03 + dx12
    [0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
];

/// Pointwise orthonormal frame of the anti-invariant 2-forms, normalized so
/// that `|beta_i|_g^2 = 2`.
#[derive(Clone, Debug)]
pub struct AntiInvariantFrame {
    pub beta1: TwoForm,
    pub beta2: TwoForm,
}

impl AntiInvariantFrame {
    pub fn beta(&self, i: usize) -> &TwoForm {
        if i == 0 {
            &self.beta1
        } else {
            &self.beta2
        }
    }
}

/// An anti-invariant 2-form stored by its frame coefficients.
#[derive(Clone, Debug)]
pub struct AntiInvariantField {
    pub frame: Arc<AntiInvariantFrame>,
    pub c1: ScalarField,
    pub c2: ScalarField,
}

impl AntiInvariantField {
    /// `c1 beta1 + c2 beta2`.
    pub fn reconstruct(&self) -> TwoForm {
        let (b1, b2) = (&self.frame.beta1, &self.frame.beta2);
        let (c1, c2) = (self.c1.values(), self.c2.values());
        TwoForm::from_fn(b1.grid(), |i| {
            let (x, y) = (b1.at(i), b2.at(i));
            std::array::from_fn(|k| c1[i] * x[k] + c2[i] * y[k])
        })
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = self.c1.values().to_vec();
        v.extend_from_slice(self.c2.values());
        v
    }
}

/// Convergence record of the `sigma` solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LejmiSolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

/// Low end of the spectrum of `P` and the resulting kernel count.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicSpectrum {
    pub dimension: usize,
    /// Lowest eigenvalues of `P`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues below this are counted as kernel.
    pub threshold: f64,
    /// First eigenvalue above the threshold divided by the threshold.
    pub gap_ratio: f64,
}

/// Builds the frame by projecting `dx02 - dx13` and `dx03 + dx12` onto the
/// anti-invariant forms and orthonormalizing pointwise.
pub fn anti_invariant_frame(triple: &CompatibleTriple) -> Result<AntiInvariantFrame> {
    let grid = triple.grid();
    let pts: Result<Vec<([f64; 6], [f64; 6])>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p: [[f64; 6]; 2] = CANDIDATES.map(|e| {
                let je = triple.j_two(i, &e);
                std::array::from_fn(|k| 0.5 * (e[k] - je[k]))
            });
            let g11 = triple.inner_two(i, &p[0], &p[0]);
            let g12 = triple.inner_two(i, &p[0], &p[1]);
            let g22 = triple.inner_two(i, &p[1], &p[1]);
            let gram = if g11 > 0.0 && g22 > 0.0 {
                (g11 * g22 - g12 * g12) / (g11 * g22)
            } else {
                0.0
            };
            if !(gram >= FRAME_GRAM_TOL) {
                return Err(Error::FrameDegenerate { gram });
            }
            let s1 = (2.0 / g11).sqrt();
            let b1: [f64; 6] = p[0].map(|v| v * s1);
            let proj = g12 * s1 / 2.0;
            let r: [f64; 6] = std::array::from_fn(|k| p[1][k] - proj * b1[k]);
            let s2 = (2.0 / triple.inner_two(i, &r, &r)).sqrt();
            Ok((b1, r.map(|v| v * s2)))
        })
        .collect();
    let pts = pts?;
    Ok(AntiInvariantFrame {
        beta1: TwoForm::from_fn(grid, |i| pts[i].0),
        beta2: TwoForm::from_fn(grid, |i| pts[i].1),
    })
}

/// Lejmi's operator bound to one almost Kähler structure. Construction
/// caches the frame and the raised frame densities; the kernel basis is
/// computed on first use.
pub struct DjOperator<'a> {
    triple: &'a CompatibleTriple,
    frame: Arc<AntiInvariantFrame>,
    /// `sqrt g beta_i^{ab}`.
    raised: [TwoForm; 2],
    kernel: OnceLock<Result<Vec<Vec<f64>>>>,
    constant: bool,
    tol: f64,
}

impl<'a> DjOperator<'a> {
    pub fn new(triple: &'a CompatibleTriple) -> Result<Self> {
        let frame = anti_invariant_frame(triple)?;
        let raise = |b: &TwoForm| {
            TwoForm::from_fn(b.grid(), |i| {
                let s = triple.sqrt_det(i);
                triple.raise_two(i, &b.at(i)).map(|v| s * v)
            })
        };
        let raised = [raise(&frame.beta1), raise(&frame.beta2)];
        let (j0, w0) = (triple.j().at(0), triple.omega().at(0));
        let constant = (1..triple.grid().len()).all(|i| triple.j().at(i) == j0 && triple.omega().at(i) == w0);
        Ok(DjOperator {
            constant,
            triple,
            frame: Arc::new(frame),
            raised,
            kernel: OnceLock::new(),
            tol: LEJMI_TOL,
        })
    }

    /// Overrides the relative tolerance of the `sigma` solve.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn triple(&self) -> &CompatibleTriple {
        self.triple
    }

    /// True when `J` and `omega` are constant on the grid. Then `J d phi`
    /// is already closed under `P_J^-` and no Lejmi solve is needed.
    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// `d J d phi` without the Lejmi correction; equal to `D_J^+` when
    /// [`is_constant`](Self::is_constant) holds.
    pub(crate) fn d_j_d(&self, phi: &[f64]) -> TwoForm {
        let phi = ScalarField::new(self.grid().clone(), phi.to_vec()).expect("length");
        let dphi = exterior_d(&phi).expect("finite potential");
        let t = self.triple;
        exterior_d(&OneForm::from_fn(self.grid(), |i| t.j_one(i, &dphi.at(i)))).expect("finite")
    }

    pub fn frame(&self) -> &Arc<AntiInvariantFrame> {
        &self.frame
    }

    fn grid(&self) -> &Arc<Grid> {
        self.triple.grid()
    }

    fn field(&self, c: &[f64]) -> AntiInvariantField {
        let n = self.grid().len();
        AntiInvariantField {
            frame: self.frame.clone(),
            c1: ScalarField::new(self.grid().clone(), c[..n].to_vec()).expect("length"),
            c2: ScalarField::new(self.grid().clone(), c[n..].to_vec()).expect("length"),
        }
    }

    /// `d* sigma` for the coefficient vector `c = (c1, c2)`.
    fn codiff(&self, c: &[f64]) -> OneForm {
        let n = self.grid().len();
        let (r1, r2) = (&self.raised[0], &self.raised[1]);
        let flux = TwoForm::from_fn(self.grid(), |i| {
            let (x, y) = (r1.at(i), r2.at(i));
            std::array::from_fn(|k| c[i] * x[k] + c[n + i] * y[k])
        });
        codifferential_of_flux(&flux, self.triple)
    }

    /// `sqrt g <tau, beta_i>_g` for both frame elements, concatenated.
    fn pair_frame(&self, tau: &TwoForm) -> Vec<f64> {
        let n = self.grid().len();
        let mut out = vec![0.0; 2 * n];
        let (lo, hi) = out.split_at_mut(n);
        for (dst, r) in [lo, hi].into_iter().zip(&self.raised) {
            dst.par_iter_mut().enumerate().for_each(|(i, d)| {
                *d = (0..6).map(|k| tau.component(k)[i] * r.component(k)[i]).sum();
            });
        }
        out
    }

    /// The symmetric system `A c = 2 sqrt g P(c)`.
    fn apply_weighted(&self, c: &[f64]) -> Vec<f64> {
        let dd = exterior_d(&self.codiff(c)).expect("finite coefficients");
        self.pair_frame(&dd)
    }

    fn weight(&self) -> impl Fn(usize) -> f64 + '_ {
        let n = self.grid().len();
        move |k| 2.0 * self.triple.sqrt_det(k % n)
    }

    /// Per-channel inverse of the flat-structure system.
    fn precondition(&self, r: &[f64], null_value: f64) -> Vec<f64> {
        let n = self.grid().len();
        let mut out = Vec::with_capacity(2 * n);
        for ch in 0..2 {
            let s = ScalarField::new(self.grid().clone(), r[ch * n..(ch + 1) * n].to_vec())
                .expect("length");
            out.extend_from_slice(flat_inverse(&s, null_value).values());
        }
        out
    }

    fn null_multiplier(&self) -> f64 {
        1.0 / self.grid().laplace_gap()
    }

    /// `P(psi) = P_J^-(d d* psi)` in the frame.
    pub fn lejmi_apply(&self, psi: &AntiInvariantField) -> Result<AntiInvariantField> {
        psi.c1.same_grid(self.grid())?;
        psi.c2.same_grid(self.grid())?;
        psi.c1.check_finite()?;
        psi.c2.check_finite()?;
        let w = self.weight();
        let mut v = self.apply_weighted(&psi.flat());
        v.iter_mut().enumerate().for_each(|(k, x)| *x /= w(k));
        Ok(self.field(&v))
    }

    /// Orthonormal (in the weighted product) basis of the smooth kernel,
    /// seeded by the constant coefficient fields.
    fn kernel(&self) -> Result<&Vec<Vec<f64>>> {
        self.kernel
            .get_or_init(|| self.compute_kernel())
            .as_ref()
            .map_err(|e| e.clone())
    }

    fn compute_kernel(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.grid().len();
        let w = self.weight();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for ch in 0..2 {
            let mut v0 = vec![0.0; 2 * n];
            v0[ch * n..(ch + 1) * n].iter_mut().for_each(|x| *x = 1.0);
            let av0 = self.apply_weighted(&v0);
            let scale = self.raised.iter().map(|r| r.max_abs()).fold(0.0, f64::max) * (2 * n) as f64;
            let mut kappa = v0.clone();
            if norm(&av0) > LEJMI_TOL * scale {
                let (x, out) = pcg(
                    |c| self.apply_weighted(c),
                    |r| self.precondition(r, self.null_multiplier()),
                    &av0,
                    LEJMI_TOL * norm(&av0),
                    LEJMI_MAX_ITER,
                );
                if !out.converged {
                    return Err(Error::NoConvergence {
                        iterations: out.iterations,
                        residual: out.residual,
                    });
                }
                kappa.iter_mut().zip(&x).for_each(|(k, xi)| *k -= xi);
            }
            for b in &basis {
                let p = weighted_dot(&kappa, b, &w);
                kappa.iter_mut().zip(b).for_each(|(k, bi)| *k -= p * bi);
            }
            let nk = weighted_dot(&kappa, &kappa, &w).sqrt();
            let seed_norm = weighted_dot(&v0, &v0, &w).sqrt();
            if nk > 1e-6 * seed_norm {
                kappa.iter_mut().for_each(|k| *k /= nk);
                basis.push(kappa);
            }
        }
        Ok(basis)
    }

    /// Projects `c` onto the weighted orthogonal complement of the kernel.
    fn project_off_kernel(&self, c: &mut [f64]) -> Result<()> {
        let w = self.weight();
        for b in self.kernel()? {
            let p = weighted_dot(c, b, &w);
            c.iter_mut().zip(b).for_each(|(x, bi)| *x -= p * bi);
        }
        Ok(())
    }

    /// Orthogonal projection of an arbitrary field onto the kernel of `P`.
    pub fn kernel_component(&self, psi: &AntiInvariantField) -> Result<AntiInvariantField> {
        let w = self.weight();
        let c = psi.flat();
        let mut out = vec![0.0; c.len()];
        for b in self.kernel()? {
            let p = weighted_dot(&c, b, &w);
            out.iter_mut().zip(b).for_each(|(x, bi)| *x += p * bi);
        }
        Ok(self.field(&out))
    }

    /// Solves `P(sigma) = rho` for `sigma` orthogonal to the kernel. The
    /// right-hand side must be orthogonal to the kernel.
    pub fn solve(&self, rho: &AntiInvariantField) -> Result<(AntiInvariantField, LejmiSolveReport)> {
        rho.c1.same_grid(self.grid())?;
        let w = self.weight();
        let b: Vec<f64> = rho.flat().iter().enumerate().map(|(k, v)| v * w(k)).collect();
        let scale = norm(&b);
        self.solve_weighted(&b, scale)
    }

    fn solve_weighted(&self, b: &[f64], scale: f64) -> Result<(AntiInvariantField, LejmiSolveReport)> {
        let tol = self.tol * scale;
        if norm(b) <= tol {
            let zero = vec![0.0; b.len()];
            return Ok((
                self.field(&zero),
                LejmiSolveReport { iterations: 0, final_residual: norm(b), converged: true },
            ));
        }
        let (mut x, out) = pcg(
            |c| self.apply_weighted(c),
            |r| self.precondition(r, self.null_multiplier()),
            b,
            tol,
            LEJMI_MAX_ITER,
        );
        log::trace!("lejmi pcg: {out:?}");
        if !out.converged {
            return Err(Error::NoConvergence {
                iterations: out.iterations,
                residual: out.residual,
            });
        }
        self.project_off_kernel(&mut x)?;
        Ok((
            self.field(&x),
            LejmiSolveReport {
                iterations: out.iterations,
                final_residual: out.residual,
                converged: true,
            },
        ))
    }

    /// `sigma(phi)`: the solution of `P_J^- d (J d phi + d* sigma) = 0`
    /// orthogonal to the kernel of `P`.
    pub fn solve_sigma(&self, phi: &ScalarField) -> Result<(AntiInvariantField, LejmiSolveReport)> {
        let jdphi = self.j_d(phi)?;
        self.sigma_for(&jdphi)
    }

    fn sigma_for(&self, jdphi: &OneForm) -> Result<(AntiInvariantField, LejmiSolveReport)> {
        let djd = exterior_d(jdphi)?;
        let b: Vec<f64> = self.pair_frame(&djd).into_iter().map(|v| -v).collect();
        let rmax = self.raised.iter().map(|r| r.max_abs()).fold(0.0, f64::max);
        let scale = norm(&b).max(l2_flat(&djd) * rmax);
        self.solve_weighted(&b, scale)
    }

    fn j_d(&self, phi: &ScalarField) -> Result<OneForm> {
        phi.same_grid(self.grid())?;
        phi.check_finite()?;
        let mean = self.triple.weighted_mean(phi);
        if mean.abs() > 0.0 {
            log::debug!("projecting out mean {mean:e} of the potential");
        }
        let dphi = exterior_d(phi)?;
        let t = self.triple;
        Ok(OneForm::from_fn(self.grid(), |i| t.j_one(i, &dphi.at(i))))
    }

    /// `W_J(phi) = J d phi + d* sigma(phi)`.
    pub fn w_field(&self, phi: &ScalarField) -> Result<OneForm> {
        Ok(self.w_field_with_report(phi)?.0)
    }

    pub fn w_field_with_report(&self, phi: &ScalarField) -> Result<(OneForm, LejmiSolveReport)> {
        let jdphi = self.j_d(phi)?;
        let (sigma, report) = self.sigma_for(&jdphi)?;
        if report.iterations == 0 {
            return Ok((jdphi, report));
        }
        let ds = self.codiff(&sigma.flat());
        Ok((jdphi.add(&ds), report))
    }

    /// `D_J^+(phi) = d W_J(phi)`.
    pub fn dj_plus(&self, phi: &ScalarField) -> Result<TwoForm> {
        exterior_d(&self.w_field(phi)?)
    }

    /// Estimates the dimension of the kernel of `P` by block inverse
    /// iteration. Modes touching a Nyquist frequency are removed first: the
    /// truncated derivative vanishes on them and they would otherwise form
    /// a spurious kernel.
    pub fn harmonic_anti_dim(&self) -> Result<HarmonicSpectrum> {
        const BLOCK: usize = 6;
        const MAX_SWEEPS: usize = 60;
        let n = self.grid().len();
        let w = self.weight();
        let gap = 0.5 * self.grid().laplace_gap();
        let shift = 0.1 * gap;
        let filter = |c: &[f64]| -> Vec<f64> {
            let mut out = self.grid().filter_nyquist(&c[..n]);
            out.extend(self.grid().filter_nyquist(&c[n..]));
            out
        };
        let weighted = |c: &[f64]| -> Vec<f64> {
            let v: Vec<f64> = c.iter().enumerate().map(|(k, x)| x * w(k)).collect();
            filter(&v)
        };
        let shifted = |c: &[f64]| -> Vec<f64> {
            let a = filter(&self.apply_weighted(c));
            let m = weighted(c);
            a.iter().zip(&m).map(|(x, y)| x + shift * y).collect()
        };
        let precond = |r: &[f64]| -> Vec<f64> {
            // flat system of the shifted operator: 2 (Delta / 2 + shift)
            let n = self.grid();
            let rr: Vec<f64> = filter(r);
            let mut out = Vec::with_capacity(rr.len());
            for ch in 0..2 {
                let part = &rr[ch * n.len()..(ch + 1) * n.len()];
                let o = n
                    .spectral_map(&[part], 1, |m, i, o| {
                        o[0] = i[0] / (n.laplace_symbol(m) + 2.0 * shift);
                    })
                    .pop()
                    .unwrap();
                out.extend(o);
            }
            filter(&out)
        };

        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut block: Vec<Vec<f64>> = (0..BLOCK)
            .map(|_| {
                let raw: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                filter(&raw)
            })
            .collect();
        let mut previous: Vec<f64> = Vec::new();
        let mut eigenvalues = Vec::new();
        for _ in 0..MAX_SWEEPS {
            let mut next = Vec::with_capacity(BLOCK);
            for v in &block {
                let rhs = weighted(v);
                let (x, out) = pcg(&shifted, &precond, &rhs, 1e-10 * norm(&rhs), LEJMI_MAX_ITER);
                if !out.converged {
                    return Err(Error::NoConvergence {
                        iterations: out.iterations,
                        residual: out.residual,
                    });
                }
                next.push(x);
            }
            let (vals, vecs) = rayleigh_ritz(&next, |c| filter(&self.apply_weighted(c)), &weighted)?;
            block = vecs;
            eigenvalues = vals;
            let settled = previous.len() == eigenvalues.len()
                && previous
                    .iter()
                    .zip(&eigenvalues)
                    .all(|(p, e)| (p - e).abs() <= 1e-9 * gap.max(e.abs()));
            if settled {
                break;
            }
            previous = eigenvalues.clone();
        }
        let threshold = 1e-6 * gap;
        let dimension = eigenvalues.iter().filter(|&&e| e < threshold).count();
        let gap_ratio = eigenvalues
            .iter()
            .find(|&&e| e >= threshold)
            .map_or(f64::INFINITY, |e| e / threshold);
        log::info!("kernel dimension {dimension}, gap ratio {gap_ratio:.3e}, eigenvalues {eigenvalues:?}");
        Ok(HarmonicSpectrum {
            dimension,
            eigenvalues,
            threshold,
            gap_ratio,
        })
    }

    /// Generic coefficient-field Rayleigh quotient `<P c, c> / <c, c>` in the
    /// weighted product.
    pub fn rayleigh_quotient(&self, psi: &AntiInvariantField) -> f64 {
        let c = psi.flat();
        let w = self.weight();
        dot(&self.apply_weighted(&c), &c) / weighted_dot(&c, &c, &w)
    }
}

fn weighted_dot(a: &[f64], b: &[f64], w: &impl Fn(usize) -> f64) -> f64 {
    a.iter().zip(b).enumerate().map(|(k, (x, y))| x * y * w(k)).sum()
}

fn l2_flat(f: &TwoForm) -> f64 {
    f.components().iter().map(|c| dot(c, c)).sum::<f64>().sqrt()
}

/// Generalized Rayleigh–Ritz on `span(vs)` for `(A, B)`.
fn rayleigh_ritz(
    vs: &[Vec<f64>],
    apply_a: impl Fn(&[f64]) -> Vec<f64>,
    apply_b: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = vs.len();
    let av: Vec<Vec<f64>> = vs.iter().map(|v| apply_a(v)).collect();
    let bv: Vec<Vec<f64>> = vs.iter().map(|v| apply_b(v)).collect();
    let mut am = DMatrix::zeros(k, k);
    let mut bm = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            am[(i, j)] = dot(&vs[i], &av[j]);
            bm[(i, j)] = dot(&vs[i], &bv[j]);
        }
    }
    let am = 0.5 * (&am + am.transpose());
    let bm = 0.5 * (&bm + bm.transpose());
    let chol = bm.clone().cholesky().ok_or(Error::NoConvergence {
        iterations: 0,
        residual: f64::NAN,
    })?;
    let l_inv = chol.l().try_inverse().expect("cholesky factor is invertible");
    let c = &l_inv * am * l_inv.transpose();
    let c = 0.5 * (&c + c.transpose());
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let coeffs = l_inv.transpose() * &eig.eigenvectors;
    let n = vs[0].len();
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order
        .iter()
        .map(|&col| {
            let mut v = vec![0.0; n];
            for (j, vj) in vs.iter().enumerate() {
                let s = coeffs[(j, col)];
                v.iter_mut().zip(vj).for_each(|(x, y)| *x += s * y);
            }
            v
        })
        .collect();
    Ok((vals, vecs))
}

/// Frame coefficients of a general 2-form's anti-invariant part.
pub fn frame_coefficients(op: &DjOperator<'_>, alpha: &TwoForm) -> Result<AntiInvariantField> {
    op.triple.check_grid(alpha.grid())?;
    let t = op.triple;
    let (b1, b2) = (&op.frame.beta1, &op.frame.beta2);
    let c1 = ScalarField::from_fn(alpha.grid(), |i| [0.5 * t.inner_two(i, &alpha.at(i), &b1.at(i))]);
    let c2 = ScalarField::from_fn(alpha.grid(), |i| [0.5 * t.inner_two(i, &alpha.at(i), &b2.at(i))]);
    Ok(AntiInvariantField {
        frame: op.frame.clone(),
        c1,
        c2,
    })
}

/// Free-function form of [`DjOperator::lejmi_apply`].
pub fn lejmi_apply(psi: &AntiInvariantField, triple: &CompatibleTriple) -> Result<AntiInvariantField> {
    DjOperator::new(triple)?.lejmi_apply(psi)
}

/// Free-function form of [`DjOperator::solve_sigma`].
pub fn solve_sigma(
    phi: &ScalarField,
    triple: &CompatibleTriple,
) -> Result<(AntiInvariantField, LejmiSolveReport)> {
    DjOperator::new(triple)?.solve_sigma(phi)
}

/// Free-function form of [`DjOperator::w_field`].
pub fn w_field(phi: &ScalarField, triple: &CompatibleTriple) -> Result<OneForm> {
    DjOperator::new(triple)?.w_field(phi)
}

/// Free-function form of [`DjOperator::dj_plus`].
pub fn dj_plus(phi: &ScalarField, triple: &CompatibleTriple) -> Result<TwoForm> {
    DjOperator::new(triple)?.dj_plus(phi)
}

/// Free-function form of [`DjOperator::harmonic_anti_dim`].
pub fn harmonic_anti_dim(triple: &CompatibleTriple) -> Result<HarmonicSpectrum> {
    DjOperator::new(triple)?.harmonic_anti_dim()
}
