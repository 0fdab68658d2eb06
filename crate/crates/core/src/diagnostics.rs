//! Checks of the pointwise identities satisfied by solutions, the a priori
//! monitors along a continuation run, and the uniqueness experiment.

use nalgebra::Matrix4;
use rayon::prelude::*;

use crate::algebra::{
    build_triple, darboux_eigenvalues, form_matrix, positivity_check, project_invariant, project_selfdual,
    wedge_22, CompatibleTriple, EigenPairField, Sign,
};
use crate::calculus::{codifferential, exterior_d, flat_inverse, laplacian};
use crate::error::{Error, Result};
use crate::field::{OneForm, ScalarField, TwoForm};
use crate::krylov::{norm, pcg};
use crate::lejmi::DjOperator;
use crate::solver::{ContinuationState, ContinuationReport, Solver, SolverConfig};

/// Relative tolerance of the varying-metric Poisson solve.
pub const POISSON_TOL: f64 = 1e-10;
/// Relative tolerance on the solvability (mean) condition.
pub const SOLVABILITY_TOL: f64 = 1e-10;
/// Default alarm threshold of the trace monitor.
pub const TRACE_ALARM: f64 = 1e3;
/// Pass threshold of the uniqueness experiment.
pub const UNIQUENESS_TOL: f64 = 1e-7;

/// Mean-zero solution of `Delta_g u = rho` for the triple's metric.
///
/// Solved as the symmetric system `sqrt g Delta_g u = sqrt g rho` by CG with
/// the flat inverse as preconditioner. Pure-Nyquist modes, on which the
/// discrete operator vanishes, are projected out of the right-hand side.
pub fn poisson_solve(rho: &ScalarField, triple: &CompatibleTriple) -> Result<ScalarField> {
    triple.check_grid(rho.grid())?;
    rho.check_finite()?;
    let grid = rho.grid().clone();
    let w = triple.sqrt_dets();
    let weighted: Vec<f64> = rho.values().iter().zip(w).map(|(r, s)| r * s).collect();
    let total: f64 = weighted.iter().sum();
    let size: f64 = weighted.iter().map(|v| v.abs()).sum();
    if total.abs() > SOLVABILITY_TOL * size.max(1.0) {
        return Err(Error::NotSolvable { mean: total / w.iter().sum::<f64>() });
    }
    let b = grid.filter_pure_nyquist(&weighted);
    let bn = norm(&b);
    if bn == 0.0 {
        return Ok(ScalarField::constant(&grid, 0.0));
    }
    let apply = |u: &[f64]| -> Vec<f64> {
        let u = ScalarField::new(grid.clone(), u.to_vec()).expect("length");
        let lap = laplacian(&u, triple).expect("matching grids");
        lap.values().iter().zip(w).map(|(l, s)| l * s).collect()
    };
    let precond = |r: &[f64]| -> Vec<f64> {
        let r = ScalarField::new(grid.clone(), r.to_vec()).expect("length");
        flat_inverse(&r, 0.0).into_components().into_iter().next().unwrap()
    };
    let (x, out) = pcg(apply, precond, &b, POISSON_TOL * bn, 10_000);
    if !out.converged {
        return Err(Error::NoConvergence { iterations: out.iterations, residual: out.residual });
    }
    let u = ScalarField::new(grid, x)?;
    Ok(u.shift(-triple.weighted_mean(&u)))
}

/// The potential with `-1/2 Delta_g phi0 = omega ^ (omega1 - omega) / omega^2`.
pub fn potential_phi0(omega1: &TwoForm, triple: &CompatibleTriple) -> Result<ScalarField> {
    triple.check_grid(omega1.grid())?;
    let omega = triple.omega();
    let diff = omega1.sub(omega);
    let top = wedge_22(omega, &diff)?;
    let o2 = wedge_22(omega, omega)?;
    let rho: Vec<f64> = top.density().iter().zip(o2.density()).map(|(t, o)| -2.0 * t / o).collect();
    poisson_solve(&ScalarField::new(omega1.grid().clone(), rho)?, triple)
}

/// Residuals of the pointwise eigenvalue identities.
#[derive(Clone, Debug)]
pub struct Lemma1Report {
    pub eigs: EigenPairField,
    /// `max |e^f - a1 a2|`.
    pub residual_det: f64,
    /// `max | |omega1 - omega|_g^2 - (a1-1)^2 - (a2-1)^2 |` with the form norm
    /// summing over `a < b`. The tensor norm is twice this.
    pub residual_norm: f64,
    /// `max |Delta_g phi0 - (2 - a1 - a2)|`.
    pub residual_lap: f64,
    /// `min 2(1 - e^{f/2}) - Delta_g phi0`; non-negative by AM-GM.
    pub bound_margin: f64,
    /// `min 2(1 - e^f) - Delta_g phi0`; reported only, its sign is not fixed.
    pub printed_margin: f64,
    /// `max Delta_g phi0`.
    pub max_lap_phi0: f64,
}

/// Values of the identities at one point with eigenvalues `(a1, a2)`:
/// `(e^f, |omega1 - omega|^2, Delta phi0)`.
pub fn lemma1_point(a1: f64, a2: f64) -> (f64, f64, f64) {
    (a1 * a2, (a1 - 1.0).powi(2) + (a2 - 1.0).powi(2), 2.0 - a1 - a2)
}

pub fn lemma1_check(omega1: &TwoForm, f: &ScalarField, triple: &CompatibleTriple) -> Result<Lemma1Report> {
    triple.check_grid(f.grid())?;
    f.check_finite()?;
    let eigs = darboux_eigenvalues(omega1, triple)?;
    let phi0 = potential_phi0(omega1, triple)?;
    let lap = laplacian(&phi0, triple)?;
    let diff = omega1.sub(triple.omega());
    let n = f.grid().len();
    let rows: Vec<[f64; 6]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (a1, a2) = (eigs.a1.values()[i], eigs.a2.values()[i]);
            let (det, nrm, l) = lemma1_point(a1, a2);
            let fv = f.values()[i];
            let d = diff.at(i);
            let lv = lap.values()[i];
            [
                (fv.exp() - det).abs(),
                (triple.inner_two(i, &d, &d) - nrm).abs(),
                (lv - l).abs(),
                2.0 * (1.0 - (0.5 * fv).exp()) - lv,
                2.0 * (1.0 - fv.exp()) - lv,
                lv,
            ]
        })
        .collect();
    let max = |k: usize| rows.iter().fold(0.0f64, |m, r| m.max(r[k]));
    let min = |k: usize| rows.iter().fold(f64::INFINITY, |m, r| m.min(r[k]));
    Ok(Lemma1Report {
        residual_det: max(0),
        residual_norm: max(1),
        residual_lap: max(2),
        bound_margin: min(3),
        printed_margin: min(4),
        max_lap_phi0: rows.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r[5])),
        eigs,
    })
}

/// Positivity of `2 omega_half -+ (omega1 - omega)`, `omega_half` the average.
#[derive(Clone, Debug, PartialEq)]
pub struct SandwichReport {
    /// `min a1` of `2 omega_half - (omega1 - omega)`.
    pub margin_minus: f64,
    /// `min a1` of `2 omega_half + (omega1 - omega)`.
    pub margin_plus: f64,
    pub ok: bool,
}

pub fn sandwich_check(omega1: &TwoForm, triple: &CompatibleTriple) -> Result<SandwichReport> {
    triple.check_grid(omega1.grid())?;
    let omega = triple.omega();
    let twice_half = omega.add(omega1);
    let diff = omega1.sub(omega);
    let lower = positivity_check(&twice_half.sub(&diff), triple)?;
    let upper = positivity_check(&twice_half.add(&diff), triple)?;
    Ok(SandwichReport {
        margin_minus: lower.min_a1,
        margin_plus: upper.min_a1,
        ok: lower.ok && upper.ok,
    })
}

/// `tr_g g1 (det g / det g1)^{1/2} = tr_{g1} g`, checked with matrix traces.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceIdentityReport {
    /// Max pointwise discrepancy relative to `max(1, |rhs|)`.
    pub max_discrepancy: f64,
    pub ok: bool,
}

pub const TRACE_IDENTITY_TOL: f64 = 1e-10;

/// Both sides of the identity in eigenvalue form:
/// `(a1 + a2) / (a1 a2)` and `1/a1 + 1/a2`.
pub fn trace_identity_point(a1: f64, a2: f64) -> (f64, f64) {
    ((a1 + a2) / (a1 * a2), 1.0 / a1 + 1.0 / a2)
}

/// The metric `g1 = omega1(., J .)` at a point.
fn g1_at(omega1: &TwoForm, triple: &CompatibleTriple, i: usize) -> Matrix4<f64> {
    let m = form_matrix(&omega1.at(i)) * triple.j().at(i);
    0.5 * (m + m.transpose())
}

pub fn trace_identity_check(triple: &CompatibleTriple, omega1: &TwoForm) -> Result<TraceIdentityReport> {
    triple.check_grid(omega1.grid())?;
    omega1.check_finite()?;
    let n = omega1.grid().len();
    let worst = (0..n)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let g = triple.metric(i);
            let g1 = g1_at(omega1, triple, i);
            let g1_inv = g1.try_inverse().ok_or(Error::NotPositive { min_eigenvalue: 0.0 })?;
            let det_ratio = g.determinant() / g1.determinant();
            if !(det_ratio > 0.0) {
                return Err(Error::NotPositive { min_eigenvalue: det_ratio });
            }
            let lhs = (triple.inv_metric(i) * g1).trace() * det_ratio.sqrt();
            let rhs = (g1_inv * g).trace();
            Ok((lhs - rhs).abs() / rhs.abs().max(1.0))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok(TraceIdentityReport { max_discrepancy: worst, ok: worst <= TRACE_IDENTITY_TOL })
}

/// Monitored quantities per accepted continuation state.
#[derive(Clone, Debug, Default)]
pub struct MonitorSeries {
    pub t: Vec<f64>,
    /// `max tr_g g1 = max 2(a1 + a2)` (matrix trace).
    pub max_trace: Vec<f64>,
    /// `max (a1 + a2)`, the trace in the convention without the factor 2.
    pub max_trace_half: Vec<f64>,
    pub phi_linf: Vec<f64>,
    pub min_a1: Vec<f64>,
    /// `max |d g1|_{g1}`: spectral partial derivatives of the entries of
    /// `g1`, all indices contracted with `g1`. A proxy for the covariant
    /// derivative, not the canonical connection.
    pub grad_proxy: Vec<f64>,
    /// `max Delta_g phi0`; stays below 2.
    pub max_lap_phi0: Vec<f64>,
    pub alarm: bool,
}

impl MonitorSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Every series is finite and `Delta_g phi0 < 2` everywhere.
    pub fn bounded(&self) -> bool {
        let finite = [&self.max_trace, &self.phi_linf, &self.min_a1, &self.grad_proxy, &self.max_lap_phi0]
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()));
        finite && self.max_lap_phi0.iter().all(|v| *v < 2.0)
    }
}

pub fn apriori_monitor(history: &[ContinuationState], triple: &CompatibleTriple) -> Result<MonitorSeries> {
    apriori_monitor_with(history, triple, TRACE_ALARM)
}

pub fn apriori_monitor_with(
    history: &[ContinuationState],
    triple: &CompatibleTriple,
    alarm_at: f64,
) -> Result<MonitorSeries> {
    let mut out = MonitorSeries::default();
    for state in history {
        let w1 = &state.omega_t;
        let eigs = darboux_eigenvalues(w1, triple)?;
        let sum: Vec<f64> = eigs.a1.values().iter().zip(eigs.a2.values()).map(|(a, b)| a + b).collect();
        let max_sum = sum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lap = laplacian(&potential_phi0(w1, triple)?, triple)?;
        out.t.push(state.t);
        out.max_trace.push(2.0 * max_sum);
        out.max_trace_half.push(max_sum);
        out.phi_linf.push(state.phi.max_abs());
        out.min_a1.push(eigs.a1.min());
        out.grad_proxy.push(grad_proxy(w1, triple)?);
        out.max_lap_phi0.push(lap.max());
        if !(2.0 * max_sum <= alarm_at) {
            log::warn!("trace monitor alarm at t = {}: max tr = {:e}", state.t, 2.0 * max_sum);
            out.alarm = true;
        }
    }
    if !out.bounded() {
        log::warn!("a priori monitor: series not bounded");
        out.alarm = true;
    }
    Ok(out)
}

/// `max |d g1|_{g1}` over the grid.
pub fn grad_proxy(omega1: &TwoForm, triple: &CompatibleTriple) -> Result<f64> {
    triple.check_grid(omega1.grid())?;
    let grid = omega1.grid();
    let n = grid.len();
    let mats: Vec<Matrix4<f64>> = (0..n).into_par_iter().map(|i| g1_at(omega1, triple, i)).collect();
    // derivatives of the 10 independent entries along each axis
    let entries: Vec<(usize, usize)> = (0..4).flat_map(|a| (a..4).map(move |b| (a, b))).collect();
    let deriv: Vec<[Vec<f64>; 4]> = entries
        .iter()
        .map(|&(a, b)| {
            let u: Vec<f64> = mats.iter().map(|m| m[(a, b)]).collect();
            std::array::from_fn(|c| grid.derivative(&u, c))
        })
        .collect();
    let worst = (0..n)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let inv = mats[i].try_inverse().ok_or(Error::NotPositive { min_eigenvalue: 0.0 })?;
            let mut dg = [Matrix4::<f64>::zeros(); 4];
            for (k, &(a, b)) in entries.iter().enumerate() {
                for c in 0..4 {
                    dg[c][(a, b)] = deriv[k][c][i];
                    dg[c][(b, a)] = deriv[k][c][i];
                }
            }
            // |T|^2 = g1^{cc'} tr(g1^-1 dg_c g1^-1 dg_c')
            let mut s = 0.0;
            for c in 0..4 {
                let left = inv * dg[c];
                for d in 0..4 {
                    s += inv[(c, d)] * (left * inv * dg[d]).trace();
                }
            }
            Ok(s.max(0.0).sqrt())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok(worst)
}

/// Outcome of two continuation runs from different starts.
#[derive(Clone, Debug)]
pub struct UniquenessReport {
    /// `max - min` of the difference of the two potentials.
    pub oscillation: f64,
    pub passed: bool,
    pub seed_amplitude: f64,
    pub runs: [ContinuationReport; 2],
}

/// Fixed mean-zero start, halved until `omega + D_J^+(seed)` stays positive
/// with margin 1/2.
pub fn uniqueness_seed(triple: &CompatibleTriple) -> Result<(ScalarField, f64)> {
    let grid = triple.grid();
    let spec = *grid.spec();
    let base = ScalarField::sample(grid, |x| {
        let k: [f64; 4] = std::array::from_fn(|a| 2.0 * std::f64::consts::PI / spec.periods[a]);
        (k[1] * x[1]).cos() / (k[1] * k[1]) + 0.5 * (k[0] * x[0] + k[2] * x[2]).sin() / (k[0] * k[0] + k[2] * k[2])
    });
    let base = base.shift(-triple.weighted_mean(&base));
    let op = DjOperator::new(triple)?;
    let d = op.dj_plus(&base)?;
    let mut amp = 0.2;
    for _ in 0..30 {
        let trial = triple.omega().add(&d.scale(amp));
        let pos = positivity_check(&trial, triple)?;
        if pos.ok && pos.min_a1 >= 0.5 {
            return Ok((base.scale(amp), amp));
        }
        amp *= 0.5;
    }
    Ok((ScalarField::constant(grid, 0.0), 0.0))
}

pub fn uniqueness_experiment(f: &ScalarField, triple: &CompatibleTriple, config: &SolverConfig) -> Result<UniquenessReport> {
    let solver = Solver::new(triple, config.clone())?;
    let (seed, amp) = uniqueness_seed(triple)?;
    let (a, ra) = solver.continuation_solve(f, None).map_err(Error::from)?;
    let (b, rb) = solver.continuation_solve(f, Some(&seed)).map_err(Error::from)?;
    let oscillation = a.phi.sub(&b.phi).oscillation();
    Ok(UniquenessReport {
        oscillation,
        passed: oscillation <= UNIQUENESS_TOL,
        seed_amplitude: amp,
        runs: [ra, rb],
    })
}

/// Residuals of the decomposition `omega1 - omega = dJd phi_s + d a_s` at
/// `s = 1`.
#[derive(Clone, Debug)]
pub struct Decomposition44Report {
    pub phi_s: ScalarField,
    pub a_s: OneForm,
    /// `max |dJd phi_s + d a_s - (omega1 - omega)|`.
    pub decomposition: f64,
    /// `max |d^{*_1} a_s|` in the metric of `omega1`.
    pub coclosed: f64,
    /// `max |omega1 ^ d a_s| / omega1^2`.
    pub wedge: f64,
    /// `max |P_J^-(dJd phi_s) + P^+_{g1}(d a_s)|`.
    pub side_condition: f64,
}

/// `phi` is the potential with `omega1 = omega + D_J^+(phi)`.
pub fn decomposition_44_check(
    phi: &ScalarField,
    omega1: &TwoForm,
    triple: &CompatibleTriple,
) -> Result<Decomposition44Report> {
    triple.check_grid(phi.grid())?;
    let t1 = build_triple(omega1.clone(), triple.j().clone())?;
    let omega = triple.omega();
    let diff = omega1.sub(omega);
    // omega1 ^ (dJd phi_s) = omega1 ^ (omega1 - omega), a Poisson problem in g1
    let top = wedge_22(omega1, &diff)?;
    let o2 = wedge_22(omega1, omega1)?;
    let rho: Vec<f64> = top.density().iter().zip(o2.density()).map(|(t, o)| -2.0 * t / o).collect();
    let phi_s = poisson_solve(&ScalarField::new(phi.grid().clone(), rho)?, &t1)?;

    let jd = |u: &ScalarField| -> Result<OneForm> {
        let du = exterior_d(u)?;
        Ok(OneForm::from_fn(u.grid(), |i| triple.j_one(i, &du.at(i))))
    };
    // a0 = W_J(phi) - J d phi_s has d a0 = omega1 - omega - dJd phi_s
    let w = DjOperator::new(triple)?.w_field(phi)?;
    let a0 = w.sub(&jd(&phi_s)?);
    // make it coclosed in g1: a_s = a0 + du with Delta_1 u = -d^{*_1} a0
    let rhs = codifferential(&a0, &t1)?.scale(-1.0);
    let u = poisson_solve(&rhs, &t1)?;
    let a_s = a0.add(&exterior_d(&u)?);

    let da = exterior_d(&a_s)?;
    let djd = exterior_d(&jd(&phi_s)?)?;
    let decomposition = djd.add(&da).max_diff(&diff);
    let coclosed = codifferential(&a_s, &t1)?.max_abs();
    let wa = wedge_22(omega1, &da)?;
    let wedge = wa
        .density()
        .iter()
        .zip(o2.density())
        .fold(0.0f64, |m, (a, o)| m.max((a / o).abs()));
    let side = project_invariant(&djd, triple.j(), Sign::Minus)?.add(&project_selfdual(&da, &t1, Sign::Plus)?);
    Ok(Decomposition44Report {
        phi_s,
        a_s,
        decomposition,
        coclosed,
        wedge,
        side_condition: side.max_abs(),
    })
}
