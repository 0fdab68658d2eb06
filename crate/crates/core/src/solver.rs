//! Newton–Krylov solver for `(omega + D_J^+(phi))^2 = e^f omega^2`, the
//! continuity path in `t`, and the extraction of a compatible form from a
//! taming one.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

use crate::algebra::{
    build_almost_hermitian, build_triple, darboux_eigenvalues, form_matrix, positivity_check,
    project_invariant, wedge_22, wedge_22_dealiased, AcStructure, CompatibleTriple, Sign,
    STRUCTURE_TOL,
};
use crate::calculus::{codifferential, exterior_d, flat_inverse};
use crate::error::{Error, Result};
use crate::field::{ScalarField, TwoForm};
use crate::krylov::gmres;
use crate::lejmi::{frame_coefficients, AntiInvariantField, DjOperator};

/// Smallest line-search step.
pub const LINE_SEARCH_FLOOR: f64 = 1.0 / (1u64 << 20) as f64;
/// A Krylov solve that ends above this relative residual is a stall.
pub const KRYLOV_STALL: f64 = 1e-2;

/// Tolerances and step control of the nonlinear solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Target `max |residual|`.
    pub newton_tol: f64,
    pub newton_max: usize,
    /// Relative residual of each inner linear solve.
    pub krylov_tol: f64,
    pub krylov_restart: usize,
    /// Cap on operator applications per linear solve.
    pub krylov_max_apply: usize,
    pub t_step_init: f64,
    pub t_step_min: f64,
    /// Trial iterates with `min a1` below this are rejected.
    pub positivity_margin: f64,
    /// Zero-pad products in the wedge to remove aliasing.
    pub dealias: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-10,
            newton_max: 40,
            krylov_tol: 1e-10,
            krylov_restart: 50,
            krylov_max_apply: 20_000,
            t_step_init: 0.25,
            t_step_min: 1.0 / 4096.0,
            positivity_margin: 1e-6,
            dealias: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.newton_tol > 0.0 && self.krylov_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.newton_max == 0 || self.krylov_restart == 0 || self.krylov_max_apply == 0 {
            return bad("iteration caps must be positive");
        }
        if !(self.t_step_min > 0.0 && self.t_step_min <= self.t_step_init && self.t_step_init <= 1.0) {
            return bad("need 0 < t_step_min <= t_step_init <= 1");
        }
        if !(self.positivity_margin >= 0.0) {
            return bad("positivity_margin must be non-negative");
        }
        Ok(())
    }
}

/// Outcome of one Newton solve.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_linf: f64,
    pub residual_l2: f64,
    /// Size of the residual's pure-Nyquist part, which is not iterated on.
    pub aliasing_linf: f64,
    pub krylov_applications: usize,
    pub min_a1: f64,
}

/// An accepted point of the continuity path.
#[derive(Clone, Debug)]
pub struct ContinuationState {
    pub t: f64,
    pub phi: ScalarField,
    /// `omega + D_J^+(phi)`.
    pub omega_t: TwoForm,
    pub residual_linf: f64,
}

/// Monitored quantities of one accepted step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub newton_iters: usize,
    pub residual_linf: f64,
    pub residual_l2: f64,
    pub min_a1: f64,
    /// `max tr_g g_t = max 2 (a1 + a2)`.
    pub max_trace: f64,
    pub phi_linf: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContinuationReport {
    pub steps: Vec<StepRecord>,
    /// Rejected steps (each followed by halving the t-step).
    pub failures: usize,
    pub success: bool,
}

/// A continuation run that stopped before `t = 1`.
#[derive(Clone, Debug)]
pub struct ContinuationFailure {
    pub error: Error,
    /// Last accepted state.
    pub last: Option<ContinuationState>,
    pub report: ContinuationReport,
}

impl From<ContinuationFailure> for Error {
    fn from(f: ContinuationFailure) -> Error {
        f.error
    }
}

/// `f + c` with `c` chosen so that `int e^{f+c} omega^2 = int omega^2`.
pub fn normalize_rhs(f: &ScalarField, triple: &CompatibleTriple) -> Result<ScalarField> {
    triple.check_grid(f.grid())?;
    f.check_finite()?;
    let vol = omega_squared(triple)?;
    let m = f.max();
    let num: f64 = f.values().iter().zip(&vol).map(|(v, w)| (v - m).exp() * w).sum();
    let den: f64 = vol.iter().sum();
    let c = -(m + (num / den).ln());
    Ok(f.shift(c))
}

fn omega_squared(triple: &CompatibleTriple) -> Result<Vec<f64>> {
    let w = triple.omega();
    Ok(wedge_22(w, w)?.density().to_vec())
}

/// `(omega + D_J^+(phi))^2 / omega^2 - e^f`.
pub fn ma_residual(phi: &ScalarField, f: &ScalarField, triple: &CompatibleTriple) -> Result<ScalarField> {
    let solver = Solver::new(triple, SolverConfig::default())?;
    let ef = f.map(f64::exp);
    Ok(solver.residual_of(&solver.op.dj_plus(phi)?, &ef)?.0)
}

/// `2 (omega + D_J^+(phi)) ^ D_J^+(psi) / omega^2`.
pub fn linearize_apply(phi: &ScalarField, psi: &ScalarField, triple: &CompatibleTriple) -> Result<ScalarField> {
    let solver = Solver::new(triple, SolverConfig::default())?;
    let wt = triple.omega().add(&solver.op.dj_plus(phi)?);
    solver.linear(&wt, &solver.op.dj_plus(psi)?)
}

/// Free-function form of [`Solver::newton_solve`].
pub fn newton_solve(
    f: &ScalarField,
    phi_init: &ScalarField,
    triple: &CompatibleTriple,
    config: &SolverConfig,
) -> Result<(ScalarField, NewtonReport)> {
    Solver::new(triple, config.clone())?.newton_solve(f, phi_init)
}

/// Free-function form of [`Solver::continuation_solve`].
pub fn continuation_solve(
    f: &ScalarField,
    triple: &CompatibleTriple,
    config: &SolverConfig,
) -> std::result::Result<(ContinuationState, ContinuationReport), ContinuationFailure> {
    let solver = Solver::new(triple, config.clone()).map_err(|error| ContinuationFailure {
        error,
        last: None,
        report: ContinuationReport::default(),
    })?;
    solver.continuation_solve(f, None)
}

/// The nonlinear solver bound to one structure.
pub struct Solver<'a> {
    op: DjOperator<'a>,
    config: SolverConfig,
    omega2: Vec<f64>,
    stop: Option<&'a AtomicBool>,
}

impl<'a> Solver<'a> {
    pub fn new(triple: &'a CompatibleTriple, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        Ok(Solver {
            op: DjOperator::new(triple)?,
            config,
            omega2: omega_squared(triple)?,
            stop: None,
        })
    }

    /// Polls `stop` between iterations; a raised flag ends the solve with
    /// [`Error::Cancelled`].
    pub fn with_stop(mut self, stop: &'a AtomicBool) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn operator(&self) -> &DjOperator<'a> {
        &self.op
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn triple(&self) -> &CompatibleTriple {
        self.op.triple()
    }

    fn check_stop(&self) -> Result<()> {
        match self.stop {
            Some(s) if s.load(Ordering::Relaxed) => Err(Error::Cancelled),
            _ => Ok(()),
        }
    }

    fn wedge(&self, a: &TwoForm, b: &TwoForm) -> Result<Vec<f64>> {
        let w = if self.config.dealias {
            wedge_22_dealiased(a, b)?
        } else {
            wedge_22(a, b)?
        };
        Ok(w.density().to_vec())
    }

    /// Residual for a given `D_J^+(phi)`, together with `omega + D_J^+(phi)`.
    fn residual_of(&self, dplus: &TwoForm, ef: &ScalarField) -> Result<(ScalarField, TwoForm)> {
        let wt = self.triple().omega().add(dplus);
        let top = self.wedge(&wt, &wt)?;
        let vals = top
            .par_iter()
            .zip(self.omega2.par_iter())
            .zip(ef.values().par_iter())
            .map(|((t, o), e)| t / o - e)
            .collect();
        Ok((ScalarField::new(dplus.grid().clone(), vals)?, wt))
    }

    fn linear(&self, omega_tilde: &TwoForm, dpsi: &TwoForm) -> Result<ScalarField> {
        let top = self.wedge(omega_tilde, dpsi)?;
        let vals = top.iter().zip(&self.omega2).map(|(t, o)| 2.0 * t / o).collect();
        ScalarField::new(dpsi.grid().clone(), vals)
    }

    fn linear_row(&self, omega_tilde: &TwoForm, dpsi: &TwoForm) -> Vec<f64> {
        let top = self.wedge(omega_tilde, dpsi).expect("matching grids");
        top.iter().zip(&self.omega2).map(|(t, o)| 2.0 * t / o).collect()
    }

    fn precondition_potential(&self, r: &[f64]) -> Vec<f64> {
        let s = ScalarField::new(self.triple().grid().clone(), r.to_vec()).expect("length");
        flat_inverse(&s, 0.0).values().iter().map(|v| -v).collect()
    }

    /// The discrete equation is posed modulo the pure-Nyquist modes, on
    /// which every truncated derivative vanishes and which the linearization
    /// therefore cannot reach.
    fn project(&self, r: &ScalarField) -> ScalarField {
        let g = r.grid();
        ScalarField::new(g.clone(), g.filter_pure_nyquist(r.values())).expect("same grid")
    }

    fn remove_mean(&self, phi: &ScalarField) -> ScalarField {
        phi.shift(-self.triple().weighted_mean(phi))
    }

    /// Newton iteration for `e^f` given by `f` (assumed normalized).
    pub fn newton_solve(&self, f: &ScalarField, phi_init: &ScalarField) -> Result<(ScalarField, NewtonReport)> {
        self.triple().check_grid(f.grid())?;
        f.check_finite()?;
        self.newton_exp(&f.map(f64::exp), phi_init)
    }

    fn newton_exp(&self, ef: &ScalarField, phi_init: &ScalarField) -> Result<(ScalarField, NewtonReport)> {
        let cfg = &self.config;
        let triple = self.triple();
        let mut phi = self.remove_mean(phi_init);
        let mut dplus = self.op.dj_plus(&phi)?;
        let (mut raw, mut wt) = self.residual_of(&dplus, ef)?;
        let mut res = self.project(&raw);
        let start = positivity_check(&wt, triple)?;
        if !start.ok || start.min_a1 < cfg.positivity_margin {
            return Err(Error::PositivityLost { min_a1: start.min_a1 });
        }
        let mut min_a1 = start.min_a1;
        let mut applications = 0;
        let mut it = 0;
        loop {
            let rinf = res.max_abs();
            log::debug!("newton {it}: |F| = {rinf:e}, min a1 = {min_a1:.6}");
            if rinf <= cfg.newton_tol {
                return Ok((
                    phi,
                    NewtonReport {
                        iterations: it,
                        residual_linf: rinf,
                        residual_l2: res.rms(),
                        aliasing_linf: raw.max_diff(&res),
                        krylov_applications: applications,
                        min_a1,
                    },
                ));
            }
            if it == cfg.newton_max {
                return Err(Error::NewtonDiverged { iterations: it, residual: rinf });
            }
            self.check_stop()?;
            it += 1;

            let b: Vec<f64> = res.values().iter().map(|v| -v).collect();
            let bnorm = crate::krylov::norm(&b);
            let grid = phi.grid().clone();
            let n = grid.len();
            let constant = self.op.is_constant();
            let mut failure = None;
            // the linearization is projected like the residual, otherwise the
            // Krylov basis picks up aliased pure-Nyquist directions
            let (delta, out) = gmres(
                |v| {
                    let row = if constant {
                        self.linear_row(&wt, &self.op.d_j_d(v))
                    } else {
                        let psi = ScalarField::new(grid.clone(), v.to_vec()).expect("length");
                        match self.op.dj_plus(&psi) {
                            Ok(d) => self.linear_row(&wt, &d),
                            Err(e) => {
                                failure.get_or_insert(e);
                                return vec![0.0; n];
                            }
                        }
                    };
                    grid.filter_pure_nyquist(&row)
                },
                |r| self.precondition_potential(r),
                &b,
                cfg.krylov_tol * bnorm,
                cfg.krylov_restart,
                cfg.krylov_max_apply,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            log::debug!("krylov: {out:?}, |b| = {bnorm:e}");
            applications += out.iterations;
            let relative = out.residual / bnorm;
            if !out.converged && relative > KRYLOV_STALL {
                return Err(Error::KrylovStall { relative });
            }
            let delta = self.remove_mean(&ScalarField::new(grid.clone(), grid.filter_pure_nyquist(&delta))?);
            let ddelta = self.op.dj_plus(&delta)?;

            let mut alpha = 1.0;
            let mut blocked_by_positivity;
            let mut last_min = min_a1;
            loop {
                let trial_d = dplus.axpy(alpha, &ddelta);
                let trial_wt = triple.omega().add(&trial_d);
                let pos = positivity_check(&trial_wt, triple)?;
                if pos.ok && pos.min_a1 >= cfg.positivity_margin {
                    let (trial_raw, _) = self.residual_of(&trial_d, ef)?;
                    let trial_res = self.project(&trial_raw);
                    if trial_res.max_abs() < rinf {
                        phi = self.remove_mean(&phi.axpy(alpha, &delta));
                        dplus = trial_d;
                        wt = trial_wt;
                        res = trial_res;
                        raw = trial_raw;
                        min_a1 = pos.min_a1;
                        break;
                    }
                    blocked_by_positivity = false;
                } else {
                    blocked_by_positivity = true;
                    last_min = pos.min_a1;
                }
                alpha *= 0.5;
                if alpha < LINE_SEARCH_FLOOR {
                    return Err(if blocked_by_positivity {
                        Error::PositivityLost { min_a1: last_min }
                    } else {
                        Error::NewtonDiverged { iterations: it, residual: rinf }
                    });
                }
            }
        }
    }

    /// The continuity path from `t = 0` to `t = 1`. A `start` potential is
    /// first relaxed to the `t = 0` solution, which exercises uniqueness.
    pub fn continuation_solve(
        &self,
        f: &ScalarField,
        start: Option<&ScalarField>,
    ) -> std::result::Result<(ContinuationState, ContinuationReport), ContinuationFailure> {
        self.continuation_observed(f, start, &mut |_| {})
    }

    /// [`continuation_solve`](Self::continuation_solve), calling `observer`
    /// on every accepted state (including `t = 0`).
    pub fn continuation_observed(
        &self,
        f: &ScalarField,
        start: Option<&ScalarField>,
        observer: &mut dyn FnMut(&ContinuationState),
    ) -> std::result::Result<(ContinuationState, ContinuationReport), ContinuationFailure> {
        let mut report = ContinuationReport::default();
        let mut last: Option<ContinuationState> = None;
        macro_rules! fail {
            ($e:expr) => {
                return Err(ContinuationFailure { error: $e, last, report })
            };
        }
        macro_rules! attempt {
            ($e:expr) => {
                match $e {
                    Ok(v) => v,
                    Err(e) => fail!(e),
                }
            };
        }
        let cfg = &self.config;
        let triple = self.triple();
        attempt!(triple.check_grid(f.grid()));
        attempt!(f.check_finite());
        let grid = f.grid().clone();

        let zero = ScalarField::constant(&grid, 0.0);
        let one = ScalarField::constant(&grid, 1.0);
        let (phi0, rep0) = match start {
            Some(s) => attempt!(self.newton_exp(&one, s)),
            None => attempt!(self.newton_exp(&one, &zero)),
        };
        let state0 = attempt!(self.state(0.0, phi0, &rep0));
        report.steps.push(attempt!(self.record(&state0, &rep0)));
        observer(&state0);
        last = Some(state0);

        let mut t = 0.0;
        let mut step = cfg.t_step_init;
        let mut easy = 0;
        while t < 1.0 {
            attempt!(self.check_stop());
            let t_new = if t + step >= 1.0 { 1.0 } else { t + step };
            let ft = attempt!(normalize_rhs(&f.scale(t_new), triple));
            let warm = &last.as_ref().unwrap().phi;
            match self.newton_exp(&ft.map(f64::exp), warm) {
                Ok((phi, rep)) => {
                    let state = attempt!(self.state(t_new, phi, &rep));
                    report.steps.push(attempt!(self.record(&state, &rep)));
                    observer(&state);
                    log::info!(
                        "t = {t_new:.6}: {} Newton iterations, |F| = {:e}",
                        rep.iterations,
                        rep.residual_linf
                    );
                    t = t_new;
                    last = Some(state);
                    if rep.iterations <= 3 {
                        easy += 1;
                        if easy >= 2 {
                            step *= 2.0;
                            easy = 0;
                        }
                    } else {
                        easy = 0;
                    }
                }
                Err(Error::Cancelled) => fail!(Error::Cancelled),
                Err(e) => {
                    report.failures += 1;
                    easy = 0;
                    step *= 0.5;
                    log::warn!("step to t = {t_new:.6} failed ({e}); halving to {step:e}");
                    if step < cfg.t_step_min {
                        fail!(Error::StepUnderflow { t, step });
                    }
                }
            }
        }
        report.success = true;
        Ok((last.unwrap(), report))
    }

    fn state(&self, t: f64, phi: ScalarField, rep: &NewtonReport) -> Result<ContinuationState> {
        let omega_t = self.triple().omega().add(&self.op.dj_plus(&phi)?);
        Ok(ContinuationState { t, phi, omega_t, residual_linf: rep.residual_linf })
    }

    fn record(&self, state: &ContinuationState, rep: &NewtonReport) -> Result<StepRecord> {
        let eig = darboux_eigenvalues(&state.omega_t, self.triple())?;
        let max_trace = eig.a1.zip_map(&eig.a2, |a, b| 2.0 * (a + b)).max();
        Ok(StepRecord {
            t: state.t,
            newton_iters: rep.iterations,
            residual_linf: rep.residual_linf,
            residual_l2: rep.residual_l2,
            min_a1: eig.a1.min(),
            max_trace,
            phi_linf: state.phi.max_abs(),
        })
    }
}

/// Settings of [`tame_to_almost_kahler`].
#[derive(Clone, Debug, PartialEq)]
pub struct TameConfig {
    /// Largest harmonic anti-invariant part accepted, relative to `max |Omega|`.
    pub obstruction_tol: f64,
    /// Fixed-point tolerance on successive compatible forms.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TameConfig {
    fn default() -> Self {
        TameConfig { obstruction_tol: 1e-8, tol: 1e-12, max_iter: 100 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TameReport {
    /// `max |kappa|` of the harmonic anti-invariant part.
    pub kappa_linf: f64,
    pub iterations: usize,
    pub closed_residual: f64,
    pub invariance_residual: f64,
    pub min_a1: f64,
}

/// Free-function form of [`tame_with`] with default settings.
pub fn tame_to_almost_kahler(big_omega: &TwoForm, j: &AcStructure) -> Result<(TwoForm, TameReport)> {
    tame_with(big_omega, j, &TameConfig::default())
}

/// Removes the anti-invariant part of a closed taming form by an exact
/// correction: `omega = Omega - d alpha` with `alpha = d* psi` and
/// `P(psi) = P_J^- Omega`. The metric defining `d*` is the one of `omega`
/// itself, found by fixed-point iteration from the J-invariant part of
/// `Omega`.
pub fn tame_with(big_omega: &TwoForm, j: &AcStructure, config: &TameConfig) -> Result<(TwoForm, TameReport)> {
    big_omega.same_grid(j.grid())?;
    big_omega.check_finite()?;
    let scale = big_omega.max_abs().max(1.0);
    let closed = exterior_d(big_omega)?.max_abs();
    if closed > STRUCTURE_TOL * scale {
        return Err(Error::NotClosed { residual: closed });
    }
    let grid = big_omega.grid();
    let min_taming = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let m = form_matrix(&big_omega.at(i)) * j.at(i);
            (0.5 * (m + m.transpose())).symmetric_eigenvalues().min()
        })
        .reduce(|| f64::INFINITY, f64::min);
    if min_taming <= 0.0 {
        return Err(Error::NotTaming { min_eigenvalue: min_taming });
    }

    let mut current = project_invariant(big_omega, j, Sign::Plus)?;
    let mut triple = build_almost_hermitian(current.clone(), j.clone())?;
    let mut change = f64::INFINITY;
    for it in 1..=config.max_iter {
        let op = DjOperator::new(&triple)?;
        let rho = frame_coefficients(&op, big_omega)?;
        let kappa = op.kernel_component(&rho)?;
        let kappa_linf = kappa.reconstruct().max_abs();
        if kappa_linf > config.obstruction_tol * scale {
            return Err(Error::ObstructionNonzero { norm: kappa_linf });
        }
        let target = AntiInvariantField {
            frame: rho.frame.clone(),
            c1: rho.c1.sub(&kappa.c1),
            c2: rho.c2.sub(&kappa.c2),
        };
        let (psi, _) = op.solve(&target)?;
        let alpha = codifferential(&psi.reconstruct(), &triple)?;
        let next = big_omega.sub(&exterior_d(&alpha)?);
        change = next.max_diff(&current);
        log::debug!("tame iteration {it}: change {change:e}");
        current = next;
        triple = build_triple(current.clone(), j.clone())?;
        if change <= config.tol * scale {
            let pos = positivity_check(&current, &triple)?;
            if !pos.ok {
                return Err(Error::NotPositive { min_eigenvalue: pos.min_a1 });
            }
            let report = TameReport {
                kappa_linf,
                iterations: it,
                closed_residual: exterior_d(&current)?.max_abs(),
                invariance_residual: project_invariant(&current, j, Sign::Minus)?.max_abs(),
                min_a1: pos.min_a1,
            };
            return Ok((current, report));
        }
    }
    Err(Error::NoConvergence { iterations: config.max_iter, residual: change })
}
