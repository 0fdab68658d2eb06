use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use akcy_core::algebra::{build_triple, positivity_check};
use akcy_core::calculus::{codifferential, exterior_d};
use akcy_core::diagnostics::{
    apriori_monitor, decomposition_44_check, lemma1_check, sandwich_check, trace_identity_check, MonitorSeries,
};
use akcy_core::lejmi::{AntiInvariantField, DjOperator};
use akcy_core::manufactured::sine_x0;
use akcy_core::solver::{ma_residual, normalize_rhs, tame_with, ContinuationState, Solver, StepRecord};
use akcy_core::{AcStructure, CompatibleTriple, Grid, ScalarField, TwoForm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{Rhs, RunConfig, Structure, TameSource};
use crate::error::CliError;
use crate::fieldfile::FieldFile;
use crate::output::{write_csv, write_json};

/// Thresholds of `verify`.
pub const VERIFY_RESIDUAL: f64 = 1e-8;
pub const VERIFY_IDENTITY: f64 = 1e-8;
pub const VERIFY_BOUND: f64 = -1e-9;
pub const VERIFY_DECOMPOSITION: f64 = 1e-7;

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn grid(cfg: &RunConfig) -> Result<Arc<Grid>, CliError> {
    Ok(Grid::new(cfg.grid)?)
}

pub fn build_structure(cfg: &RunConfig, grid: &Arc<Grid>) -> Result<CompatibleTriple, CliError> {
    Ok(match &cfg.structure {
        Structure::Standard => CompatibleTriple::standard(grid),
        Structure::Perturbed { seed, amplitude } => CompatibleTriple::perturbed(grid, *seed, *amplitude)?,
        Structure::File(p) => {
            let j = FieldFile::load(p)?.into_ac_structure(grid, p)?;
            build_triple(TwoForm::standard_symplectic(grid), j)?
        }
    })
}

pub fn build_rhs(cfg: &RunConfig, grid: &Arc<Grid>) -> Result<ScalarField, CliError> {
    Ok(match &cfg.rhs {
        Rhs::Zero => ScalarField::constant(grid, 0.0),
        Rhs::Sine { epsilon } => sine_x0(grid, *epsilon)?.f,
        Rhs::File(p) => FieldFile::load(p)?.into_scalar(grid, p)?,
    })
}

fn step_json(s: &StepRecord) -> Value {
    json!({
        "t": s.t,
        "newton_iters": s.newton_iters,
        "residual_linf": s.residual_linf,
        "residual_l2": s.residual_l2,
        "min_a1": s.min_a1,
        "max_trace": s.max_trace,
        "phi_linf": s.phi_linf,
    })
}

fn monitor_json(m: &MonitorSeries) -> Value {
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    json!({
        "max_trace": max(&m.max_trace),
        "max_trace_half": max(&m.max_trace_half),
        "phi_linf": max(&m.phi_linf),
        "min_a1": min(&m.min_a1),
        "grad_proxy": max(&m.grad_proxy),
        "grad_proxy_note": "spectral derivatives of g1 entries in the g1 norm, not the canonical connection",
        "max_lap_phi0": max(&m.max_lap_phi0),
        "bounded": m.bounded(),
        "alarm": m.alarm,
    })
}

fn save_state(ctx: &Context, triple: &CompatibleTriple, state: &ContinuationState) -> Result<(), CliError> {
    FieldFile::scalar(&state.phi).save(&ctx.path("phi.field"))?;
    let w = DjOperator::new(triple)?.w_field(&state.phi)?;
    FieldFile::one_form(&w).save(&ctx.path("w.field"))?;
    FieldFile::two_form(&state.omega_t).save(&ctx.path("omega1.field"))
}

pub fn solve(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let g = grid(cfg)?;
    let triple = build_structure(cfg, &g)?;
    let f = build_rhs(cfg, &g)?;
    let solver = Solver::new(&triple, cfg.solver.clone())?;
    let mut history = Vec::new();
    let outcome = solver.continuation_observed(&f, None, &mut |s| history.push(s.clone()));
    let (report, last, error) = match outcome {
        Ok((state, report)) => (report, Some(state), None),
        Err(fail) => (fail.report, fail.last, Some(fail.error)),
    };
    write_csv(&ctx.path("convergence.csv"), &report.steps)?;
    let monitor = apriori_monitor(&history, &triple).ok();
    if let Some(state) = &last {
        save_state(ctx, &triple, state)?;
    }
    let body = json!({
        "status": if error.is_none() { "converged" } else { "failed" },
        "error": error.as_ref().map(|e| e.to_string()),
        "grid": { "dims": cfg.grid.dims, "periods": cfg.grid.periods },
        "t_reached": last.as_ref().map(|s| s.t),
        "failures": report.failures,
        "steps": report.steps.iter().map(step_json).collect::<Vec<_>>(),
        "monitor": monitor.as_ref().map(monitor_json),
    });
    write_json(&ctx.path("report.json"), "solve", &body)?;
    match error {
        None => {
            let s = report.steps.last().expect("at least the t = 0 step");
            println!(
                "converged: {} steps, residual {:e}, min a1 {:.6}",
                report.steps.len(),
                s.residual_linf,
                s.min_a1
            );
            Ok(())
        }
        Some(e) => Err(e.into()),
    }
}

#[derive(Default)]
struct Checks {
    items: Vec<(String, f64, String, bool)>,
}

impl Checks {
    fn at_most(&mut self, name: &str, value: f64, bound: f64) {
        self.items.push((name.into(), value, format!("<= {bound:e}"), value <= bound));
    }

    fn at_least(&mut self, name: &str, value: f64, bound: f64) {
        self.items.push((name.into(), value, format!(">= {bound:e}"), value >= bound));
    }

    fn below(&mut self, name: &str, value: f64, bound: f64) {
        self.items.push((name.into(), value, format!("< {bound:e}"), value < bound));
    }

    fn flag(&mut self, name: &str, ok: bool) {
        self.items.push((name.into(), if ok { 1.0 } else { 0.0 }, "true".into(), ok));
    }

    fn passed(&self) -> bool {
        self.items.iter().all(|c| c.3)
    }

    fn to_json(&self) -> Value {
        Value::Array(
            self.items
                .iter()
                .map(|(n, v, b, ok)| json!({ "name": n, "value": v, "bound": b, "pass": ok }))
                .collect(),
        )
    }
}

pub fn verify(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let g = grid(cfg)?;
    let triple = build_structure(cfg, &g)?;
    let f = normalize_rhs(&build_rhs(cfg, &g)?, &triple)?;
    let phi_path = cfg.verify_phi.clone().unwrap_or_else(|| ctx.path("phi.field"));
    let phi = FieldFile::load(&phi_path)?.into_scalar(&g, &phi_path)?;
    let omega1 = triple.omega().add(&DjOperator::new(&triple)?.dj_plus(&phi)?);

    let mut checks = Checks::default();
    checks.at_most("residual_linf", ma_residual(&phi, &f, &triple)?.max_abs(), VERIFY_RESIDUAL);
    let pos = positivity_check(&omega1, &triple)?;
    checks.flag("positive", pos.ok);
    let l1 = lemma1_check(&omega1, &f, &triple)?;
    checks.at_most("det_identity", l1.residual_det, VERIFY_IDENTITY);
    checks.at_most("norm_identity", l1.residual_norm, VERIFY_IDENTITY);
    checks.at_most("laplacian_identity", l1.residual_lap, VERIFY_IDENTITY);
    checks.at_least("bound_margin", l1.bound_margin, VERIFY_BOUND);
    checks.below("max_lap_phi0", l1.max_lap_phi0, 2.0);
    let sw = sandwich_check(&omega1, &triple)?;
    checks.flag("sandwich", sw.ok);
    let tr = trace_identity_check(&triple, &omega1)?;
    checks.flag("trace_identity", tr.ok);
    let dec = decomposition_44_check(&phi, &omega1, &triple)?;
    checks.at_most("decomposition", dec.decomposition, VERIFY_DECOMPOSITION);
    checks.at_most("coclosed", dec.coclosed, VERIFY_DECOMPOSITION);
    checks.at_most("wedge_orthogonal", dec.wedge, VERIFY_DECOMPOSITION);
    let state = ContinuationState { t: 1.0, phi: phi.clone(), omega_t: omega1.clone(), residual_linf: 0.0 };
    let monitor = apriori_monitor(std::slice::from_ref(&state), &triple)?;
    checks.flag("monitor_bounded", monitor.bounded() && !monitor.alarm);

    for (name, value, bound, ok) in &checks.items {
        println!("{} {name} = {value:e} ({bound})", if *ok { "pass" } else { "FAIL" });
    }
    let body = json!({
        "phi": phi_path.display().to_string(),
        "passed": checks.passed(),
        "checks": checks.to_json(),
        "norm_convention": "form norm summing a < b; the tensor norm is twice this",
        "printed_margin": l1.printed_margin,
        "side_condition": dec.side_condition,
        "sandwich": { "margin_minus": sw.margin_minus, "margin_plus": sw.margin_plus },
        "trace_identity_discrepancy": tr.max_discrepancy,
        "min_a1": pos.min_a1,
        "monitor": monitor_json(&monitor),
    });
    write_json(&ctx.path("verify.json"), "verify", &body)?;
    if checks.passed() {
        Ok(())
    } else {
        Err(CliError::Failed("verification failed".into()))
    }
}

pub fn manufacture(ctx: &Context, epsilon: Option<f64>) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let eps = epsilon.unwrap_or(cfg.manufacture_epsilon);
    if !(0.0..1.0).contains(&eps) {
        return Err(CliError::invalid("--epsilon", format!("{eps} is outside [0, 1)")));
    }
    let g = grid(cfg)?;
    let m = sine_x0(&g, eps)?;
    FieldFile::scalar(&m.f).save(&ctx.path("f.field"))?;
    FieldFile::scalar(&m.phi).save(&ctx.path("phi_ref.field"))?;
    let l0 = cfg.grid.periods[0];
    let body = json!({
        "epsilon": eps,
        "f": "log(1 - epsilon sin(2 pi x0 / L0))",
        "phi": format!("epsilon (L0 / 2 pi)^2 sin(2 pi x0 / L0), L0 = {l0}"),
        "phi_amplitude": eps * (l0 / (2.0 * PI)).powi(2),
        "min_a1": m.min_a1,
    });
    write_json(&ctx.path("manufacture.json"), "manufacture", &body)?;
    println!("wrote f.field and phi_ref.field (epsilon {eps})");
    Ok(())
}

fn seeded_field(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, amplitude: f64) -> ScalarField {
    let spec = *grid.spec();
    let modes: Vec<([f64; 4], f64, f64)> = (0..6)
        .map(|_| {
            let k = std::array::from_fn(|_| rng.gen_range(-2i32..=2) as f64);
            (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    ScalarField::sample(grid, |x| {
        modes
            .iter()
            .map(|(k, c, p)| {
                let arg: f64 = (0..4).map(|a| k[a] * 2.0 * PI * x[a] / spec.periods[a]).sum();
                amplitude * c * (arg + p).cos() / 6.0
            })
            .sum()
    })
}

/// `omega + d d* psi + harmonic (dx02 - dx13)` with a seeded `psi`.
pub fn forward_taming(triple: &CompatibleTriple, seed: u64, amplitude: f64, harmonic: f64) -> Result<TwoForm, CliError> {
    let g = triple.grid();
    let op = DjOperator::new(triple)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = AntiInvariantField {
        frame: op.frame().clone(),
        c1: seeded_field(g, &mut rng, amplitude),
        c2: seeded_field(g, &mut rng, amplitude),
    };
    let exact = exterior_d(&codifferential(&psi.reconstruct(), triple)?)?;
    let h = TwoForm::constant(g, [0.0, harmonic, 0.0, 0.0, -harmonic, 0.0]);
    Ok(triple.omega().add(&exact).add(&h))
}

pub fn tame(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let g = grid(cfg)?;
    let (big, j, reference): (TwoForm, AcStructure, Option<TwoForm>) = match &cfg.tame {
        TameSource::File(p) => {
            let big = FieldFile::load(p)?.into_two_form(&g, p)?;
            let triple = build_structure(cfg, &g)?;
            (big, triple.j().clone(), None)
        }
        TameSource::Forward { seed, amplitude, harmonic } => {
            let triple = build_structure(cfg, &g)?;
            let big = forward_taming(&triple, *seed, *amplitude, *harmonic)?;
            (big, triple.j().clone(), Some(triple.omega().clone()))
        }
    };
    let (omega, rep) = tame_with(&big, &j, &cfg.tame_config)?;
    FieldFile::two_form(&omega).save(&ctx.path("omega.field"))?;
    let recovery = reference.as_ref().map(|r| omega.max_diff(r));
    let body = json!({
        "kappa_linf": rep.kappa_linf,
        "iterations": rep.iterations,
        "closed_residual": rep.closed_residual,
        "invariance_residual": rep.invariance_residual,
        "min_a1": rep.min_a1,
        "recovery_error": recovery,
    });
    write_json(&ctx.path("tame.json"), "tame", &body)?;
    match recovery {
        Some(e) => println!("compatible form recovered in {} iterations, error {e:e}", rep.iterations),
        None => println!("compatible form found in {} iterations", rep.iterations),
    }
    Ok(())
}

pub fn spectrum(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let g = grid(cfg)?;
    let triple = build_structure(cfg, &g)?;
    let s = DjOperator::new(&triple)?.harmonic_anti_dim()?;
    println!("dimension {}", s.dimension);
    println!("eigenvalues {:?}", s.eigenvalues);
    println!("gap ratio {:e}", s.gap_ratio);
    let body = json!({
        "dimension": s.dimension,
        "eigenvalues": s.eigenvalues,
        "threshold": s.threshold,
        "gap_ratio": s.gap_ratio,
    });
    write_json(&ctx.path("spectrum.json"), "spectrum", &body)
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}
