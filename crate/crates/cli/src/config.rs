//! TOML run configuration. Unknown keys are rejected.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use akcy_core::solver::{SolverConfig, TameConfig};
use akcy_core::GridSpec;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum Structure {
    Standard,
    Perturbed { seed: u64, amplitude: f64 },
    /// An ac-structure field file; `omega` is the standard form.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rhs {
    Zero,
    /// `f = log(1 - epsilon sin(2 pi x0 / L0))`.
    Sine { epsilon: f64 },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TameSource {
    File(PathBuf),
    /// `Omega = omega + d d* psi` for a seeded anti-invariant `psi`, plus
    /// `harmonic` times the first constant anti-invariant form.
    Forward { seed: u64, amplitude: f64, harmonic: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub structure: Structure,
    pub rhs: Rhs,
    pub solver: SolverConfig,
    pub out_dir: PathBuf,
    /// Potential read by `verify`; defaults to `phi.field` in the output
    /// directory.
    pub verify_phi: Option<PathBuf>,
    pub manufacture_epsilon: f64,
    pub tame: TameSource,
    pub tame_config: TameConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    grid: RawGrid,
    #[serde(default)]
    structure: RawStructure,
    #[serde(default)]
    rhs: RawRhs,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    verify: RawVerify,
    #[serde(default)]
    manufacture: RawManufacture,
    #[serde(default)]
    tame: RawTame,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dims: Vec<usize>,
    periods: Option<Vec<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawStructure {
    kind: Option<String>,
    seed: Option<u64>,
    amplitude: Option<f64>,
    path: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRhs {
    kind: Option<String>,
    epsilon: Option<f64>,
    path: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    newton_tol: Option<f64>,
    newton_max: Option<usize>,
    krylov_tol: Option<f64>,
    krylov_restart: Option<usize>,
    krylov_max_apply: Option<usize>,
    t_step_init: Option<f64>,
    t_step_min: Option<f64>,
    positivity_margin: Option<f64>,
    dealias: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    phi: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawManufacture {
    epsilon: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTame {
    kind: Option<String>,
    path: Option<PathBuf>,
    seed: Option<u64>,
    amplitude: Option<f64>,
    harmonic: Option<f64>,
    obstruction_tol: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
}

fn unit_interval(field: &str, v: f64) -> Result<f64, CliError> {
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(CliError::invalid(field, format!("{v} is outside [0, 1)")))
    }
}

fn need_path(field: &str, p: Option<PathBuf>, base: &Path) -> Result<PathBuf, CliError> {
    let p = p.ok_or_else(|| CliError::invalid(field, "required for kind = \"file\""))?;
    let p = base.join(p);
    if !p.is_file() {
        return Err(CliError::invalid(field, format!("{} does not exist", p.display())));
    }
    Ok(p)
}

fn unexpected<T>(field: &str, v: &Option<T>, kind: &str) -> Result<(), CliError> {
    match v {
        Some(_) => Err(CliError::invalid(field, format!("not used with kind = \"{kind}\""))),
        None => Ok(()),
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    parse_str(&text, &base).map_err(|e| match e {
        CliError::Parse { msg, .. } => CliError::Parse { path: path.to_path_buf(), msg },
        e => e,
    })
}

/// Parses configuration text; relative paths are resolved against `base`.
pub fn parse_str(text: &str, base: &Path) -> Result<RunConfig, CliError> {
    let raw: Raw = toml::from_str(text).map_err(|e| CliError::Parse {
        path: PathBuf::from("<config>"),
        msg: e.to_string().trim_end().to_string(),
    })?;

    let dims: [usize; 4] = raw
        .grid
        .dims
        .try_into()
        .map_err(|_| CliError::invalid("grid.dims", "needs exactly 4 entries"))?;
    let periods: [f64; 4] = match raw.grid.periods {
        Some(p) => p.try_into().map_err(|_| CliError::invalid("grid.periods", "needs exactly 4 entries"))?,
        None => [2.0 * PI; 4],
    };
    let grid = GridSpec { dims, periods };
    grid.validate().map_err(|e| CliError::invalid("grid", e.to_string()))?;

    let s = raw.structure;
    let structure = match s.kind.as_deref().unwrap_or("standard") {
        "standard" => {
            unexpected("structure.seed", &s.seed, "standard")?;
            unexpected("structure.amplitude", &s.amplitude, "standard")?;
            unexpected("structure.path", &s.path, "standard")?;
            Structure::Standard
        }
        "perturbed" => {
            unexpected("structure.path", &s.path, "perturbed")?;
            Structure::Perturbed {
                seed: s.seed.unwrap_or(0),
                amplitude: unit_interval("structure.amplitude", s.amplitude.unwrap_or(0.1))?,
            }
        }
        "file" => {
            unexpected("structure.seed", &s.seed, "file")?;
            unexpected("structure.amplitude", &s.amplitude, "file")?;
            Structure::File(need_path("structure.path", s.path, base)?)
        }
        other => return Err(CliError::invalid("structure.kind", format!("unknown kind `{other}`"))),
    };

    let r = raw.rhs;
    let rhs = match r.kind.as_deref().unwrap_or("zero") {
        "zero" => {
            unexpected("rhs.epsilon", &r.epsilon, "zero")?;
            unexpected("rhs.path", &r.path, "zero")?;
            Rhs::Zero
        }
        "sine" => {
            unexpected("rhs.path", &r.path, "sine")?;
            Rhs::Sine { epsilon: unit_interval("rhs.epsilon", r.epsilon.unwrap_or(0.5))? }
        }
        "file" => {
            unexpected("rhs.epsilon", &r.epsilon, "file")?;
            Rhs::File(need_path("rhs.path", r.path, base)?)
        }
        other => return Err(CliError::invalid("rhs.kind", format!("unknown kind `{other}`"))),
    };

    let d = SolverConfig::default();
    let v = raw.solver;
    let solver = SolverConfig {
        newton_tol: v.newton_tol.unwrap_or(d.newton_tol),
        newton_max: v.newton_max.unwrap_or(d.newton_max),
        krylov_tol: v.krylov_tol.unwrap_or(d.krylov_tol),
        krylov_restart: v.krylov_restart.unwrap_or(d.krylov_restart),
        krylov_max_apply: v.krylov_max_apply.unwrap_or(d.krylov_max_apply),
        t_step_init: v.t_step_init.unwrap_or(d.t_step_init),
        t_step_min: v.t_step_min.unwrap_or(d.t_step_min),
        positivity_margin: v.positivity_margin.unwrap_or(d.positivity_margin),
        dealias: v.dealias.unwrap_or(d.dealias),
    };
    solver.validate().map_err(|e| CliError::invalid("solver", e.to_string()))?;

    let manufacture_epsilon = match raw.manufacture.epsilon {
        Some(e) => unit_interval("manufacture.epsilon", e)?,
        None => match rhs {
            Rhs::Sine { epsilon } => epsilon,
            _ => 0.5,
        },
    };

    let t = raw.tame;
    let tame = match t.kind.as_deref().unwrap_or("forward") {
        "forward" => {
            unexpected("tame.path", &t.path, "forward")?;
            let amplitude = t.amplitude.unwrap_or(0.1);
            if !(amplitude.is_finite() && amplitude >= 0.0) {
                return Err(CliError::invalid("tame.amplitude", "must be non-negative"));
            }
            let harmonic = t.harmonic.unwrap_or(0.0);
            if !harmonic.is_finite() {
                return Err(CliError::invalid("tame.harmonic", "must be finite"));
            }
            TameSource::Forward { seed: t.seed.unwrap_or(0), amplitude, harmonic }
        }
        "file" => {
            unexpected("tame.seed", &t.seed, "file")?;
            unexpected("tame.amplitude", &t.amplitude, "file")?;
            unexpected("tame.harmonic", &t.harmonic, "file")?;
            TameSource::File(need_path("tame.path", t.path, base)?)
        }
        other => return Err(CliError::invalid("tame.kind", format!("unknown kind `{other}`"))),
    };
    let td = TameConfig::default();
    let tame_config = TameConfig {
        obstruction_tol: t.obstruction_tol.unwrap_or(td.obstruction_tol),
        tol: t.tol.unwrap_or(td.tol),
        max_iter: t.max_iter.unwrap_or(td.max_iter),
    };
    if !(tame_config.obstruction_tol > 0.0 && tame_config.tol > 0.0 && tame_config.max_iter > 0) {
        return Err(CliError::invalid("tame", "tolerances and max_iter must be positive"));
    }

    Ok(RunConfig {
        grid,
        structure,
        rhs,
        solver,
        out_dir: base.join(raw.output.dir.unwrap_or_else(|| PathBuf::from("out"))),
        verify_phi: raw.verify.phi.map(|p| base.join(p)),
        manufacture_epsilon,
        tame,
        tame_config,
    })
}

impl RunConfig {
    /// Applies `--seed`: every seeded construction uses it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Structure::Perturbed { seed: s, .. } = &mut self.structure {
            *s = seed;
        }
        if let TameSource::Forward { seed: s, .. } = &mut self.tame {
            *s = seed;
        }
        self
    }
}
