//! Binary field files: a short text header followed by raw little-endian
//! `f64` values, one component after another, each in C order with axis 0
//! varying slowest.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use akcy_core::{AcStructure, Grid, GridSpec, OneForm, ScalarField, TwoForm};
use nalgebra::Matrix4;

use crate::error::CliError;
use crate::output::write_atomic;

const MAGIC: &str = "akcy-field 1";
const TERMINATOR: &str = "end";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Scalar,
    OneForm,
    TwoForm,
    AcStructure,
}

impl FieldKind {
    pub fn components(self) -> usize {
        match self {
            FieldKind::Scalar => 1,
            FieldKind::OneForm => 4,
            FieldKind::TwoForm => 6,
            FieldKind::AcStructure => 16,
        }
    }

    fn name(self) -> &'static str {
        match self {
            FieldKind::Scalar => "scalar",
            FieldKind::OneForm => "1-form",
            FieldKind::TwoForm => "2-form",
            FieldKind::AcStructure => "ac-structure",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [FieldKind::Scalar, FieldKind::OneForm, FieldKind::TwoForm, FieldKind::AcStructure]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A field as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub kind: FieldKind,
    pub spec: GridSpec,
    /// `components[c][i]`.
    pub components: Vec<Vec<f64>>,
}

fn format_err(path: &Path, msg: impl Into<String>) -> CliError {
    CliError::Format { path: path.to_path_buf(), msg: msg.into() }
}

impl FieldFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.spec.dims;
        let p = self.spec.periods;
        let header = format!(
            "{MAGIC}\nkind {}\ncomponents {}\ndims {} {} {} {}\nperiods {:?} {:?} {:?} {:?}\n\
             value_type f64\nbyte_order little-endian\nlayout C-order, axis 0 slowest\n{TERMINATOR}\n",
            self.kind,
            self.kind.components(),
            d[0],
            d[1],
            d[2],
            d[3],
            p[0],
            p[1],
            p[2],
            p[3],
        );
        let n: usize = self.components.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(header.len() + 8 * n);
        out.extend_from_slice(header.as_bytes());
        for c in &self.components {
            for v in c {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, CliError> {
        let mut lines = Vec::new();
        let mut pos = 0;
        loop {
            let rest = &bytes[pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| format_err(path, "header not terminated"))?;
            let line = std::str::from_utf8(&rest[..end]).map_err(|_| format_err(path, "header is not UTF-8"))?;
            pos += end + 1;
            if line == TERMINATOR {
                break;
            }
            lines.push(line.to_string());
            if lines.len() > 16 {
                return Err(format_err(path, "header too long"));
            }
        }
        if lines.first().map(String::as_str) != Some(MAGIC) {
            return Err(format_err(path, "not a field file"));
        }
        let mut kind = None;
        let mut count = None;
        let mut dims = None;
        let mut periods = None;
        for line in &lines[1..] {
            let (key, value) = line.split_once(' ').ok_or_else(|| format_err(path, format!("bad header line `{line}`")))?;
            match key {
                "kind" => kind = Some(FieldKind::parse(value).ok_or_else(|| format_err(path, format!("unknown kind `{value}`")))?),
                "components" => count = value.parse::<usize>().ok(),
                "dims" => dims = parse4::<usize>(value),
                "periods" => periods = parse4::<f64>(value),
                "value_type" if value == "f64" => {}
                "byte_order" if value == "little-endian" => {}
                "layout" if value == "C-order, axis 0 slowest" => {}
                _ => return Err(format_err(path, format!("unsupported header line `{line}`"))),
            }
        }
        let kind = kind.ok_or_else(|| format_err(path, "missing kind"))?;
        let dims = dims.ok_or_else(|| format_err(path, "missing or malformed dims"))?;
        let periods = periods.ok_or_else(|| format_err(path, "missing or malformed periods"))?;
        if count != Some(kind.components()) {
            return Err(format_err(path, format!("{kind} needs {} components", kind.components())));
        }
        let spec = GridSpec::new(dims, periods).map_err(|e| format_err(path, e.to_string()))?;
        let points = spec.len();
        let payload = &bytes[pos..];
        let expected = points * kind.components() * 8;
        if payload.len() != expected {
            return Err(format_err(path, format!("payload has {} bytes, header implies {expected}", payload.len())));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let components = values.chunks(points).map(<[f64]>::to_vec).collect();
        Ok(FieldFile { kind, spec, components })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, |w| w.write_all(&self.to_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn expect_kind(self, kind: FieldKind, path: &Path) -> Result<Self, CliError> {
        if self.kind != kind {
            return Err(format_err(path, format!("expected a {kind} field, found {}", self.kind)));
        }
        Ok(self)
    }

    pub fn grid(&self) -> Result<Arc<Grid>, CliError> {
        Grid::new(self.spec).map_err(CliError::Core)
    }

    pub fn scalar(f: &ScalarField) -> Self {
        FieldFile {
            kind: FieldKind::Scalar,
            spec: *f.grid().spec(),
            components: vec![f.values().to_vec()],
        }
    }

    pub fn one_form(a: &OneForm) -> Self {
        FieldFile {
            kind: FieldKind::OneForm,
            spec: *a.grid().spec(),
            components: a.components().to_vec(),
        }
    }

    pub fn two_form(a: &TwoForm) -> Self {
        FieldFile {
            kind: FieldKind::TwoForm,
            spec: *a.grid().spec(),
            components: a.components().to_vec(),
        }
    }

    /// `J[(a, b)]` is component `4 a + b`.
    pub fn ac_structure(j: &AcStructure) -> Self {
        let components = (0..16)
            .map(|k| j.matrices().iter().map(|m| m[(k / 4, k % 4)]).collect())
            .collect();
        FieldFile { kind: FieldKind::AcStructure, spec: *j.grid().spec(), components }
    }

    /// Converts to a scalar field on `grid`, which must have the same spec.
    pub fn into_scalar(self, grid: &Arc<Grid>, path: &Path) -> Result<ScalarField, CliError> {
        let f = self.expect_kind(FieldKind::Scalar, path)?.on(grid, path)?;
        let v = f.components.into_iter().next().expect("one component");
        ScalarField::new(grid.clone(), v).map_err(CliError::Core)
    }

    pub fn into_two_form(self, grid: &Arc<Grid>, path: &Path) -> Result<TwoForm, CliError> {
        let f = self.expect_kind(FieldKind::TwoForm, path)?.on(grid, path)?;
        let comps: [Vec<f64>; 6] = f.components.try_into().expect("six components");
        TwoForm::from_components(grid.clone(), comps).map_err(CliError::Core)
    }

    pub fn into_ac_structure(self, grid: &Arc<Grid>, path: &Path) -> Result<AcStructure, CliError> {
        let f = self.expect_kind(FieldKind::AcStructure, path)?.on(grid, path)?;
        let mats = (0..grid.len())
            .map(|i| Matrix4::from_fn(|a, b| f.components[4 * a + b][i]))
            .collect();
        AcStructure::new(grid.clone(), mats).map_err(CliError::Core)
    }

    fn on(self, grid: &Grid, path: &Path) -> Result<Self, CliError> {
        if self.spec != *grid.spec() {
            return Err(format_err(path, "field grid differs from the configured grid"));
        }
        Ok(self)
    }
}

fn parse4<T: std::str::FromStr>(s: &str) -> Option<[T; 4]> {
    let v: Vec<T> = s.split(' ').map(str::parse).collect::<Result<_, _>>().ok()?;
    v.try_into().ok()
}
