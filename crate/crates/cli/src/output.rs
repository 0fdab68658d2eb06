//! Atomic file output, the convergence CSV and JSON reports.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use akcy_core::solver::StepRecord;
use serde::Serialize;

use crate::error::CliError;

pub const CSV_HEADER: &str = "step,t,newton_iters,residual_linf,residual_l2,min_a1,max_trace,phi_linf";
pub const SCHEMA: u32 = 1;

/// Writes through a temporary file in the same directory, then renames it
/// over `path`.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let file = File::create(&tmp)?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        let file = w.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub fn write_csv(path: &Path, steps: &[StepRecord]) -> Result<(), CliError> {
    write_atomic(path, |w| {
        writeln!(w, "{CSV_HEADER}")?;
        for (k, s) in steps.iter().enumerate() {
            writeln!(
                w,
                "{k},{},{},{:e},{:e},{},{},{:e}",
                s.t, s.newton_iters, s.residual_linf, s.residual_l2, s.min_a1, s.max_trace, s.phi_linf
            )?;
        }
        Ok(())
    })
}

/// Serializes `report` with a leading `"schema": 1`.
pub fn write_json<T: Serialize>(path: &Path, command: &str, report: &T) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Envelope<'a, T> {
        schema: u32,
        command: &'a str,
        #[serde(flatten)]
        report: &'a T,
    }
    let text = serde_json::to_string_pretty(&Envelope { schema: SCHEMA, command, report })
        .map_err(|e| CliError::Failed(format!("cannot serialize report: {e}")))?;
    write_atomic(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")
    })
}
