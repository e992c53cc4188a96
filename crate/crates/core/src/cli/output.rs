use std::path::{Path, PathBuf};

use serde::Serialize;

use super::CliError;

/// Collects a command's report and writes it once the command is done, so
/// a failed expectation still leaves the full report behind.
#[derive(Default)]
pub struct Sink {
    report: Option<Vec<u8>>,
    sidecar: Option<Vec<u8>>,
}

impl Sink {
    pub fn json<T: Serialize>(&mut self, value: &T) -> Result<(), CliError> {
        self.report = Some(to_json(value)?);
        Ok(())
    }

    /// A CSV report, plus the resolved config echoed next to it.
    pub fn csv<T: Serialize>(&mut self, header: &[&str], rows: &[Vec<String>], echo: &T) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Internal(e.to_string());
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row).map_err(io)?;
        }
        self.report = Some(w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?);
        self.sidecar = Some(to_json(echo)?);
        Ok(())
    }

    pub fn into_report(self) -> Option<Report> {
        self.report.map(|body| Report { body, sidecar: self.sidecar })
    }
}

/// A finished report: the main file and, for CSV, the config echo.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub body: Vec<u8>,
    pub sidecar: Option<Vec<u8>>,
}

impl Report {
    /// Writes to `out` (and `<out>.config.json`), or the body to stdout.
    pub fn write(&self, out: Option<&Path>) -> Result<(), CliError> {
        let write = |path: &Path, bytes: &[u8]| {
            std::fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
        };
        match out {
            Some(path) => {
                write(path, &self.body)?;
                if let Some(side) = &self.sidecar {
                    write(&sidecar_path(path), side)?;
                }
            }
            None => {
                use std::io::Write;
                std::io::stdout().write_all(&self.body).map_err(|e| CliError::Internal(e.to_string()))?;
            }
        }
        Ok(())
    }
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".config.json");
    PathBuf::from(p)
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}
