use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Where results go: a file, or stdout when no path is given.
#[derive(Debug, Clone)]
pub struct Sink {
    pub path: Option<PathBuf>,
    pub format: Format,
}

impl Sink {
    /// Explicit format wins; otherwise a `.json` extension selects JSON.
    pub fn new(path: Option<PathBuf>, format: Option<Format>, default: Format) -> Self {
        let format = format.unwrap_or_else(|| match path.as_deref().and_then(Path::extension) {
            Some(e) if e == "json" => Format::Json,
            Some(e) if e == "csv" => Format::Csv,
            _ => default,
        });
        Sink { path, format }
    }

    fn writer(&self) -> Result<Box<dyn Write>, CliError> {
        Ok(match &self.path {
            Some(p) => Box::new(
                File::create(p).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display())))?,
            ),
            None => Box::new(io::stdout().lock()),
        })
    }

    pub fn write_json<T: Serialize>(&self, value: &T) -> Result<(), CliError> {
        let mut w = self.writer()?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Config(e.to_string()))?;
        writeln!(w).map_err(io_err)?;
        Ok(())
    }

    pub fn write_csv(&self, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(self.writer()?);
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush().map_err(io_err)?;
        Ok(())
    }

    /// CSV when asked for, otherwise the JSON document.
    pub fn write<T: Serialize>(&self, value: &T, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        match self.format {
            Format::Json => self.write_json(value),
            Format::Csv => self.write_csv(header, rows),
        }
    }
}

fn io_err(e: io::Error) -> CliError {
    CliError::Config(format!("write failed: {e}"))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Config(format!("write failed: {e}"))
}

/// 17 significant digits; round-trips every double.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.5), "1.5000000000000000e0");
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(Sink::new(Some("a.json".into()), None, Format::Csv).format, Format::Json);
        assert_eq!(Sink::new(Some("a.csv".into()), None, Format::Json).format, Format::Csv);
        assert_eq!(Sink::new(Some("a.json".into()), Some(Format::Csv), Format::Json).format, Format::Csv);
        assert_eq!(Sink::new(None, None, Format::Json).format, Format::Json);
    }
}
