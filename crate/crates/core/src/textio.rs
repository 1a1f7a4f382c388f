//! Helpers for the textual artifact formats.
//!
//! All floating point values on disk use 17 significant decimal digits, which
//! round-trips every f64 exactly.

use std::path::Path;

use crate::error::{Error, Result};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: bad float {s:?}"),
    })
}

pub fn parse_usize(s: &str, path: &Path, line: usize) -> Result<usize> {
    s.parse::<usize>().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: bad integer {s:?}"),
    })
}

/// Checks a `<name> <version>` first line against the expected values.
pub fn check_version(first: Option<&str>, name: &str, version: u32, path: &Path) -> Result<()> {
    let expected = format!("{name} {version}");
    match first {
        Some(line) if line == expected => Ok(()),
        Some(line) => Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("unknown format header {line:?}, expected {expected:?}"),
        }),
        None => Err(Error::Format {
            path: path.to_path_buf(),
            message: "empty file".into(),
        }),
    }
}
