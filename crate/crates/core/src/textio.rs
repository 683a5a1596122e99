//! Shared helpers for the plain-text file formats.

use std::path::Path;

use crate::error::Error;

/// 17 significant digits; parses back to the identical `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub(crate) fn parse_floats(path: &Path, line: usize, fields: &[&str]) -> Result<Vec<f64>, Error> {
    fields
        .iter()
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| parse_err(path, line, format!("bad number `{f}`: {e}")))
        })
        .collect()
}
