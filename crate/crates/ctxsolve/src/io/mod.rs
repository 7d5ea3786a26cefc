//! File formats behind the CLI: the line-delimited collection and ground
//! truth formats, the fusion model file, the binary score-matrix cache, and
//! the prediction / trace / report outputs.
//!
//! Floats are serialized with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every value bit for bit. All writers go
//! through [`atomic_write`] (temp file plus rename).

pub mod collection;
pub mod model_file;
pub mod records;
pub mod scores;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "ctxsolve/1";

/// Write via a temp file in the same directory, then rename over the target.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}tmp{}",
        path.extension()
            .map(|e| format!("{}.", e.to_string_lossy()))
            .unwrap_or_default(),
        std::process::id()
    ));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn parse_error(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub(crate) fn parse_usize(token: &str, line: usize, what: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| parse_error(line, format!("bad {what} '{token}'")))
}

pub(crate) fn parse_f64(token: &str, line: usize, what: &str) -> Result<f64> {
    token
        .parse()
        .map_err(|_| parse_error(line, format!("bad {what} '{token}'")))
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Split a file into (1-based line number, tokens), skipping blank lines.
pub(crate) fn tokenized_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, toks)| !toks.is_empty())
}

/// Check the two-token file preamble: version string plus kind.
pub(crate) fn expect_header(tokens: &[&str], line: usize, kind: &str) -> Result<()> {
    if tokens.len() < 2 || tokens[0] != FORMAT_VERSION || tokens[1] != kind {
        return Err(parse_error(
            line,
            format!("expected '{FORMAT_VERSION} {kind}' header"),
        ));
    }
    Ok(())
}
