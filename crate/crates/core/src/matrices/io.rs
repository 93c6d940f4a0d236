//! Plain-text matrix files.
//!
//! ```text
//! m n
//! a11 a12 ... a1n
//! ...
//! am1 am2 ... amn
//! ```
//!
//! Header and entries are separated by single spaces, entries are `0` or
//! `1`, every line (the last included) ends in `\n`, and nothing else may
//! appear: no trailing whitespace, no blank lines, no `\r`.

use std::fs;
use std::path::Path;

use super::SensingMatrix;
use crate::error::{Error, Result};

pub fn to_text(mat: &SensingMatrix) -> String {
    let mut out = format!("{} {}\n", mat.rows(), mat.cols());
    for r in mat.entries().chunks(mat.cols()) {
        for (j, &e) in r.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            out.push(if e == 1 { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

pub fn save_matrix(mat: &SensingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_text(mat)).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<SensingMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, &path.display().to_string())
}

/// Parses the text format; `origin` labels error messages.
pub fn parse_matrix(text: &str, origin: &str) -> Result<SensingMatrix> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    if !text.ends_with('\n') {
        let last = text.split('\n').count();
        return Err(err(last, "file must end with a newline".into()));
    }
    let lines: Vec<&str> = text[..text.len() - 1].split('\n').collect();

    let header = lines[0];
    let dims: Vec<&str> = header.split(' ').collect();
    if dims.len() != 2 {
        return Err(err(1, format!("header must be `m n`, got {header:?}")));
    }
    let parse_dim = |s: &str| -> Result<usize> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err(1, format!("bad dimension {s:?}")));
        }
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(err(1, format!("dimension must be a positive integer, got {s:?}"))),
        }
    };
    let m = parse_dim(dims[0])?;
    let n = parse_dim(dims[1])?;
    if lines.len() - 1 != m {
        return Err(err(
            lines.len().min(m + 1) + 1,
            format!("expected {m} matrix rows, found {}", lines.len() - 1),
        ));
    }

    let mut entries = Vec::with_capacity(m * n);
    for (i, line) in lines[1..].iter().enumerate() {
        let lineno = i + 2;
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != n {
            return Err(err(
                lineno,
                format!("expected {n} space-separated entries, found {}", fields.len()),
            ));
        }
        for f in fields {
            match f {
                "0" => entries.push(0),
                "1" => entries.push(1),
                other => {
                    return Err(err(lineno, format!("entry {other:?} is not 0 or 1")));
                }
            }
        }
    }
    SensingMatrix::from_flat(m, n, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of(e: Error) -> usize {
        match e {
            Error::Parse { line, .. } => line,
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn text_round_trip() {
        let m = SensingMatrix::from_rows(vec![vec![1, 0, 1], vec![0, 1, 1]]).unwrap();
        let t = to_text(&m);
        assert_eq!(t, "2 3\n1 0 1\n0 1 1\n");
        assert_eq!(parse_matrix(&t, "mem").unwrap(), m);
    }

    #[test]
    fn rejects_non_binary_entry_with_line() {
        let e = parse_matrix("2 2\n1 0\n0 2\n", "mem").unwrap_err();
        assert_eq!(line_of(e), 3);
    }

    #[test]
    fn rejects_formatting_deviations() {
        for (bad, line) in [
            ("2 2\n1 0\n0 1", 3),      // missing final newline
            ("2 2\n1 0 \n0 1\n", 2),   // trailing space
            ("2 2\n1  0\n0 1\n", 2),   // double space
            ("2  2\n1 0\n0 1\n", 1),   // header spacing
            ("2 2\n1 0\n", 3),         // too few rows
            ("2 2\n1 0\n0 1\n\n", 4),  // extra blank line
            ("2 2\n1 0 1\n0 1\n", 2),  // row too long
            ("2 2\r\n1 0\n0 1\n", 1),  // CR
            ("0 2\n", 1),              // zero dimension
        ] {
            let e = parse_matrix(bad, "mem").unwrap_err();
            assert_eq!(line_of(e), line, "input {bad:?}");
        }
    }
}
