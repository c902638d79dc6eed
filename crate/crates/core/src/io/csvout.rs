//! Deterministic CSV emission.
//!
//! Every report type documents its column order at the call site; this
//! module only enforces rectangular rows and byte-stable formatting.
//! Floats use Rust's shortest round-trip formatting, so identical runs
//! produce identical bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Shortest round-trip decimal form of a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Builds the CSV text: header row plus one line per row.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::parameter(format!(
                "row {i} has {} cells for {} columns",
                row.len(),
                header.len()
            )));
        }
        if let Some(bad) = row.iter().find(|c| c.contains(',') || c.contains('\n')) {
            return Err(Error::parameter(format!("cell `{bad}` needs quoting; not supported")));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    fs::write(path, csv_string(header, rows)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangular_output_with_header() {
        let text = csv_string(
            &["a", "b"],
            &[vec!["1".into(), "2".into()], vec!["3".into(), "4".into()]],
        )
        .unwrap();
        assert_eq!(text, "a,b\n1,2\n3,4\n");
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(csv_string(&["a", "b"], &[vec!["1".into()]]).is_err());
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-12, 123456.789] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
