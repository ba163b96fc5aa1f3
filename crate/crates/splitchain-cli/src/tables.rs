//! CSV output helpers. Every table has a frozen column order (documented
//! on the experiment that writes it); numeric cells use the shortest
//! representation that parses back to the same float.

use std::path::Path;

/// Canonical float cell: round-trip exact, no locale, no padding.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Optional float cell; absent values serialize as the empty string.
pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len(), "row width mismatch in {path:?}");
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
