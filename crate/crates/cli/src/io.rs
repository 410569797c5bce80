use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use fxeffect::dataset::{ColumnKind, Dataset};
use ndarray::Array2;
use tempfile::NamedTempFile;

use crate::exit;

/// Reads an all-numeric CSV with a header row.
pub fn load_csv(path: &Path, categorical: &[usize]) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let names: Vec<String> = reader
        .headers()
        .with_context(|| format!("cannot read header of {}", path.display()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let d = names.len();
    let mut flat = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: bad record", path.display()))?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                exit::data(format!(
                    "{} line {}: column {:?} holds {field:?}, not a number",
                    path.display(),
                    i + 2,
                    names[j]
                ))
            })?;
            flat.push(v);
        }
    }
    if let Some(&bad) = categorical.iter().find(|&&j| j >= d) {
        return Err(exit::config(format!(
            "categorical column {bad} out of range ({d} columns)"
        )));
    }
    let mut kinds = vec![ColumnKind::Numeric; d];
    for &j in categorical {
        kinds[j] = ColumnKind::Categorical;
    }
    let n = flat.len() / d.max(1);
    let values = Array2::from_shape_vec((n, d), flat).expect("records have equal length");
    Ok(Dataset::with_metadata(values, kinds, Some(names))?)
}

/// CSV text of a dataset. Values use the shortest representation that
/// parses back to the same bits.
pub fn dataset_csv(ds: &Dataset) -> String {
    let mut out = ds.names().join(",");
    out.push('\n');
    for row in ds.values().rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
