//! CSV loading with deterministic type inference.

use crate::ir::relation::{Relation, RowId};
use crate::ir::value::{Schema, Value, ValueType};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: u64, message: String },
    #[error("{path}: duplicate header column \"{column}\"")]
    DuplicateHeader { path: String, column: String },
}

/// Column type from raw cells: Int if every non-empty cell parses as an
/// integer, else Float (finite only), else Bool (`true`/`false`), else Text.
/// All-empty columns infer as Text.
fn infer_type(cells: &[&str]) -> ValueType {
    let filled: Vec<&str> = cells.iter().copied().filter(|c| !c.is_empty()).collect();
    if filled.is_empty() {
        return ValueType::Text;
    }
    if filled.iter().all(|c| c.parse::<i64>().is_ok()) {
        return ValueType::Int;
    }
    if filled.iter().all(|c| matches!(c.parse::<f64>(), Ok(f) if f.is_finite())) {
        return ValueType::Float;
    }
    if filled.iter().all(|c| *c == "true" || *c == "false") {
        return ValueType::Bool;
    }
    ValueType::Text
}

fn parse_cell(cell: &str, ty: ValueType) -> Value {
    if cell.is_empty() {
        return Value::Null;
    }
    match ty {
        ValueType::Int => Value::Int(cell.parse().expect("cell checked during inference")),
        ValueType::Float => Value::Float(cell.parse().expect("cell checked during inference")),
        ValueType::Bool => Value::Bool(cell == "true"),
        ValueType::Text => Value::Text(cell.to_string()),
    }
}

/// Loads an RFC 4180 CSV (header required) into a Relation. Row ids are
/// `(source_name, file order index)`; annotation slots start empty.
pub fn load_csv(path: &Path, source_name: &str) -> Result<Relation, CsvError> {
    let display = path.display().to_string();
    let io_err = |source| CsvError::Io { path: display.clone(), source };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(source),
            other => CsvError::Malformed {
                path: display.clone(),
                line: 0,
                message: format!("{other:?}"),
            },
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CsvError::Malformed {
            path: display.clone(),
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    for (i, h) in headers.iter().enumerate() {
        if headers[..i].contains(h) {
            return Err(CsvError::DuplicateHeader { path: display, column: h.clone() });
        }
    }

    let mut records: Vec<Vec<String>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CsvError::Malformed {
            path: display.clone(),
            line: e.position().map(|p| p.line()).unwrap_or(i as u64 + 2),
            message: e.to_string(),
        })?;
        records.push(record.iter().map(str::to_string).collect());
    }

    let mut columns = Vec::with_capacity(headers.len());
    for (c, name) in headers.iter().enumerate() {
        let cells: Vec<&str> = records.iter().map(|r| r[c].as_str()).collect();
        columns.push((name.clone(), infer_type(&cells)));
    }
    let schema = Schema::new(columns).expect("headers checked for duplicates");

    let rows: Vec<Vec<Value>> = records
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(c, cell)| parse_cell(cell, schema.columns()[c].1))
                .collect()
        })
        .collect();
    let row_ids: Vec<RowId> = (0..rows.len())
        .map(|i| RowId { source: source_name.to_string(), index: i as u64 })
        .collect();
    let annotations = vec![Vec::new(); rows.len()];

    Ok(Relation::new(schema, rows, row_ids, annotations).expect("loader-aligned lengths"))
}

/// Hex SHA-256 of the file bytes; plans address source data by content.
pub fn file_digest(path: &Path) -> Result<String, CsvError> {
    let bytes = fs::read(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn infers_int_float_bool_text() {
        let f = write_csv("i,f,b,t,mixed\n1,1.5,true,abc,1\n-2,2,false,def,x\n");
        let rel = load_csv(f.path(), "src").unwrap();
        let types: Vec<ValueType> =
            rel.schema.columns().iter().map(|(_, t)| *t).collect();
        assert_eq!(
            types,
            vec![
                ValueType::Int,
                ValueType::Float,
                ValueType::Bool,
                ValueType::Text,
                ValueType::Text
            ]
        );
    }

    #[test]
    fn empty_cells_become_null_everywhere() {
        let f = write_csv("a,b\n1,\n,x\n");
        let rel = load_csv(f.path(), "src").unwrap();
        assert_eq!(rel.rows[0][1], Value::Null);
        assert_eq!(rel.rows[1][0], Value::Null);
        assert_eq!(rel.rows[0][0], Value::Int(1));
    }

    #[test]
    fn non_finite_floats_stay_text() {
        let f = write_csv("x\n1.5\ninf\n");
        let rel = load_csv(f.path(), "src").unwrap();
        assert_eq!(rel.schema.columns()[0].1, ValueType::Text);
    }

    #[test]
    fn row_ids_follow_file_order() {
        let f = write_csv("a\n10\n20\n30\n");
        let rel = load_csv(f.path(), "patients").unwrap();
        assert_eq!(rel.row_ids[2], RowId { source: "patients".into(), index: 2 });
    }

    #[test]
    fn digest_tracks_content_not_identity() {
        let f1 = write_csv("a\n1\n");
        let f2 = write_csv("a\n1\n");
        let f3 = write_csv("a\n2\n");
        assert_eq!(file_digest(f1.path()).unwrap(), file_digest(f2.path()).unwrap());
        assert_ne!(file_digest(f1.path()).unwrap(), file_digest(f3.path()).unwrap());
    }
}
