//! In-memory relations: typed rows plus per-row identity and annotation slots.

use crate::ir::annot::Annotation;
use crate::ir::value::{Schema, Value, ValueType};
use serde::Serialize;

/// Stable per-row identity, assigned when a data source is loaded and carried
/// through every downstream operator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RowId {
    pub source: String,
    pub index: u64,
}

impl RowId {
    pub fn new(source: impl Into<String>, index: u64) -> RowId {
        RowId { source: source.into(), index }
    }

    /// Identity of a join output row, derived from both parents so a row can
    /// match several partners without id collisions. Depends only on the
    /// parent ids, so it is stable under row reordering.
    pub fn combine(left: &RowId, right: &RowId) -> RowId {
        let mut h = crate::exec::split::FNV_OFFSET;
        for b in left.source.as_bytes() {
            h = crate::exec::split::fnv1a_step(h, *b);
        }
        for b in left.index.to_le_bytes() {
            h = crate::exec::split::fnv1a_step(h, b);
        }
        for b in right.source.as_bytes() {
            h = crate::exec::split::fnv1a_step(h, *b);
        }
        for b in right.index.to_le_bytes() {
            h = crate::exec::split::fnv1a_step(h, b);
        }
        RowId {
            source: format!("{}+{}", left.source, right.source),
            index: h,
        }
    }
}

/// A named, typed table with one row id and one annotation-slot array per row.
///
/// Invariant: `rows`, `row_ids` and `annotations` have equal length, every row
/// matches the schema (nulls allowed anywhere), and every annotation row has
/// exactly one slot per active inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub schema: Schema,
    pub rows: Vec<Vec<Value>>,
    pub row_ids: Vec<RowId>,
    pub annotations: Vec<Vec<Annotation>>,
}

impl Relation {
    pub fn empty(schema: Schema) -> Relation {
        Relation { schema, rows: Vec::new(), row_ids: Vec::new(), annotations: Vec::new() }
    }

    /// Builds a relation and checks the length and type invariants.
    pub fn new(
        schema: Schema,
        rows: Vec<Vec<Value>>,
        row_ids: Vec<RowId>,
        annotations: Vec<Vec<Annotation>>,
    ) -> Result<Relation, String> {
        if rows.len() != row_ids.len() || rows.len() != annotations.len() {
            return Err(format!(
                "row/ids/annotation length mismatch: {} rows, {} ids, {} annotation rows",
                rows.len(),
                row_ids.len(),
                annotations.len()
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            Relation::check_row(&schema, row).map_err(|e| format!("row {i}: {e}"))?;
        }
        Ok(Relation { schema, rows, row_ids, annotations })
    }

    pub fn check_row(schema: &Schema, row: &[Value]) -> Result<(), String> {
        if row.len() != schema.len() {
            return Err(format!("expected {} columns, got {}", schema.len(), row.len()));
        }
        for ((name, ty), value) in schema.columns().iter().zip(row) {
            match value.value_type() {
                None => {}
                Some(vt) if vt == *ty => {}
                Some(vt) => {
                    return Err(format!("column \"{name}\": expected {ty}, got {vt}"));
                }
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.index_of(name)
    }

    pub fn column_type(&self, name: &str) -> Option<ValueType> {
        self.schema.type_of(name)
    }

    /// Values of one column, in row order.
    pub fn column_values(&self, index: usize) -> impl Iterator<Item = &Value> {
        self.rows.iter().map(move |r| &r[index])
    }

    /// Keeps the rows selected by `keep`, preserving ids and annotations.
    pub fn filter_rows(&self, keep: impl Fn(usize) -> bool) -> Relation {
        let mut out = Relation::empty(self.schema.clone());
        for i in 0..self.n_rows() {
            if keep(i) {
                out.rows.push(self.rows[i].clone());
                out.row_ids.push(self.row_ids[i].clone());
                out.annotations.push(self.annotations[i].clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_ab() -> Schema {
        Schema::new(vec![("a".into(), ValueType::Int), ("b".into(), ValueType::Text)]).unwrap()
    }

    #[test]
    fn new_rejects_type_mismatch() {
        let err = Relation::new(
            schema_ab(),
            vec![vec![Value::Text("x".into()), Value::Text("y".into())]],
            vec![RowId::new("d", 0)],
            vec![vec![]],
        );
        assert!(err.is_err());
    }

    #[test]
    fn nulls_fit_any_column() {
        let rel = Relation::new(
            schema_ab(),
            vec![vec![Value::Null, Value::Null]],
            vec![RowId::new("d", 0)],
            vec![vec![]],
        );
        assert!(rel.is_ok());
    }

    #[test]
    fn combined_ids_distinguish_match_partners() {
        let l = RowId::new("p", 1);
        let r1 = RowId::new("h", 1);
        let r2 = RowId::new("h", 2);
        assert_ne!(RowId::combine(&l, &r1), RowId::combine(&l, &r2));
        assert_eq!(RowId::combine(&l, &r1), RowId::combine(&l, &r1));
    }
}
