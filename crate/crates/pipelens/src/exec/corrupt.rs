//! Synthetic data corruption for robustness what-ifs.
//!
//! Row selection is a deterministic pseudo-random draw: the
//! round(fraction * n) rows with the smallest seeded row hashes. The same
//! scheme as train/test splitting, so corruption commutes with row order.

use crate::exec::ops::{Derived, OpError, ParentSet};
use crate::exec::split::{fnv1a_extend, row_hash};
use crate::ir::plan::CorruptionKind;
use crate::ir::relation::Relation;
use crate::ir::value::{Schema, Value, ValueType};

/// Indices of the rows a corruption with this fraction and seed modifies.
pub fn chosen_rows(relation: &Relation, fraction: f64, seed: u64) -> Vec<usize> {
    let n = relation.n_rows();
    let k = (fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (row_hash(&relation.row_ids[i], seed), i));
    let mut chosen = order[..k.min(n)].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Applies one corruption to a relation. Output rows map 1:1 to input rows.
pub fn corrupt(
    input: &Relation,
    column: &str,
    kind: &CorruptionKind,
    fraction: f64,
    seed: u64,
) -> Result<Derived, OpError> {
    let ci = input
        .column_index(column)
        .ok_or_else(|| OpError::Internal(format!("unknown column \"{column}\"")))?;
    let ty = input.schema.columns()[ci].1;

    let out_ty = match kind {
        CorruptionKind::Outliers { .. } => match ty {
            ValueType::Int | ValueType::Float => ValueType::Float,
            other => {
                return Err(OpError::Internal(format!(
                    "outlier corruption needs a numeric column, \"{column}\" is {other}"
                )))
            }
        },
        CorruptionKind::CategorySwap if ty != ValueType::Text => {
            return Err(OpError::Internal(format!(
                "category swap needs a text column, \"{column}\" is {ty}"
            )))
        }
        _ => ty,
    };
    let schema = Schema::new(
        input
            .schema
            .columns()
            .iter()
            .enumerate()
            .map(|(i, (n, t))| (n.clone(), if i == ci { out_ty } else { *t }))
            .collect(),
    )
    .map_err(OpError::Internal)?;

    let categories: Vec<String> = match kind {
        CorruptionKind::CategorySwap => {
            let mut cats: Vec<String> = input
                .column_values(ci)
                .filter(|v| !v.is_null())
                .map(Value::display_string)
                .collect();
            cats.sort();
            cats.dedup();
            cats
        }
        _ => Vec::new(),
    };

    let chosen = chosen_rows(input, fraction, seed);
    let mut mask = vec![false; input.n_rows()];
    for i in chosen {
        mask[i] = true;
    }

    let mut rows = Vec::with_capacity(input.n_rows());
    let mut parents: Vec<ParentSet> = Vec::with_capacity(input.n_rows());
    for i in 0..input.n_rows() {
        let mut row = input.rows[i].clone();
        // the whole column widens so untouched rows still fit the schema
        if out_ty == ValueType::Float {
            if let Value::Int(n) = row[ci] {
                row[ci] = Value::Float(n as f64);
            }
        }
        if mask[i] && !row[ci].is_null() {
            row[ci] = corrupt_value(&row[ci], kind, &categories, &input.row_ids[i], seed);
        } else if mask[i] && matches!(kind, CorruptionKind::MissingValues) {
            // already null, nothing to erase
        }
        rows.push(row);
        parents.push(vec![(0, i)]);
    }
    let relation = Relation {
        schema,
        rows,
        row_ids: input.row_ids.clone(),
        annotations: Vec::new(),
    };
    Ok(Derived { relation, parents })
}

fn corrupt_value(
    value: &Value,
    kind: &CorruptionKind,
    categories: &[String],
    row_id: &crate::ir::relation::RowId,
    seed: u64,
) -> Value {
    match kind {
        CorruptionKind::MissingValues => Value::Null,
        CorruptionKind::Outliers { factor } => match value {
            Value::Float(f) => Value::Float(f * factor),
            Value::Int(n) => Value::Float(*n as f64 * factor),
            other => other.clone(),
        },
        CorruptionKind::CategorySwap => {
            let current = value.display_string();
            let others: Vec<&String> = categories.iter().filter(|c| **c != current).collect();
            if others.is_empty() {
                return value.clone();
            }
            // a second hash round decorrelates the pick from row selection
            let h = fnv1a_extend(row_hash(row_id, seed), b"swap");
            Value::Text(others[(h % others.len() as u64) as usize].clone())
        }
    }
}
