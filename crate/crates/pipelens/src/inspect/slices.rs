//! Slice validation: per-group metrics over the pre-featurization test rows.

use crate::ir::relation::{Relation, RowId};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("prediction row ({}, {}) is missing from the test relation", row.source, row.index)]
pub struct AlignmentError {
    pub row: RowId,
}

/// Per-group accuracy, sliced by a column of the test relation.
///
/// Predictions and labels are aligned to test rows via row ids; groups with
/// zero rows are omitted, rows with a null group value are skipped.
pub fn slice_scores(
    predictions: &Relation,
    labels: &Relation,
    test: &Relation,
    column: &str,
) -> Result<BTreeMap<String, f64>, AlignmentError> {
    let group_ci = test.column_index(column);
    let mut groups: BTreeMap<&RowId, Option<String>> = BTreeMap::new();
    for (i, row_id) in test.row_ids.iter().enumerate() {
        let group = group_ci.and_then(|ci| {
            let v = &test.rows[i][ci];
            (!v.is_null()).then(|| v.display_string())
        });
        groups.insert(row_id, group);
    }

    let pred_ci = predictions.column_index("prediction").expect("predict output shape");
    let label_ci = labels.column_index("label").expect("label block shape");
    let mut label_by_id: BTreeMap<&RowId, bool> = BTreeMap::new();
    for (i, row_id) in labels.row_ids.iter().enumerate() {
        if let Some(b) = labels.rows[i][label_ci].as_bool() {
            label_by_id.insert(row_id, b);
        }
    }

    let mut correct: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for (i, row_id) in predictions.row_ids.iter().enumerate() {
        let group = groups
            .get(row_id)
            .ok_or_else(|| AlignmentError { row: row_id.clone() })?;
        let Some(group) = group else { continue };
        let label = *label_by_id
            .get(row_id)
            .ok_or_else(|| AlignmentError { row: row_id.clone() })?;
        let predicted = predictions.rows[i][pred_ci].as_bool().expect("bool prediction");
        let entry = correct.entry(group.clone()).or_insert((0, 0));
        entry.1 += 1;
        entry.0 += u64::from(predicted == label);
    }

    Ok(correct
        .into_iter()
        .map(|(group, (hits, total))| (group, hits as f64 / total as f64))
        .collect())
}
