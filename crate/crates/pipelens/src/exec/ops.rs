//! Relational operator kernels.
//!
//! Each kernel computes output rows plus a parent map: for every output row,
//! the (input index, input row index) pairs it was derived from. The engine
//! uses the map to propagate annotations, so kernels stay provenance-free.

use crate::exec::encoders::FittedStats;
use crate::exec::split::split_assign;
use crate::ir::plan::{feature_column, SplitBranch};
use crate::ir::predicate::Predicate;
use crate::ir::relation::{Relation, RowId};
use crate::ir::value::{Schema, Value, ValueType};

/// Parent rows of one output row.
pub type ParentSet = Vec<(usize, usize)>;

/// Kernel output: a relation (annotations unfilled) and its parent map.
#[derive(Debug)]
pub struct Derived {
    pub relation: Relation,
    pub parents: Vec<ParentSet>,
}

impl Derived {
    fn with_capacity(schema: Schema, n: usize) -> Derived {
        Derived {
            relation: Relation {
                schema,
                rows: Vec::with_capacity(n),
                row_ids: Vec::with_capacity(n),
                annotations: Vec::new(),
            },
            parents: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, row: Vec<Value>, row_id: RowId, parents: ParentSet) {
        self.relation.rows.push(row);
        self.relation.row_ids.push(row_id);
        self.parents.push(parents);
    }
}

/// Row-context errors raised inside kernels; the engine adds the node id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpError {
    MissingLabel { row: RowId },
    NonNumeric { column: String, row: RowId },
    Internal(String),
}

impl std::fmt::Display for OpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OpError::MissingLabel { row } => {
                write!(f, "label is null for row ({}, {})", row.source, row.index)
            }
            OpError::NonNumeric { column, row } => write!(
                f,
                "non-numeric value in column \"{column}\" at row ({}, {})",
                row.source, row.index
            ),
            OpError::Internal(m) => f.write_str(m),
        }
    }
}

/// Rows where the predicate evaluates to true. Null comparisons are false,
/// so nulls never survive a comparison filter.
pub fn selection(input: &Relation, predicate: &Predicate) -> Derived {
    let mut out = Derived::with_capacity(input.schema.clone(), input.n_rows());
    for i in 0..input.n_rows() {
        if predicate.eval(&input.schema, &input.rows[i]) {
            out.push(input.rows[i].clone(), input.row_ids[i].clone(), vec![(0, i)]);
        }
    }
    out
}

pub fn projection(input: &Relation, columns: &[String]) -> Result<Derived, OpError> {
    let indices: Vec<usize> = columns
        .iter()
        .map(|c| {
            input
                .column_index(c)
                .ok_or_else(|| OpError::Internal(format!("unknown column \"{c}\"")))
        })
        .collect::<Result<_, _>>()?;
    let schema = Schema::new(
        indices
            .iter()
            .map(|&i| input.schema.columns()[i].clone())
            .collect(),
    )
    .map_err(OpError::Internal)?;
    let mut out = Derived::with_capacity(schema, input.n_rows());
    for i in 0..input.n_rows() {
        let row = indices.iter().map(|&c| input.rows[i][c].clone()).collect();
        out.push(row, input.row_ids[i].clone(), vec![(0, i)]);
    }
    Ok(out)
}

/// Appends a Bool column holding the predicate's value per row.
pub fn extended_projection(
    input: &Relation,
    column: &str,
    predicate: &Predicate,
) -> Result<Derived, OpError> {
    let mut columns = input.schema.columns().to_vec();
    columns.push((column.to_string(), ValueType::Bool));
    let schema = Schema::new(columns).map_err(OpError::Internal)?;
    let mut out = Derived::with_capacity(schema, input.n_rows());
    for i in 0..input.n_rows() {
        let mut row = input.rows[i].clone();
        row.push(Value::Bool(predicate.eval(&input.schema, &input.rows[i])));
        out.push(row, input.row_ids[i].clone(), vec![(0, i)]);
    }
    Ok(out)
}

/// Inner equi-join, output ordered by (left row index, right row index).
/// Null keys are ordinary values here: Null matches Null.
pub fn join(left: &Relation, right: &Relation, on: &str) -> Result<Derived, OpError> {
    let schema = crate::ir::plan::join_schema(&left.schema, &right.schema, on)
        .map_err(OpError::Internal)?;
    let l_key = left.column_index(on).expect("checked by join_schema");
    let r_key = right.column_index(on).expect("checked by join_schema");
    let r_drop = r_key;
    let mut out = Derived::with_capacity(schema.clone(), left.n_rows());
    for li in 0..left.n_rows() {
        for ri in 0..right.n_rows() {
            if !left.rows[li][l_key].eq_widened(&right.rows[ri][r_key]) {
                continue;
            }
            let mut row: Vec<Value> = left.rows[li].clone();
            for (ci, v) in right.rows[ri].iter().enumerate() {
                if ci != r_drop {
                    row.push(v.clone());
                }
            }
            // key column may widen to Float when the sides disagree
            if schema.columns()[l_key].1 == ValueType::Float {
                if let Value::Int(n) = row[l_key] {
                    row[l_key] = Value::Float(n as f64);
                }
            }
            let row_id = RowId::combine(&left.row_ids[li], &right.row_ids[ri]);
            out.push(row, row_id, vec![(0, li), (1, ri)]);
        }
    }
    Ok(out)
}

/// Horizontal feature-block concatenation. Inputs must be row-aligned: same
/// length, same row ids in the same order.
pub fn concat(left: &Relation, right: &Relation) -> Result<Derived, OpError> {
    if left.row_ids != right.row_ids {
        return Err(OpError::Internal(format!(
            "concat inputs are not row-aligned ({} vs {} rows)",
            left.n_rows(),
            right.n_rows()
        )));
    }
    let mut columns = left.schema.columns().to_vec();
    columns.extend(right.schema.columns().iter().cloned());
    let schema = Schema::new(columns).map_err(OpError::Internal)?;
    let mut out = Derived::with_capacity(schema, left.n_rows());
    for i in 0..left.n_rows() {
        let mut row = left.rows[i].clone();
        row.extend(right.rows[i].iter().cloned());
        out.push(row, left.row_ids[i].clone(), vec![(0, i), (1, i)]);
    }
    Ok(out)
}

/// Hash-partitions rows into (train, test) by per-row assignment.
pub fn split(input: &Relation, test_fraction: f64, seed: u64) -> (Derived, Derived) {
    let mut train = Derived::with_capacity(input.schema.clone(), input.n_rows());
    let mut test = Derived::with_capacity(input.schema.clone(), input.n_rows());
    for i in 0..input.n_rows() {
        let target = match split_assign(&input.row_ids[i], seed, test_fraction) {
            SplitBranch::Train => &mut train,
            SplitBranch::Test => &mut test,
        };
        target.push(input.rows[i].clone(), input.row_ids[i].clone(), vec![(0, i)]);
    }
    (train, test)
}

/// Extracts a single Bool "label" column: true where the value's display
/// form equals `positive`. A null label is an error, not a class.
pub fn label_extract(input: &Relation, column: &str, positive: &str) -> Result<Derived, OpError> {
    let ci = input
        .column_index(column)
        .ok_or_else(|| OpError::Internal(format!("unknown column \"{column}\"")))?;
    let schema = Schema::new(vec![("label".into(), ValueType::Bool)]).expect("static");
    let mut out = Derived::with_capacity(schema, input.n_rows());
    for i in 0..input.n_rows() {
        let value = &input.rows[i][ci];
        if value.is_null() {
            return Err(OpError::MissingLabel { row: input.row_ids[i].clone() });
        }
        let label = value.display_string() == positive;
        out.push(vec![Value::Bool(label)], input.row_ids[i].clone(), vec![(0, i)]);
    }
    Ok(out)
}

/// Applies fitted statistics tuple-at-a-time, emitting the feature block for
/// one featurize entry. Warnings are rendered with row context.
pub fn transform(
    stats: &FittedStats,
    input: &Relation,
    column: &str,
    occurrence: u32,
) -> Result<(Derived, Vec<String>), OpError> {
    let ci = input
        .column_index(column)
        .ok_or_else(|| OpError::Internal(format!("unknown column \"{column}\"")))?;
    let width = stats.output_width();
    let schema = Schema::new(
        (0..width)
            .map(|i| (feature_column(column, occurrence, i), ValueType::Float))
            .collect(),
    )
    .map_err(OpError::Internal)?;
    let mut out = Derived::with_capacity(schema, input.n_rows());
    let mut warnings = Vec::new();
    for i in 0..input.n_rows() {
        let value = &input.rows[i][ci];
        let (encoded, warning) = stats.transform(value).map_err(|_| OpError::NonNumeric {
            column: column.to_string(),
            row: input.row_ids[i].clone(),
        })?;
        if let Some(w) = warning {
            warnings.push(format!(
                "column \"{column}\" row ({}, {}): {w}",
                input.row_ids[i].source, input.row_ids[i].index
            ));
        }
        out.push(
            encoded.into_iter().map(Value::Float).collect(),
            input.row_ids[i].clone(),
            vec![(0, i)],
        );
    }
    Ok((out, warnings))
}
