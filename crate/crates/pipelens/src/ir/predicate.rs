//! Predicate expression trees for selections and extended projections.
//!
//! Three-valued logic is collapsed to two-valued: a comparison with a null
//! operand is false, except for the explicit is-null test.

use crate::ir::value::{Schema, Value};
use serde::Serialize;
use std::cmp::Ordering;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    Cmp { column: String, op: CmpOp, literal: Value },
    IsNull { column: String },
    And { left: Box<Predicate>, right: Box<Predicate> },
    Or { left: Box<Predicate>, right: Box<Predicate> },
    Not { inner: Box<Predicate> },
}

impl Predicate {
    /// Every column the predicate reads, for schema validation.
    pub fn columns(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Predicate::Cmp { column, .. } | Predicate::IsNull { column } => {
                out.push(column)
            }
            Predicate::And { left, right } | Predicate::Or { left, right } => {
                left.collect_columns(out);
                right.collect_columns(out);
            }
            Predicate::Not { inner } => inner.collect_columns(out),
        }
    }

    /// Checks that every referenced column exists and every comparison
    /// literal is type-compatible with its column.
    pub fn check(&self, schema: &Schema) -> Result<(), String> {
        match self {
            Predicate::Cmp { column, op, literal } => {
                let ty = schema
                    .type_of(column)
                    .ok_or_else(|| format!("unknown column \"{column}\""))?;
                let compatible = match literal {
                    Value::Null => false,
                    Value::Bool(_) => ty == crate::ir::value::ValueType::Bool,
                    Value::Int(_) | Value::Float(_) => matches!(
                        ty,
                        crate::ir::value::ValueType::Int | crate::ir::value::ValueType::Float
                    ),
                    Value::Text(_) => ty == crate::ir::value::ValueType::Text,
                };
                if !compatible {
                    return Err(format!(
                        "column \"{column}\" ({ty}) is not comparable with literal {literal} via {}",
                        op.symbol()
                    ));
                }
                Ok(())
            }
            Predicate::IsNull { column } => schema
                .type_of(column)
                .map(|_| ())
                .ok_or_else(|| format!("unknown column \"{column}\"")),
            Predicate::And { left, right } | Predicate::Or { left, right } => {
                left.check(schema)?;
                right.check(schema)
            }
            Predicate::Not { inner } => inner.check(schema),
        }
    }

    /// Evaluates against one row. Columns must have been checked against the
    /// schema beforehand; unknown columns evaluate to false.
    pub fn eval(&self, schema: &Schema, row: &[Value]) -> bool {
        match self {
            Predicate::Cmp { column, op, literal } => {
                let Some(idx) = schema.index_of(column) else { return false };
                let value = &row[idx];
                if value.is_null() || literal.is_null() {
                    return false;
                }
                match op {
                    CmpOp::Eq => value.eq_widened(literal),
                    CmpOp::Ne => !value.eq_widened(literal),
                    _ => match value.cmp_widened(literal) {
                        Some(ord) => match op {
                            CmpOp::Lt => ord == Ordering::Less,
                            CmpOp::Le => ord != Ordering::Greater,
                            CmpOp::Gt => ord == Ordering::Greater,
                            CmpOp::Ge => ord != Ordering::Less,
                            CmpOp::Eq | CmpOp::Ne => unreachable!(),
                        },
                        None => false,
                    },
                }
            }
            Predicate::IsNull { column } => match schema.index_of(column) {
                Some(idx) => row[idx].is_null(),
                None => false,
            },
            Predicate::And { left, right } => {
                left.eval(schema, row) && right.eval(schema, row)
            }
            Predicate::Or { left, right } => {
                left.eval(schema, row) || right.eval(schema, row)
            }
            Predicate::Not { inner } => !inner.eval(schema, row),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Cmp { column, op, literal } => {
                let lit = match literal {
                    Value::Text(s) => format!("'{s}'"),
                    other => other.display_string(),
                };
                write!(f, "{column} {} {lit}", op.symbol())
            }
            Predicate::IsNull { column } => write!(f, "{column} is null"),
            Predicate::And { left, right } => write!(f, "({left} and {right})"),
            Predicate::Or { left, right } => write!(f, "({left} or {right})"),
            Predicate::Not { inner } => write!(f, "not {inner}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::value::ValueType;

    fn schema() -> Schema {
        Schema::new(vec![
            ("a".into(), ValueType::Int),
            ("s".into(), ValueType::Text),
        ])
        .unwrap()
    }

    #[test]
    fn null_operand_makes_comparison_false() {
        let p = Predicate::Cmp { column: "a".into(), op: CmpOp::Gt, literal: Value::Int(1) };
        assert!(!p.eval(&schema(), &[Value::Null, Value::Null]));
        assert!(p.eval(&schema(), &[Value::Int(2), Value::Null]));
        // != is also false on null, not "unknown therefore true"
        let ne = Predicate::Cmp { column: "a".into(), op: CmpOp::Ne, literal: Value::Int(1) };
        assert!(!ne.eval(&schema(), &[Value::Null, Value::Null]));
    }

    #[test]
    fn is_null_sees_through_the_collapse() {
        let p = Predicate::IsNull { column: "s".into() };
        assert!(p.eval(&schema(), &[Value::Int(1), Value::Null]));
        assert!(!p.eval(&schema(), &[Value::Int(1), Value::Text("x".into())]));
    }

    #[test]
    fn check_rejects_type_mismatch() {
        let p = Predicate::Cmp { column: "s".into(), op: CmpOp::Lt, literal: Value::Int(3) };
        assert!(p.check(&schema()).is_err());
        let ok = Predicate::Cmp { column: "a".into(), op: CmpOp::Lt, literal: Value::Float(3.5) };
        assert!(ok.check(&schema()).is_ok());
    }
}
