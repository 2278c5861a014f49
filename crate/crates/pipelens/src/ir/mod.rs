//! Logical query plan IR: values, relations, annotations, plan DAGs.

pub mod annot;
pub mod dot;
pub mod plan;
pub mod predicate;
pub mod relation;
pub mod value;
