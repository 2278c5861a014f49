//! Pipeline document parsing: predicate expressions, the JSON pipeline
//! format, and lowering into logical plans.

pub mod doc;
pub mod lower;
pub mod predicate;

pub use doc::{parse_pipeline, DocError, PipelineDoc};
pub use lower::build_plan;
pub use predicate::{parse_predicate, SyntaxError};
