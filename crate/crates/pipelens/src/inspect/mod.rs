//! Pluggable operator inspections.
//!
//! An inspection owns one annotation slot on every materialized row. The
//! executor asks it to produce annotations (at sources, and for derived rows
//! from their parents' slots) and then lets it observe each node's input and
//! output relations exactly once. Overhead per tuple is therefore constant:
//! one slot per active inspection, regardless of pipeline length.

pub mod histogram;
pub mod lineage;
pub mod slices;

pub use histogram::{check_distributions, DistributionFinding, GroupHistogramInspection, DEFAULT_TAU};
pub use lineage::LineageInspection;
pub use slices::{slice_scores, AlignmentError};

use crate::ir::annot::Annotation;
use crate::ir::plan::{OpKind, PlanNode};
use crate::ir::relation::Relation;
use crate::ir::value::{Schema, Value};

/// An observer wired into plan execution.
///
/// `slot` is the index of this inspection's annotation slot in every row's
/// annotation array; the executor assigns slots by registration order.
pub trait Inspection {
    fn id(&self) -> &str;

    /// Annotation for row `index` of a data source.
    fn annotate_source(
        &mut self,
        source: &str,
        index: u64,
        row: &[Value],
        schema: &Schema,
    ) -> Annotation;

    /// Annotation for a derived row, given the same slot of each parent row.
    fn annotate_derived(
        &mut self,
        kind: OpKind,
        parents: &[&Annotation],
        row: &[Value],
        schema: &Schema,
    ) -> Annotation;

    /// Called once per node evaluation with the concrete input relations the
    /// node consumed and the relations it produced (empty for artifacts).
    fn observe(&mut self, slot: usize, node: &PlanNode, inputs: &[&Relation], outputs: &[&Relation]);
}
