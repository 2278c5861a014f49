//! Why-provenance tracking: which source rows produced each output row.

use crate::inspect::Inspection;
use crate::ir::annot::{Annotation, LineageSet, RowToken};
use crate::ir::plan::{OpKind, PlanNode};
use crate::ir::relation::Relation;
use crate::ir::value::{Schema, Value};

/// Propagates lineage sets through every operator and optionally captures
/// the lineage of one node's output rows for later querying.
#[derive(Debug, Default)]
pub struct LineageInspection {
    track: Option<String>,
    /// Lineage per output row of the tracked node, in row order. For Split
    /// the branches appear in output order: train rows, then test rows.
    pub captured: Vec<LineageSet>,
}

impl LineageInspection {
    pub fn new() -> Self {
        LineageInspection::default()
    }

    /// Tracks the output of one node id.
    pub fn tracking(node_id: impl Into<String>) -> Self {
        LineageInspection { track: Some(node_id.into()), captured: Vec::new() }
    }

    /// Dump format: map output row index -> [[source, index], ...].
    /// Summarized lineage (past the exact limit) serializes as null.
    pub fn dump_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (i, lineage) in self.captured.iter().enumerate() {
            let entry = match lineage.tokens() {
                Some(tokens) => serde_json::Value::Array(
                    tokens
                        .iter()
                        .map(|t| {
                            serde_json::json!([t.source, t.index])
                        })
                        .collect(),
                ),
                None => serde_json::Value::Null,
            };
            map.insert(i.to_string(), entry);
        }
        serde_json::Value::Object(map)
    }
}

impl Inspection for LineageInspection {
    fn id(&self) -> &str {
        "lineage"
    }

    fn annotate_source(&mut self, source: &str, index: u64, _: &[Value], _: &Schema) -> Annotation {
        Annotation::Lineage(LineageSet::single(RowToken::new(source, index)))
    }

    fn annotate_derived(
        &mut self,
        _kind: OpKind,
        parents: &[&Annotation],
        _row: &[Value],
        _schema: &Schema,
    ) -> Annotation {
        let mut combined = LineageSet::empty();
        for parent in parents {
            if let Some(lineage) = parent.lineage() {
                combined = combined.union(lineage);
            }
        }
        Annotation::Lineage(combined)
    }

    fn observe(&mut self, slot: usize, node: &PlanNode, _: &[&Relation], outputs: &[&Relation]) {
        if self.track.as_deref() != Some(node.id.as_str()) {
            return;
        }
        self.captured.clear();
        for output in outputs {
            for annotations in &output.annotations {
                self.captured.push(
                    annotations[slot].lineage().cloned().unwrap_or_else(LineageSet::empty),
                );
            }
        }
    }
}
