//! Sensitive-group histograms and the distribution-bug screen.
//!
//! The group value rides in the annotation slot, so it survives projections
//! and featurization that drop the column itself. Each node's input and
//! output histograms are compared: a group whose share shrinks or grows past
//! the tolerance band is a distribution bug candidate.

use crate::inspect::Inspection;
use crate::ir::annot::Annotation;
use crate::ir::plan::{OpKind, PlanNode};
use crate::ir::relation::Relation;
use crate::ir::value::{Schema, Value};
use serde::Serialize;
use std::collections::BTreeMap;

pub const DEFAULT_TAU: f64 = 0.8;

/// Group counts on the input and output side of one node evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NodeHistogram {
    pub input: BTreeMap<String, u64>,
    pub output: BTreeMap<String, u64>,
}

/// Tracks the distribution of one sensitive column across every operator.
#[derive(Debug)]
pub struct GroupHistogramInspection {
    column: String,
    /// Per-node histograms in evaluation order.
    pub per_node: Vec<(String, NodeHistogram)>,
}

impl GroupHistogramInspection {
    pub fn new(column: impl Into<String>) -> Self {
        GroupHistogramInspection { column: column.into(), per_node: Vec::new() }
    }

    pub fn column(&self) -> &str {
        &self.column
    }

    pub fn histogram(&self, node_id: &str) -> Option<&NodeHistogram> {
        self.per_node.iter().find(|(id, _)| id == node_id).map(|(_, h)| h)
    }

    fn tally(slot: usize, relations: &[&Relation]) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for relation in relations {
            for annotations in &relation.annotations {
                if let Some(value) = annotations[slot].value() {
                    *counts.entry(value.display_string()).or_insert(0) += 1;
                }
            }
        }
        counts
    }
}

impl Inspection for GroupHistogramInspection {
    fn id(&self) -> &str {
        "group_histogram"
    }

    fn annotate_source(
        &mut self,
        _source: &str,
        _index: u64,
        row: &[Value],
        schema: &Schema,
    ) -> Annotation {
        match schema.index_of(&self.column) {
            Some(i) if !row[i].is_null() => Annotation::Value(row[i].clone()),
            _ => Annotation::Absent,
        }
    }

    fn annotate_derived(
        &mut self,
        _kind: OpKind,
        parents: &[&Annotation],
        _row: &[Value],
        _schema: &Schema,
    ) -> Annotation {
        parents
            .iter()
            .find_map(|p| p.value())
            .map(|v| Annotation::Value(v.clone()))
            .unwrap_or(Annotation::Absent)
    }

    fn observe(&mut self, slot: usize, node: &PlanNode, inputs: &[&Relation], outputs: &[&Relation]) {
        // Artifact producers (fits, models, scores) have no relational
        // output; they transform nothing, so the screen skips them. A
        // relational operator that emits an empty relation is different:
        // that is a present output with zero rows, and it is screened.
        if outputs.is_empty() {
            return;
        }
        self.per_node.push((
            node.id.clone(),
            NodeHistogram {
                input: Self::tally(slot, inputs),
                output: Self::tally(slot, outputs),
            },
        ));
    }
}

/// One (node, group) comparison of group share before and after an operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionFinding {
    pub node: String,
    pub group: String,
    pub proportion_before: f64,
    pub proportion_after: f64,
    /// proportion_after / proportion_before
    pub ratio: f64,
    pub flagged: bool,
}

/// Screens every observed node. A finding is flagged when the group-share
/// ratio leaves the [tau, 1/tau] band. Nodes whose input carried no group
/// information produce nothing; a group absent on both sides is skipped.
pub fn check_distributions(
    histograms: &GroupHistogramInspection,
    tau: f64,
) -> Vec<DistributionFinding> {
    let mut findings = Vec::new();
    for (node, hist) in &histograms.per_node {
        let before_total: u64 = hist.input.values().sum();
        if before_total == 0 {
            continue;
        }
        let after_total: u64 = hist.output.values().sum();
        let mut groups: Vec<&String> = hist.input.keys().chain(hist.output.keys()).collect();
        groups.sort();
        groups.dedup();
        for group in groups {
            let before_count = hist.input.get(group).copied().unwrap_or(0);
            if before_count == 0 {
                // annotations only copy, so a group cannot appear from nowhere
                continue;
            }
            let proportion_before = before_count as f64 / before_total as f64;
            let proportion_after = if after_total == 0 {
                0.0
            } else {
                hist.output.get(group).copied().unwrap_or(0) as f64 / after_total as f64
            };
            let ratio = proportion_after / proportion_before;
            findings.push(DistributionFinding {
                node: node.clone(),
                group: group.clone(),
                proportion_before,
                proportion_after,
                ratio,
                flagged: ratio < tau || ratio > 1.0 / tau,
            });
        }
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(node: &str, input: &[(&str, u64)], output: &[(&str, u64)]) -> GroupHistogramInspection {
        let mut insp = GroupHistogramInspection::new("g");
        insp.per_node.push((
            node.to_string(),
            NodeHistogram {
                input: input.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                output: output.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            },
        ));
        insp
    }

    #[test]
    fn unchanged_proportions_are_not_flagged() {
        let insp = hist("f", &[("a", 5), ("b", 5)], &[("a", 2), ("b", 2)]);
        let findings = check_distributions(&insp, DEFAULT_TAU);
        assert_eq!(findings.len(), 2);
        assert!(findings.iter().all(|f| !f.flagged && (f.ratio - 1.0).abs() < 1e-12));
    }

    #[test]
    fn halved_share_is_flagged() {
        // group a: 50% -> 20%, ratio 0.4
        let insp = hist("j", &[("a", 5), ("b", 5)], &[("a", 2), ("b", 8)]);
        let findings = check_distributions(&insp, DEFAULT_TAU);
        let a = findings.iter().find(|f| f.group == "a").unwrap();
        assert!(a.flagged);
        assert!((a.ratio - 0.4).abs() < 1e-12);
    }

    #[test]
    fn empty_input_side_yields_no_findings() {
        let insp = hist("src", &[], &[("a", 10)]);
        assert!(check_distributions(&insp, DEFAULT_TAU).is_empty());
    }

    #[test]
    fn band_edges_are_exclusive() {
        // ratio exactly tau stays inside the band
        let insp = hist("f", &[("a", 5), ("b", 5)], &[("a", 4), ("b", 6)]);
        let findings = check_distributions(&insp, 0.8);
        let a = findings.iter().find(|f| f.group == "a").unwrap();
        assert!((a.ratio - 0.8).abs() < 1e-12);
        assert!(!a.flagged);
        let b = findings.iter().find(|f| f.group == "b").unwrap();
        assert!((b.ratio - 1.2).abs() < 1e-12);
        assert!(!b.flagged);
    }
}
