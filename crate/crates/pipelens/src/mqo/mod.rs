//! Multi-query optimization: what-if analyses execute many near-identical
//! plan variants, and most of each variant is shared work. This module
//! assigns every node a content fingerprint (a function of its operator,
//! parameters, and transitive inputs, never of node ids), merges variant
//! plans into one DAG keyed by fingerprint, and executes the merged DAG so
//! each distinct subcomputation runs once.
//!
//! Merged execution is an optimization, not a semantics change: per-variant
//! reports are byte-identical to executing each variant alone.

use crate::exec::engine::{ExecError, ExecutionTrace, Executor, NodeOutput};
use crate::inspect::Inspection;
use crate::ir::plan::{Op, Plan, PlanNode};
use crate::model::ScoreReport;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// SHA-256 over (operator kind, canonical parameters, input fingerprints).
pub type Fingerprint = [u8; 32];

/// Lowercase hex rendering, for diagnostics and stable tie-breaking in text.
pub fn hex(fp: &Fingerprint) -> String {
    let mut s = String::with_capacity(64);
    for b in fp {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Rewrites a plan into the form that fingerprinting sees: Corruption nodes
/// with fraction 0 are no-ops and are spliced out, so a "corrupt 0% of rows"
/// variant shares its entire DAG with the uncorrupted baseline.
pub fn canonicalize(plan: &Plan) -> Plan {
    let mut redirect: BTreeMap<&str, &str> = BTreeMap::new();
    for node in plan.nodes() {
        if let Op::Corruption { fraction, .. } = &node.op {
            if *fraction == 0.0 && node.inputs.len() == 1 {
                redirect.insert(node.id.as_str(), node.inputs[0].as_str());
            }
        }
    }
    if redirect.is_empty() {
        return plan.clone();
    }
    // Chains of zero-fraction corruptions resolve to the first real node.
    // The hop bound guards against malformed cyclic input.
    let resolve = |start: &str| -> String {
        let mut id = start;
        for _ in 0..=plan.len() {
            match redirect.get(id) {
                Some(next) => id = next,
                None => break,
            }
        }
        id.to_string()
    };
    let mut out = Plan::new();
    for node in plan.nodes() {
        if redirect.contains_key(node.id.as_str()) {
            continue;
        }
        out.add(PlanNode::new(
            node.id.clone(),
            node.op.clone(),
            node.inputs.iter().map(|i| resolve(i)).collect(),
        ));
    }
    out
}

/// Canonical parameter rendering: JSON with sorted keys and shortest
/// round-trip floats. DataSource identity is its name plus content digest;
/// the filesystem path is deliberately excluded so the same data reached via
/// a different mount fingerprints identically.
fn canonical_params(op: &Op) -> Result<(String, String), String> {
    let value = serde_json::to_value(op).map_err(|e| e.to_string())?;
    let obj = value.as_object().ok_or("operator did not serialize to an object")?;
    let kind = obj
        .get("op_kind")
        .and_then(|k| k.as_str())
        .ok_or("operator tag missing")?
        .to_string();
    let params = match obj.get("params") {
        Some(serde_json::Value::Object(p)) => {
            let mut p = p.clone();
            if kind == "DataSource" {
                p.remove("path");
            }
            serde_json::Value::Object(p).to_string()
        }
        Some(other) => other.to_string(),
        None => "{}".to_string(),
    };
    Ok((kind, params))
}

/// Computes every node's fingerprint. Run [`canonicalize`] first when the
/// plan may contain no-op corruptions; this function hashes what it is given.
pub fn fingerprints(plan: &Plan) -> Result<BTreeMap<String, Fingerprint>, String> {
    let order = plan
        .topo_order()
        .map_err(|cyc| format!("plan has a cycle involving: {}", cyc.join(", ")))?;
    let mut fps: BTreeMap<String, Fingerprint> = BTreeMap::new();
    for id in order {
        let node = plan.get(id).expect("topo order yields existing ids");
        let (kind, params) = canonical_params(&node.op)?;
        let mut h = Sha256::new();
        h.update(kind.as_bytes());
        h.update([0u8]);
        h.update(params.as_bytes());
        h.update([0u8]);
        for input in &node.inputs {
            let fp = fps
                .get(input.as_str())
                .ok_or_else(|| format!("{id}: unknown input \"{input}\""))?;
            h.update(fp);
        }
        fps.insert(id.to_string(), h.finalize().into());
    }
    Ok(fps)
}

/// The union DAG of a set of variant plans, deduplicated by fingerprint.
///
/// Node ids come from the first variant that contributed the node; a later
/// variant whose same-named node computes something different gets a `~k`
/// suffix. `plan.nodes()` is ordered by fingerprint bytes ascending, which
/// makes the execution schedule deterministic.
#[derive(Debug, Clone)]
pub struct MergedPlan {
    pub plan: Plan,
    /// (variant label, merged sink node id), in variant order.
    pub sinks: Vec<(String, String)>,
    /// Merged node id -> fingerprint. Distinct ids map to distinct
    /// fingerprints by construction.
    pub fingerprints: BTreeMap<String, Fingerprint>,
    /// Merged node id -> labels of the variants whose plan contains it.
    pub uses: BTreeMap<String, Vec<String>>,
    /// Total node count of the canonicalized variants executed separately.
    pub naive_operator_count: u64,
}

impl MergedPlan {
    /// Nodes evaluated once but needed by two or more variants.
    pub fn shared_node_count(&self) -> u64 {
        self.uses.values().filter(|labels| labels.len() >= 2).count() as u64
    }

    fn affected_variants(&self, error: &ExecError) -> Vec<String> {
        let node = match error {
            ExecError::MissingLabel { node, .. }
            | ExecError::NonNumeric { node, .. }
            | ExecError::Alignment { node, .. }
            | ExecError::Metric { node, .. }
            | ExecError::Model { node, .. }
            | ExecError::Node { node, .. } => Some(node.as_str()),
            ExecError::SourceChanged { name, .. } => Some(name.as_str()),
            _ => None,
        };
        match node.and_then(|n| self.uses.get(n)) {
            Some(labels) => labels.clone(),
            None => self.sinks.iter().map(|(label, _)| label.clone()).collect(),
        }
    }
}

/// Merges variant plans into one DAG. Each variant is canonicalized, its
/// nodes fingerprinted, and nodes whose fingerprints already appear are
/// reused rather than re-added. Labels must be unique and every variant must
/// be a single-sink pipeline.
pub fn merge(variants: &[(String, Plan)]) -> Result<MergedPlan, String> {
    if variants.is_empty() {
        return Err("no variants to merge".to_string());
    }
    let mut merged = Plan::new();
    let mut by_fp: BTreeMap<Fingerprint, String> = BTreeMap::new();
    let mut fps_out: BTreeMap<String, Fingerprint> = BTreeMap::new();
    let mut uses: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut sinks: Vec<(String, String)> = Vec::new();
    let mut naive = 0u64;

    for (label, plan) in variants {
        if sinks.iter().any(|(l, _)| l == label) {
            return Err(format!("duplicate variant label \"{label}\""));
        }
        let canon = canonicalize(plan);
        let fps = fingerprints(&canon)?;
        naive += canon.len() as u64;
        let order = canon
            .topo_order()
            .map_err(|cyc| format!("variant \"{label}\" has a cycle: {}", cyc.join(", ")))?;
        // Variant node id -> merged node id.
        let mut local: BTreeMap<&str, String> = BTreeMap::new();
        for id in order {
            let fp = fps[id];
            let merged_id = match by_fp.get(&fp) {
                Some(existing) => existing.clone(),
                None => {
                    let node = canon.get(id).expect("topo order yields existing ids");
                    let mut candidate = id.to_string();
                    let mut k = 1;
                    while merged.contains(&candidate) {
                        candidate = format!("{id}~{k}");
                        k += 1;
                    }
                    let inputs = node
                        .inputs
                        .iter()
                        .map(|i| local[i.as_str()].clone())
                        .collect();
                    merged.add(PlanNode::new(candidate.clone(), node.op.clone(), inputs));
                    by_fp.insert(fp, candidate.clone());
                    fps_out.insert(candidate.clone(), fp);
                    candidate
                }
            };
            let users = uses.entry(merged_id.clone()).or_default();
            if users.last() != Some(label) {
                users.push(label.clone());
            }
            local.insert(id, merged_id);
        }
        let vsinks = canon.sinks();
        if vsinks.len() != 1 {
            return Err(format!(
                "variant \"{label}\" has {} sinks; each variant must be a single-sink pipeline",
                vsinks.len()
            ));
        }
        sinks.push((label.clone(), local[vsinks[0]].clone()));
    }

    // Deterministic schedule: the engine breaks topological ties by node
    // order, so order nodes by fingerprint bytes.
    merged.nodes_mut().sort_by(|a, b| fps_out[&a.id].cmp(&fps_out[&b.id]));

    Ok(MergedPlan { plan: merged, sinks, fingerprints: fps_out, uses, naive_operator_count: naive })
}

/// Work accounting for a merged execution, reported alongside analysis
/// results so the sharing is auditable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReuseStats {
    /// Operator evaluations had each variant run alone.
    pub naive_operator_count: u64,
    /// Operator evaluations actually performed.
    pub merged_operator_count: u64,
    /// Distinct nodes needed by two or more variants.
    pub shared_node_count: u64,
}

/// Result of executing a merged plan: one report per variant (in variant
/// order), reuse accounting, and the engine trace.
#[derive(Debug)]
pub struct MergedRun {
    pub reports: Vec<(String, ScoreReport)>,
    pub reuse: ReuseStats,
    pub trace: ExecutionTrace,
}

#[derive(Debug, thiserror::Error)]
pub enum MqoError {
    #[error("{0}")]
    Merge(String),
    /// An execution error, annotated with the labels of the variants whose
    /// plans contain the failing node.
    #[error("{error} [variants: {}]", variants.join(", "))]
    Exec { error: ExecError, variants: Vec<String> },
}

/// Executes the merged DAG once. Every sink is retained, interior results
/// are released at their last consumer, and each node is evaluated exactly
/// once, so `reuse.merged_operator_count` equals the merged plan size.
pub fn execute_merged(
    merged: &MergedPlan,
    executor: &Executor,
    inspections: &mut [&mut dyn Inspection],
) -> Result<MergedRun, MqoError> {
    let mut sink_ids: Vec<String> = merged.sinks.iter().map(|(_, id)| id.clone()).collect();
    sink_ids.sort();
    sink_ids.dedup();
    let (outputs, trace) = executor
        .execute_sinks(&merged.plan, &sink_ids, inspections)
        .map_err(|error| {
            let variants = merged.affected_variants(&error);
            MqoError::Exec { error, variants }
        })?;
    let mut reports = Vec::new();
    for (label, sink) in &merged.sinks {
        let report = outputs
            .get(sink)
            .and_then(NodeOutput::as_report)
            .ok_or_else(|| {
                MqoError::Merge(format!("variant \"{label}\": sink \"{sink}\" is not a Score node"))
            })?
            .clone();
        reports.push((label.clone(), report));
    }
    let reuse = ReuseStats {
        naive_operator_count: merged.naive_operator_count,
        merged_operator_count: trace.operators_evaluated,
        shared_node_count: merged.shared_node_count(),
    };
    Ok(MergedRun { reports, reuse, trace })
}
