//! DOT rendering of plan DAGs.

use crate::ir::plan::Plan;
use std::fmt::Write;

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz text for the plan: one node per operator labeled `id\nop_kind`,
/// one edge per input. Nodes sort lexicographically by id so the output is
/// byte-identical across runs.
pub fn to_dot(plan: &Plan) -> String {
    let mut ids: Vec<&str> = plan.nodes().iter().map(|n| n.id.as_str()).collect();
    ids.sort_unstable();

    let mut out = String::from("digraph {\n");
    for id in &ids {
        let node = plan.get(id).expect("id from plan");
        let _ = writeln!(
            out,
            "  \"{}\" [label=\"{}\\n{}\"];",
            escape(id),
            escape(id),
            node.op.kind()
        );
    }
    for id in &ids {
        let node = plan.get(id).expect("id from plan");
        for input in &node.inputs {
            let _ = writeln!(out, "  \"{}\" -> \"{}\";", escape(input), escape(id));
        }
    }
    out.push_str("}\n");
    out
}
