//! Data-centric what-if analysis: build plan variants by patching a baseline
//! pipeline, execute them through the multi-query optimizer, and report each
//! variant's score next to the baseline.
//!
//! A patch is a small, local rewrite. Variants stay ordinary plans, so
//! everything downstream (validation, fingerprinting, execution, provenance)
//! applies to them unchanged.

use crate::exec::engine::{ExecError, Executor};
use crate::ir::plan::{
    fit_id, transform_id, BranchSpec, CorruptionKind, Diagnostic, ModelConfig, Op, OpKind, Plan,
    PlanNode, SplitBranch,
};
use crate::model::ScoreReport;
use crate::mqo::{self, MqoError, ReuseStats};
use crate::parse::parse_predicate;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

fn is_zero(n: &u32) -> bool {
    *n == 0
}

fn branch_test() -> BranchSpec {
    BranchSpec::Test
}

/// Edit actions for a single relational operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatchAction {
    /// Splice the operator out, reconnecting its input to its consumers.
    Remove,
    /// Swap a Selection or ExtendedProjection predicate (surface syntax).
    ReplacePredicate { predicate: String },
    /// Swap an EstimatorFit encoder.
    ReplaceEncoder { encoder: crate::ir::plan::EncoderKind },
}

/// A local plan rewrite. Patches compose as long as no two touch the same
/// node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Patch {
    /// Inject a Corruption node. For `branch: both` it sits directly above
    /// the target DataSource; otherwise it gates the named branch right
    /// after the Split so the other branch flows through untouched.
    DataCorruption {
        target: String,
        column: String,
        corruption: CorruptionKind,
        fraction: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "branch_test")]
        branch: BranchSpec,
    },
    /// Edit one named operator.
    Operator { target: String, action: PatchAction },
    /// Remove a featurize entry: its fit node, both branch transforms, and
    /// the concat links that carried the generated columns.
    FeatureDrop {
        column: String,
        #[serde(default, skip_serializing_if = "is_zero")]
        occurrence: u32,
    },
    /// Swap the TrainModel configuration.
    Model { config: ModelConfig },
}

impl Patch {
    /// The node a patch claims; two patches claiming the same node conflict.
    fn claimed_node(&self, plan: &Plan) -> String {
        match self {
            Patch::DataCorruption { target, .. } | Patch::Operator { target, .. } => {
                target.clone()
            }
            Patch::FeatureDrop { column, occurrence } => fit_id(column, *occurrence),
            Patch::Model { .. } => plan
                .nodes()
                .iter()
                .find(|n| n.op.kind() == OpKind::TrainModel)
                .map(|n| n.id.clone())
                .unwrap_or_else(|| "__train".to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PatchError {
    #[error("unknown target \"{target}\"")]
    UnknownTarget { target: String },
    #[error("conflicting patches on \"{target}\"")]
    Conflicting { target: String },
    #[error("{message}")]
    Unsupported { message: String },
    #[error("plan invalid after patch: {}", diagnostics.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidAfterPatch { diagnostics: Vec<Diagnostic> },
    #[error("invalid predicate: {0}")]
    Predicate(String),
}

fn unsupported(message: impl Into<String>) -> PatchError {
    PatchError::Unsupported { message: message.into() }
}

/// Reconnects every consumer of `id` to `replacement`, then drops `id`.
fn splice_out(plan: &mut Plan, id: &str, replacement: &str) {
    for node in plan.nodes_mut() {
        for input in &mut node.inputs {
            if input == id {
                *input = replacement.to_string();
            }
        }
    }
    plan.nodes_mut().retain(|n| n.id != id);
}

/// Inserts `op` as the sole consumer of `anchor`: every node that read
/// `anchor` now reads the new node instead.
fn insert_above_consumers(plan: &mut Plan, anchor: &str, id: String, op: Op) {
    for node in plan.nodes_mut() {
        for input in &mut node.inputs {
            if input == anchor {
                *input = id.clone();
            }
        }
    }
    let pos = plan
        .nodes()
        .iter()
        .position(|n| n.id == anchor)
        .map(|i| i + 1)
        .unwrap_or(plan.len());
    plan.nodes_mut().insert(pos, PlanNode::new(id, op, vec![anchor.to_string()]));
}

fn fresh_id(plan: &Plan, stem: &str) -> String {
    let mut k = 0;
    loop {
        let candidate = format!("{stem}_{k}");
        if !plan.contains(&candidate) {
            return candidate;
        }
        k += 1;
    }
}

/// Applies one patch, returning the rewritten plan. The result is validated;
/// a patch that leaves the plan inconsistent is rejected rather than
/// deferred to execution.
pub fn apply_patch(plan: &Plan, patch: &Patch) -> Result<Plan, PatchError> {
    let mut out = plan.clone();
    match patch {
        Patch::DataCorruption { target, column, corruption, fraction, seed, branch } => {
            let node = out
                .get(target)
                .ok_or_else(|| PatchError::UnknownTarget { target: target.clone() })?;
            if node.op.kind() != OpKind::DataSource {
                return Err(unsupported(format!(
                    "corruption target \"{target}\" is not a DataSource"
                )));
            }
            let anchor = if *branch == BranchSpec::Both {
                target.clone()
            } else {
                let splits: Vec<&str> = out
                    .nodes()
                    .iter()
                    .filter(|n| n.op.kind() == OpKind::Split)
                    .map(|n| n.id.as_str())
                    .collect();
                match splits.len() {
                    // Without a split the branch gate is vacuous: corrupt at
                    // the source, which is the whole branch.
                    0 => target.clone(),
                    1 => splits[0].to_string(),
                    _ => {
                        return Err(unsupported(
                            "branch-gated corruption is ambiguous: plan has multiple Split nodes",
                        ))
                    }
                }
            };
            let id = fresh_id(&out, "__corrupt");
            insert_above_consumers(
                &mut out,
                &anchor,
                id,
                Op::Corruption {
                    column: column.clone(),
                    corruption: corruption.clone(),
                    fraction: *fraction,
                    seed: *seed,
                    branch: *branch,
                },
            );
        }
        Patch::Operator { target, action } => {
            let node = out
                .get_mut(target)
                .ok_or_else(|| PatchError::UnknownTarget { target: target.clone() })?;
            match action {
                PatchAction::Remove => match node.op.kind() {
                    OpKind::Selection
                    | OpKind::Projection
                    | OpKind::ExtendedProjection
                    | OpKind::Corruption => {
                        let input = node.inputs[0].clone();
                        splice_out(&mut out, target, &input);
                    }
                    kind => {
                        return Err(unsupported(format!(
                            "cannot remove \"{target}\": {kind} nodes are not spliceable"
                        )))
                    }
                },
                PatchAction::ReplacePredicate { predicate } => {
                    let parsed = parse_predicate(predicate)
                        .map_err(|e| PatchError::Predicate(e.to_string()))?;
                    match &mut node.op {
                        Op::Selection { predicate } => *predicate = parsed,
                        Op::ExtendedProjection { predicate, .. } => *predicate = parsed,
                        _ => {
                            return Err(unsupported(format!(
                                "\"{target}\" has no predicate to replace"
                            )))
                        }
                    }
                }
                PatchAction::ReplaceEncoder { encoder } => match &mut node.op {
                    Op::EstimatorFit { encoder: e, .. } => *e = *encoder,
                    _ => {
                        return Err(unsupported(format!(
                            "\"{target}\" is not an EstimatorFit node"
                        )))
                    }
                },
            }
        }
        Patch::FeatureDrop { column, occurrence } => {
            let fit = fit_id(column, *occurrence);
            if !out.contains(&fit) {
                return Err(PatchError::UnknownTarget { target: fit });
            }
            for branch in [SplitBranch::Train, SplitBranch::Test] {
                let tf = transform_id(column, *occurrence, branch);
                if !out.contains(&tf) {
                    return Err(unsupported(format!(
                        "featurize entry for \"{column}\" has no {} transform",
                        branch.name()
                    )));
                }
                let consumers: Vec<String> =
                    out.consumers(&tf).into_iter().map(String::from).collect();
                for consumer in consumers {
                    let cnode = out.get(&consumer).expect("consumer exists");
                    if cnode.op.kind() != OpKind::Concat {
                        return Err(unsupported(format!(
                            "dropping \"{column}\" would leave \"{consumer}\" without its feature input"
                        )));
                    }
                    let other = cnode
                        .inputs
                        .iter()
                        .find(|i| *i != &tf)
                        .cloned()
                        .ok_or_else(|| {
                            unsupported(format!("\"{consumer}\" concatenates \"{tf}\" with itself"))
                        })?;
                    splice_out(&mut out, &consumer, &other);
                }
                out.nodes_mut().retain(|n| n.id != tf);
            }
            out.nodes_mut().retain(|n| n.id != fit);
        }
        Patch::Model { config } => {
            let trains: Vec<String> = out
                .nodes()
                .iter()
                .filter(|n| n.op.kind() == OpKind::TrainModel)
                .map(|n| n.id.clone())
                .collect();
            match trains.as_slice() {
                [id] => {
                    let node = out.get_mut(id).expect("just found");
                    node.op = Op::TrainModel { config: config.clone() };
                }
                [] => return Err(unsupported("plan has no TrainModel node")),
                _ => return Err(unsupported("plan has multiple TrainModel nodes")),
            }
        }
    }
    let diagnostics = out.validate();
    if !diagnostics.is_empty() {
        return Err(PatchError::InvalidAfterPatch { diagnostics });
    }
    Ok(out)
}

/// Applies a patch set in order. Patch sets claiming the same node twice are
/// rejected up front; order must not matter for accepted sets.
pub fn apply_patches(plan: &Plan, patches: &[Patch]) -> Result<Plan, PatchError> {
    let mut claimed = BTreeSet::new();
    for patch in patches {
        let node = patch.claimed_node(plan);
        if !claimed.insert(node.clone()) {
            return Err(PatchError::Conflicting { target: node });
        }
    }
    let mut out = plan.clone();
    for patch in patches {
        out = apply_patch(&out, patch)?;
    }
    Ok(out)
}

/// Analysis selection plus parameters, the shape the CLI reads from
/// `--analysis-config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisConfig {
    /// Corruption grid: every (kind, fraction) pair becomes one variant.
    Robustness {
        target: String,
        column: String,
        kinds: Vec<String>,
        fractions: Vec<f64>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "branch_test")]
        branch: BranchSpec,
        #[serde(default = "default_factor")]
        outlier_factor: f64,
    },
    /// One FeatureDrop variant per featurize entry.
    FeatureImportance,
    /// One Remove variant per listed operator, scored on accuracy and
    /// demographic parity difference.
    OperatorFairness { targets: Vec<String> },
}

fn default_factor() -> f64 {
    10.0
}

impl AnalysisConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AnalysisConfig::Robustness { .. } => "robustness",
            AnalysisConfig::FeatureImportance => "feature_importance",
            AnalysisConfig::OperatorFairness { .. } => "operator_fairness",
        }
    }
}

/// One variant's outcome, reported next to the baseline.
#[derive(Debug, Clone, Serialize)]
pub struct VariantReport {
    pub label: String,
    pub patches: Vec<Patch>,
    pub score: ScoreReport,
    /// Per metric: variant value minus baseline value.
    pub deltas: BTreeMap<String, f64>,
    /// Feature importance only: baseline accuracy minus variant accuracy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub importance: Option<f64>,
}

/// A variant whose execution failed. The analysis reports it and carries on;
/// only a failing baseline aborts the run.
#[derive(Debug, Clone, Serialize)]
pub struct FailedVariant {
    pub label: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub analysis: String,
    pub baseline: ScoreReport,
    pub variants: Vec<VariantReport>,
    pub reuse_stats: ReuseStats,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<FailedVariant>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("invalid analysis config: {0}")]
    Config(String),
    #[error("variant \"{label}\": {source}")]
    Patch { label: String, source: PatchError },
    #[error("{source} [variants: {}]", labels.join(", "))]
    Exec { labels: Vec<String>, source: ExecError },
    #[error("{0}")]
    Merge(String),
}

const BASELINE: &str = "baseline";

fn config_err(message: impl Into<String>) -> AnalysisError {
    AnalysisError::Config(message.into())
}

fn corruption_kind(name: &str, factor: f64) -> Result<CorruptionKind, AnalysisError> {
    match name {
        "missing_values" => Ok(CorruptionKind::MissingValues),
        "outliers" => Ok(CorruptionKind::Outliers { factor }),
        "category_swap" => Ok(CorruptionKind::CategorySwap),
        other => Err(config_err(format!("unknown corruption kind \"{other}\""))),
    }
}

/// Shortest round-trip rendering for labels, matching JSON number output.
fn num(f: f64) -> String {
    serde_json::to_string(&f).unwrap_or_else(|_| f.to_string())
}

/// Expands an analysis config into labeled patch sets against the baseline.
/// Variant order is the report order: robustness sorts by (kind, fraction),
/// the others follow the plan/config.
fn enumerate_variants(
    plan: &Plan,
    config: &AnalysisConfig,
) -> Result<Vec<(String, Vec<Patch>)>, AnalysisError> {
    match config {
        AnalysisConfig::Robustness {
            target,
            column,
            kinds,
            fractions,
            seed,
            branch,
            outlier_factor,
        } => {
            if kinds.is_empty() || fractions.is_empty() {
                return Err(config_err("robustness requires at least one kind and one fraction"));
            }
            for f in fractions {
                if !f.is_finite() || !(0.0..=1.0).contains(f) {
                    return Err(config_err(format!("fraction {} is not in [0, 1]", num(*f))));
                }
            }
            let mut kinds: Vec<&String> = kinds.iter().collect();
            kinds.sort();
            kinds.dedup();
            let mut fractions = fractions.clone();
            fractions.sort_by(f64::total_cmp);
            fractions.dedup();
            let mut variants = Vec::new();
            for kind in kinds {
                let corruption = corruption_kind(kind, *outlier_factor)?;
                for fraction in &fractions {
                    variants.push((
                        format!("{kind}@{}", num(*fraction)),
                        vec![Patch::DataCorruption {
                            target: target.clone(),
                            column: column.clone(),
                            corruption: corruption.clone(),
                            fraction: *fraction,
                            seed: *seed,
                            branch: *branch,
                        }],
                    ));
                }
            }
            Ok(variants)
        }
        AnalysisConfig::FeatureImportance => {
            let mut variants = Vec::new();
            for node in plan.nodes() {
                if let Op::EstimatorFit { column, occurrence, .. } = &node.op {
                    let label = if *occurrence == 0 {
                        format!("drop_{column}")
                    } else {
                        format!("drop_{column}~{occurrence}")
                    };
                    variants.push((
                        label,
                        vec![Patch::FeatureDrop { column: column.clone(), occurrence: *occurrence }],
                    ));
                }
            }
            if variants.is_empty() {
                return Err(config_err("plan has no featurize entries to drop"));
            }
            Ok(variants)
        }
        AnalysisConfig::OperatorFairness { targets } => {
            if targets.is_empty() {
                return Err(config_err("operator_fairness requires at least one target"));
            }
            Ok(targets
                .iter()
                .map(|t| {
                    (
                        format!("remove_{t}"),
                        vec![Patch::Operator { target: t.clone(), action: PatchAction::Remove }],
                    )
                })
                .collect())
        }
    }
}

/// Runs an analysis end to end: enumerate variants, patch, execute (merged
/// by default, independently with `use_mqo: false`), and assemble the
/// report. Scores are identical between the two execution paths.
pub fn run_analysis(
    plan: &Plan,
    executor: &Executor,
    config: &AnalysisConfig,
    use_mqo: bool,
) -> Result<AnalysisReport, AnalysisError> {
    let candidates = enumerate_variants(plan, config)?;
    let mut warnings = Vec::new();

    // Feature importance tolerates entries that cannot be dropped (the sole
    // feature); the other analyses treat a failing patch as a config error.
    let tolerant = matches!(config, AnalysisConfig::FeatureImportance);
    let mut variants: Vec<(String, Vec<Patch>, Plan)> = Vec::new();
    for (label, patches) in candidates {
        match apply_patches(plan, &patches) {
            Ok(patched) => variants.push((label, patches, patched)),
            Err(source) if tolerant => {
                warnings.push(format!("skipping \"{label}\": {source}"));
            }
            Err(source) => return Err(AnalysisError::Patch { label, source }),
        }
    }
    if variants.is_empty() {
        return Err(config_err("no executable variants remain"));
    }

    let mut labeled: Vec<(String, Plan)> = vec![(BASELINE.to_string(), plan.clone())];
    for (label, _, patched) in &variants {
        if label == BASELINE {
            return Err(config_err(format!("variant label \"{BASELINE}\" is reserved")));
        }
        labeled.push((label.clone(), patched.clone()));
    }

    // A variant failing at execution time is reported, not fatal: the
    // remaining variants still produce scores. Only the baseline aborts.
    let mut failed: Vec<FailedVariant> = Vec::new();
    let (mut reports, reuse): (BTreeMap<String, ScoreReport>, ReuseStats) = if use_mqo {
        // In a merged run one failing node poisons every variant that
        // contains it; drop exactly those and retry with the rest.
        loop {
            let merged = mqo::merge(&labeled).map_err(AnalysisError::Merge)?;
            match mqo::execute_merged(&merged, executor, &mut []) {
                Ok(run) => break (run.reports.into_iter().collect(), run.reuse),
                Err(MqoError::Merge(m)) => return Err(AnalysisError::Merge(m)),
                Err(MqoError::Exec { error, variants }) => {
                    if variants.iter().any(|l| l == BASELINE) {
                        return Err(AnalysisError::Exec { labels: variants, source: error });
                    }
                    let message = error.to_string();
                    labeled.retain(|(label, _)| !variants.contains(label));
                    for label in variants {
                        failed.push(FailedVariant { label, error: message.clone() });
                    }
                }
            }
        }
    } else {
        let mut reports = BTreeMap::new();
        let mut evaluated = 0u64;
        for (label, variant_plan) in &labeled {
            match executor.execute(variant_plan, &mut []) {
                Ok((report, trace)) => {
                    evaluated += trace.operators_evaluated;
                    reports.insert(label.clone(), report);
                }
                Err(source) if label == BASELINE => {
                    return Err(AnalysisError::Exec { labels: vec![label.clone()], source });
                }
                Err(source) => {
                    failed.push(FailedVariant { label: label.clone(), error: source.to_string() });
                }
            }
        }
        let reuse = ReuseStats {
            naive_operator_count: evaluated,
            merged_operator_count: evaluated,
            shared_node_count: 0,
        };
        (reports, reuse)
    };
    failed.sort_by(|a, b| a.label.cmp(&b.label));

    let baseline = reports.remove(BASELINE).expect("baseline was executed");
    let mut out = Vec::new();
    for (label, patches, _) in variants {
        let Some(score) = reports.remove(&label) else { continue };
        let mut deltas = BTreeMap::new();
        for (metric, value) in score.metrics() {
            if let Some(base) = baseline.get(metric) {
                deltas.insert(metric.to_string(), value - base);
            }
        }
        out.push(VariantReport { label, patches, score, deltas, importance: None });
    }

    match config {
        AnalysisConfig::FeatureImportance => {
            let base_acc = baseline
                .get("accuracy")
                .ok_or_else(|| config_err("feature importance requires the accuracy metric"))?;
            for v in &mut out {
                let acc = v.score.get("accuracy").ok_or_else(|| {
                    config_err("feature importance requires the accuracy metric")
                })?;
                v.importance = Some(base_acc - acc);
            }
            // Most important first; ties resolve by label so the order is
            // reproducible.
            out.sort_by(|a, b| {
                b.importance
                    .unwrap()
                    .total_cmp(&a.importance.unwrap())
                    .then_with(|| a.label.cmp(&b.label))
            });
        }
        AnalysisConfig::OperatorFairness { .. } => {
            for v in &out {
                for metric in ["accuracy", "demographic_parity_difference"] {
                    if v.score.get(metric).is_none() {
                        return Err(config_err(format!(
                            "operator_fairness requires the {metric} metric; add it to the pipeline's metrics"
                        )));
                    }
                }
            }
        }
        AnalysisConfig::Robustness { .. } => {}
    }

    Ok(AnalysisReport {
        analysis: config.name().to_string(),
        baseline,
        variants: out,
        reuse_stats: reuse,
        failed,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::plan::EncoderKind;
    use crate::ir::relation::{Relation, RowId};
    use crate::ir::value::{Schema, Value, ValueType};

    fn people() -> Relation {
        let schema = Schema::new(vec![
            ("kind".into(), ValueType::Text),
            ("age".into(), ValueType::Int),
            ("group".into(), ValueType::Text),
            ("outcome".into(), ValueType::Text),
        ])
        .unwrap();
        let rows: Vec<Vec<Value>> = (0..12)
            .map(|i| {
                vec![
                    Value::Text(if i % 2 == 0 { "a" } else { "b" }.into()),
                    Value::Int(20 + i),
                    Value::Text(if i % 3 == 0 { "x" } else { "y" }.into()),
                    Value::Text(if i % 2 == 0 { "yes" } else { "no" }.into()),
                ]
            })
            .collect();
        let n = rows.len();
        Relation::new(
            schema,
            rows,
            (0..n as u64).map(|i| RowId::new("people", i)).collect(),
            vec![vec![]; n],
        )
        .unwrap()
    }

    fn feature(plan: &mut Plan, column: &str, encoder: EncoderKind, input: &str) {
        plan.add_node(
            fit_id(column, 0),
            Op::EstimatorFit { column: column.into(), encoder, occurrence: 0 },
            vec![input],
        );
        for branch in [SplitBranch::Train, SplitBranch::Test] {
            plan.add_node(
                transform_id(column, 0, branch),
                Op::Transform { column: column.into(), branch, occurrence: 0 },
                vec![&fit_id(column, 0), input],
            );
        }
    }

    fn tail(plan: &mut Plan, split: &str, feat_train: &str, feat_test: &str) {
        for (id, branch) in [("__label_train", SplitBranch::Train), ("__label_test", SplitBranch::Test)]
        {
            plan.add_node(
                id,
                Op::LabelExtract { column: "outcome".into(), positive: "yes".into(), branch },
                vec![split],
            );
        }
        plan.add_node(
            "__train",
            Op::TrainModel { config: ModelConfig::DecisionStump },
            vec![feat_train, "__label_train"],
        );
        plan.add_node("__predict", Op::Predict, vec!["__train", feat_test]);
        plan.add_node(
            "__score",
            Op::Score {
                metrics: vec!["accuracy".into(), "demographic_parity_difference".into()],
                sensitive: Some(crate::ir::plan::SensitiveSpec {
                    column: "group".into(),
                    privileged: "x".into(),
                }),
            },
            vec!["__predict", "__label_test"],
        );
    }

    /// Filter, two featurize entries (one-hot kind, scaled age), stump model.
    fn pipeline() -> Plan {
        let mut plan = Plan::new();
        plan.add_node(
            "people",
            Op::DataSource {
                name: "people".into(),
                path: "people.csv".into(),
                digest: "0".repeat(64),
                schema: people().schema,
            },
            vec![],
        );
        plan.add_node(
            "__flt",
            Op::Selection { predicate: parse_predicate("age >= 0").unwrap() },
            vec!["people"],
        );
        plan.add_node("__split", Op::Split { test_fraction: 0.4, seed: 3 }, vec!["__flt"]);
        feature(&mut plan, "kind", EncoderKind::OneHot, "__split");
        feature(&mut plan, "age", EncoderKind::StandardScale, "__split");
        for branch in ["train", "test"] {
            plan.add_node(
                format!("__concat_1_{branch}"),
                Op::Concat,
                vec![&format!("__tf_kind_{branch}"), &format!("__tf_age_{branch}")],
            );
        }
        tail(&mut plan, "__split", "__concat_1_train", "__concat_1_test");
        plan
    }

    /// Same pipeline with a single featurize entry and no concat.
    fn single_feature_pipeline() -> Plan {
        let mut plan = Plan::new();
        plan.add_node(
            "people",
            Op::DataSource {
                name: "people".into(),
                path: "people.csv".into(),
                digest: "0".repeat(64),
                schema: people().schema,
            },
            vec![],
        );
        plan.add_node("__split", Op::Split { test_fraction: 0.4, seed: 3 }, vec!["people"]);
        feature(&mut plan, "kind", EncoderKind::OneHot, "__split");
        tail(&mut plan, "__split", "__tf_kind_train", "__tf_kind_test");
        plan
    }

    fn executor() -> Executor {
        let mut ex = Executor::new(".");
        ex.source_overrides.insert("people".into(), people());
        ex
    }

    #[test]
    fn remove_splices_the_operator_out() {
        let plan = pipeline();
        let patched = apply_patch(
            &plan,
            &Patch::Operator { target: "__flt".into(), action: PatchAction::Remove },
        )
        .unwrap();
        assert!(!patched.contains("__flt"));
        assert_eq!(patched.get("__split").unwrap().inputs, vec!["people".to_string()]);
        assert!(patched.validate().is_empty());
        // The filter kept every row, so scores are unchanged.
        let (base, _) = executor().execute(&plan, &mut []).unwrap();
        let (got, _) = executor().execute(&patched, &mut []).unwrap();
        assert_eq!(
            serde_json::to_string(&base).unwrap(),
            serde_json::to_string(&got).unwrap()
        );
    }

    #[test]
    fn replace_predicate_rewrites_in_place() {
        let plan = pipeline();
        let patched = apply_patch(
            &plan,
            &Patch::Operator {
                target: "__flt".into(),
                action: PatchAction::ReplacePredicate { predicate: "age < 26".into() },
            },
        )
        .unwrap();
        assert_eq!(patched.len(), plan.len());
        let got = match &patched.get("__flt").unwrap().op {
            Op::Selection { predicate } => predicate.clone(),
            other => panic!("unexpected op {other:?}"),
        };
        assert_eq!(got, parse_predicate("age < 26").unwrap());
    }

    #[test]
    fn feature_drop_removes_the_fit_transform_and_concat_nodes() {
        let plan = pipeline();
        let patched =
            apply_patch(&plan, &Patch::FeatureDrop { column: "age".into(), occurrence: 0 })
                .unwrap();
        for gone in
            ["__fit_age", "__tf_age_train", "__tf_age_test", "__concat_1_train", "__concat_1_test"]
        {
            assert!(!patched.contains(gone), "{gone} should be removed");
        }
        assert_eq!(
            patched.get("__train").unwrap().inputs,
            vec!["__tf_kind_train".to_string(), "__label_train".to_string()]
        );
        assert!(patched.validate().is_empty());
        executor().execute(&patched, &mut []).unwrap();
    }

    #[test]
    fn dropping_the_only_feature_is_rejected() {
        let err = apply_patch(
            &single_feature_pipeline(),
            &Patch::FeatureDrop { column: "kind".into(), occurrence: 0 },
        )
        .unwrap_err();
        assert!(matches!(err, PatchError::Unsupported { .. }), "got {err:?}");
    }

    #[test]
    fn patches_claiming_the_same_node_conflict() {
        let err = apply_patches(
            &pipeline(),
            &[
                Patch::Model { config: ModelConfig::Majority },
                Patch::Model {
                    config: ModelConfig::LogisticRegression { lr: 0.1, epochs: 10, seed: 0 },
                },
            ],
        )
        .unwrap_err();
        assert_eq!(err, PatchError::Conflicting { target: "__train".into() });
    }

    #[test]
    fn branch_gated_corruption_sits_after_the_split() {
        let patched = apply_patch(
            &pipeline(),
            &Patch::DataCorruption {
                target: "people".into(),
                column: "kind".into(),
                corruption: CorruptionKind::MissingValues,
                fraction: 0.5,
                seed: 1,
                branch: BranchSpec::Test,
            },
        )
        .unwrap();
        let corrupt = patched.get("__corrupt_0").unwrap();
        assert_eq!(corrupt.inputs, vec!["__split".to_string()]);
        assert_eq!(patched.get("__fit_kind").unwrap().inputs[0], "__corrupt_0");
        assert!(patched.validate().is_empty());
    }

    #[test]
    fn whole_pipeline_corruption_sits_above_the_source() {
        let patched = apply_patch(
            &pipeline(),
            &Patch::DataCorruption {
                target: "people".into(),
                column: "kind".into(),
                corruption: CorruptionKind::MissingValues,
                fraction: 0.5,
                seed: 1,
                branch: BranchSpec::Both,
            },
        )
        .unwrap();
        let corrupt = patched.get("__corrupt_0").unwrap();
        assert_eq!(corrupt.inputs, vec!["people".to_string()]);
        assert_eq!(patched.get("__flt").unwrap().inputs[0], "__corrupt_0");
    }

    #[test]
    fn robustness_is_sorted_and_identical_with_and_without_mqo() {
        let plan = pipeline();
        let config = AnalysisConfig::Robustness {
            target: "people".into(),
            column: "kind".into(),
            kinds: vec!["missing_values".into(), "category_swap".into()],
            fractions: vec![0.5, 0.0],
            seed: 9,
            branch: BranchSpec::Test,
            outlier_factor: 10.0,
        };
        let merged = run_analysis(&plan, &executor(), &config, true).unwrap();
        let naive = run_analysis(&plan, &executor(), &config, false).unwrap();
        let labels: Vec<&str> = merged.variants.iter().map(|v| v.label.as_str()).collect();
        assert_eq!(
            labels,
            vec!["category_swap@0.0", "category_swap@0.5", "missing_values@0.0", "missing_values@0.5"]
        );
        assert_eq!(
            serde_json::to_string(&merged.baseline).unwrap(),
            serde_json::to_string(&naive.baseline).unwrap()
        );
        for (m, n) in merged.variants.iter().zip(&naive.variants) {
            assert_eq!(m.label, n.label);
            assert_eq!(
                serde_json::to_string(&m.score).unwrap(),
                serde_json::to_string(&n.score).unwrap(),
                "variant {} diverged between execution paths",
                m.label
            );
        }
        // Fraction-zero variants are the baseline.
        for v in &merged.variants {
            if v.label.ends_with("@0.0") {
                assert_eq!(
                    serde_json::to_string(&v.score).unwrap(),
                    serde_json::to_string(&merged.baseline).unwrap()
                );
                assert_eq!(v.deltas["accuracy"], 0.0);
            }
        }
        assert!(merged.reuse_stats.merged_operator_count < merged.reuse_stats.naive_operator_count);
        assert!(merged.reuse_stats.shared_node_count > 0);
        assert_eq!(naive.reuse_stats.shared_node_count, 0);
    }

    #[test]
    fn feature_importance_ranks_the_label_correlated_feature_first() {
        let report =
            run_analysis(&pipeline(), &executor(), &AnalysisConfig::FeatureImportance, true)
                .unwrap();
        assert_eq!(report.variants.len(), 2);
        assert_eq!(report.variants[0].label, "drop_kind");
        let first = report.variants[0].importance.unwrap();
        let second = report.variants[1].importance.unwrap();
        assert!(first >= second, "importance must be sorted descending");
        assert!(first > 0.0, "dropping the predictive feature must cost accuracy");
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn feature_importance_on_a_single_feature_pipeline_reports_why_it_cannot_run() {
        let err = run_analysis(
            &single_feature_pipeline(),
            &executor(),
            &AnalysisConfig::FeatureImportance,
            true,
        )
        .unwrap_err();
        assert!(matches!(err, AnalysisError::Config(_)), "got {err:?}");
    }

    #[test]
    fn operator_fairness_reports_both_metrics_with_deltas() {
        let config = AnalysisConfig::OperatorFairness { targets: vec!["__flt".into()] };
        let report = run_analysis(&pipeline(), &executor(), &config, true).unwrap();
        assert_eq!(report.variants.len(), 1);
        let v = &report.variants[0];
        assert_eq!(v.label, "remove___flt");
        assert!(v.score.get("accuracy").is_some());
        assert!(v.score.get("demographic_parity_difference").is_some());
        assert!(v.deltas.contains_key("accuracy"));
        assert!(v.deltas.contains_key("demographic_parity_difference"));
    }

    /// `pipeline()` with a null-label guard in front of `__flt`, run against
    /// data where one row's outcome is missing. Removing the guard exposes
    /// the null label to LabelExtract, so that one variant dies at execution
    /// time while the other target stays healthy.
    fn guarded_pipeline() -> (Plan, Executor) {
        let mut plan = Plan::new();
        plan.add_node(
            "people",
            Op::DataSource {
                name: "people".into(),
                path: "people.csv".into(),
                digest: "0".repeat(64),
                schema: people().schema,
            },
            vec![],
        );
        plan.add_node(
            "__guard",
            Op::Selection { predicate: parse_predicate("not outcome is null").unwrap() },
            vec!["people"],
        );
        plan.add_node(
            "__flt",
            Op::Selection { predicate: parse_predicate("age >= 0").unwrap() },
            vec!["__guard"],
        );
        plan.add_node("__split", Op::Split { test_fraction: 0.4, seed: 3 }, vec!["__flt"]);
        feature(&mut plan, "kind", EncoderKind::OneHot, "__split");
        tail(&mut plan, "__split", "__tf_kind_train", "__tf_kind_test");

        let mut rel = people();
        rel.rows[1][3] = Value::Null;
        let mut ex = Executor::new(".");
        ex.source_overrides.insert("people".into(), rel);
        (plan, ex)
    }

    #[test]
    fn failing_variant_is_reported_and_the_rest_still_score() {
        let (plan, ex) = guarded_pipeline();
        let config = AnalysisConfig::OperatorFairness {
            targets: vec!["__guard".into(), "__flt".into()],
        };
        for use_mqo in [true, false] {
            let report = run_analysis(&plan, &ex, &config, use_mqo).unwrap();
            assert_eq!(report.failed.len(), 1, "mqo={use_mqo}: {:?}", report.failed);
            assert_eq!(report.failed[0].label, "remove___guard");
            assert!(
                report.failed[0].error.contains("label is null"),
                "mqo={use_mqo}: {}",
                report.failed[0].error
            );
            assert_eq!(report.variants.len(), 1);
            assert_eq!(report.variants[0].label, "remove___flt");
        }
    }

    #[test]
    fn failing_baseline_aborts_the_analysis() {
        let (plan, ex) = guarded_pipeline();
        let unguarded = apply_patch(
            &plan,
            &Patch::Operator { target: "__guard".into(), action: PatchAction::Remove },
        )
        .unwrap();
        let config = AnalysisConfig::OperatorFairness { targets: vec!["__flt".into()] };
        for use_mqo in [true, false] {
            let err = run_analysis(&unguarded, &ex, &config, use_mqo).unwrap_err();
            assert!(matches!(err, AnalysisError::Exec { .. }), "mqo={use_mqo}: {err:?}");
        }
    }

    #[test]
    fn analysis_reports_are_byte_stable_across_runs() {
        let config = AnalysisConfig::Robustness {
            target: "people".into(),
            column: "age".into(),
            kinds: vec!["outliers".into()],
            fractions: vec![0.25],
            seed: 4,
            branch: BranchSpec::Both,
            outlier_factor: 100.0,
        };
        let a = run_analysis(&pipeline(), &executor(), &config, true).unwrap();
        let b = run_analysis(&pipeline(), &executor(), &config, true).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
