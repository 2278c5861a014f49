//! Instrumented plan interpreter.
//!
//! Nodes evaluate in topological order. Every materialized row carries one
//! annotation slot per active inspection; inspections observe each node's
//! concrete input and output relations exactly once. Intermediates are
//! reference-counted against their remaining consumers and released at the
//! last one, unless explicitly retained.

use crate::exec::corrupt;
use crate::exec::csv::{file_digest, load_csv, CsvError};
use crate::exec::encoders::{fit, FittedStats};
use crate::exec::ops::{self, Derived, OpError};
use crate::inspect::Inspection;
use crate::ir::annot::Annotation;
use crate::ir::plan::{
    BranchSpec, Diagnostic, Op, OpKind, Plan, PlanNode, SplitBranch,
};
use crate::ir::relation::{Relation, RowId};
use crate::ir::value::{Value, ValueType};
use crate::model::{self, FeatureMatrix, MetricError, Model, ModelError, ScoreReport};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::time::Instant;
use thiserror::Error;

/// Runtime value of one plan node.
#[derive(Debug, Clone)]
pub enum NodeOutput {
    Relation(Rc<Relation>),
    Pair { train: Rc<Relation>, test: Rc<Relation> },
    Stats(Rc<FittedStats>),
    Model(Rc<Model>),
    Report(ScoreReport),
}

impl NodeOutput {
    pub fn as_relation(&self) -> Option<&Rc<Relation>> {
        match self {
            NodeOutput::Relation(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_report(&self) -> Option<&ScoreReport> {
        match self {
            NodeOutput::Report(r) => Some(r),
            _ => None,
        }
    }

    /// The relation seen by a consumer on `branch`: pairs route per branch,
    /// plain relations pass through.
    pub fn branch(&self, branch: SplitBranch) -> Option<&Rc<Relation>> {
        match self {
            NodeOutput::Relation(r) => Some(r),
            NodeOutput::Pair { train, test } => Some(match branch {
                SplitBranch::Train => train,
                SplitBranch::Test => test,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("invalid plan: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidPlan(Vec<Diagnostic>),
    #[error("plan has no Score sink (sinks: {})", .0.join(", "))]
    NoScoreSink(Vec<String>),
    #[error("plan has multiple sinks: {}", .0.join(", "))]
    MultipleSinks(Vec<String>),
    #[error("{node}: label is null for row ({}, {})", row.source, row.index)]
    MissingLabel { node: String, row: RowId },
    #[error("{node}: non-numeric value in column \"{column}\" at row ({}, {})", row.source, row.index)]
    NonNumeric { node: String, column: String, row: RowId },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("{node}: rows are misaligned: {message}")]
    Alignment { node: String, message: String },
    #[error("{node}: {source}")]
    Metric { node: String, source: MetricError },
    #[error("{node}: {source}")]
    Model { node: String, source: ModelError },
    #[error("source \"{name}\" changed on disk: {message}")]
    SourceChanged { name: String, message: String },
    #[error("{node}: {message}")]
    Node { node: String, message: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeTrace {
    pub node: String,
    pub op: String,
    pub output_rows: u64,
    pub annotation_slots: u64,
    pub wall_micros: u64,
}

/// Per-run bookkeeping: row counts, timings, warnings, instrumentation
/// accounting, and the aggregate annotations of global-aggregation nodes.
#[derive(Debug, Default, Serialize)]
pub struct ExecutionTrace {
    pub nodes: Vec<NodeTrace>,
    /// Number of node evaluations performed (the MQO reads this).
    pub operators_evaluated: u64,
    /// Peak number of simultaneously retained intermediates.
    pub peak_live: u64,
    pub warnings: Vec<String>,
    /// One summary annotation per inspection for EstimatorFit/TrainModel
    /// nodes: the union over all consumed rows.
    #[serde(skip)]
    pub aggregates: BTreeMap<String, Vec<Annotation>>,
}

/// Execution context: where data lives and what overrides apply.
#[derive(Debug, Default)]
pub struct Executor {
    pub data_root: PathBuf,
    /// Replaces the seed of every Split node when set.
    pub seed_override: Option<u64>,
    /// Replaces the on-disk rows of named sources; row ids are taken from the
    /// override so a restriction of a source keeps its original indices.
    pub source_overrides: BTreeMap<String, Relation>,
}

impl Executor {
    pub fn new(data_root: impl Into<PathBuf>) -> Executor {
        Executor { data_root: data_root.into(), ..Executor::default() }
    }

    /// Scores a pipeline: the plan must validate and have exactly one sink,
    /// a Score node.
    pub fn execute(
        &self,
        plan: &Plan,
        inspections: &mut [&mut dyn Inspection],
    ) -> Result<(ScoreReport, ExecutionTrace), ExecError> {
        let sink = self.score_sink(plan)?;
        let (mut outputs, trace) =
            self.run(plan, Some(&[sink.clone()]), &[sink.clone()], inspections)?;
        let report = match outputs.remove(&sink) {
            Some(NodeOutput::Report(r)) => r,
            other => {
                return Err(ExecError::Node {
                    node: sink,
                    message: format!("sink produced {other:?}, expected a score report"),
                })
            }
        };
        Ok((report, trace))
    }

    /// Evaluates every node and retains every output. The workhorse behind
    /// `run`-style commands that need intermediates for slices and lineage.
    pub fn execute_outputs(
        &self,
        plan: &Plan,
        inspections: &mut [&mut dyn Inspection],
    ) -> Result<(BTreeMap<String, NodeOutput>, ExecutionTrace), ExecError> {
        let retain: Vec<String> = plan.nodes().iter().map(|n| n.id.clone()).collect();
        self.run(plan, None, &retain, inspections)
    }

    /// Evaluates only the ancestors of `target` (inclusive) and returns its
    /// output. Used for relational subplan replay.
    pub fn execute_node(
        &self,
        plan: &Plan,
        target: &str,
        inspections: &mut [&mut dyn Inspection],
    ) -> Result<(NodeOutput, ExecutionTrace), ExecError> {
        let (mut outputs, trace) =
            self.run(plan, Some(&[target.to_string()]), &[target.to_string()], inspections)?;
        let out = outputs.remove(target).ok_or_else(|| ExecError::Node {
            node: target.to_string(),
            message: "target not evaluated".into(),
        })?;
        Ok((out, trace))
    }

    /// Evaluates all sinks of a merged multi-variant plan, retaining exactly
    /// the sink outputs. Release bookkeeping frees everything else.
    pub fn execute_sinks(
        &self,
        plan: &Plan,
        sinks: &[String],
        inspections: &mut [&mut dyn Inspection],
    ) -> Result<(BTreeMap<String, NodeOutput>, ExecutionTrace), ExecError> {
        self.run(plan, None, sinks, inspections)
    }

    fn score_sink(&self, plan: &Plan) -> Result<String, ExecError> {
        let sinks: Vec<String> = plan.sinks().into_iter().map(String::from).collect();
        match sinks.as_slice() {
            [only] => {
                let node = plan.get(only).expect("sink exists");
                if node.op.kind() == OpKind::Score {
                    Ok(only.clone())
                } else {
                    Err(ExecError::NoScoreSink(sinks))
                }
            }
            [] => Err(ExecError::NoScoreSink(sinks)),
            _ => Err(ExecError::MultipleSinks(sinks)),
        }
    }

    /// Core loop. `roots`: restrict evaluation to ancestors of these nodes
    /// (None = whole plan). `retain`: outputs to keep past their last
    /// consumer.
    fn run(
        &self,
        plan: &Plan,
        roots: Option<&[String]>,
        retain: &[String],
        inspections: &mut [&mut dyn Inspection],
    ) -> Result<(BTreeMap<String, NodeOutput>, ExecutionTrace), ExecError> {
        let diagnostics = plan.validate();
        if !diagnostics.is_empty() {
            return Err(ExecError::InvalidPlan(diagnostics));
        }
        let order = plan.topo_order().expect("validated");
        let needed: Option<BTreeSet<&str>> = roots.map(|roots| ancestors(plan, roots));
        let retain: BTreeSet<&str> = retain.iter().map(String::as_str).collect();

        // remaining-consumer counts, including the implicit edge from a
        // sensitive Score back to the test relation it slices
        let mut refcount: HashMap<&str, usize> = HashMap::new();
        for node in plan.nodes() {
            if let Some(needed) = &needed {
                if !needed.contains(node.id.as_str()) {
                    continue;
                }
            }
            for input in &node.inputs {
                *refcount.entry(input.as_str()).or_insert(0) += 1;
            }
            if let Some(dep) = implicit_test_dep(plan, node) {
                *refcount.entry(dep).or_insert(0) += 1;
            }
        }

        let mut outputs: BTreeMap<String, NodeOutput> = BTreeMap::new();
        let mut trace = ExecutionTrace::default();
        let mut peak = 0usize;

        for id in order {
            if let Some(needed) = &needed {
                if !needed.contains(id) {
                    continue;
                }
            }
            let node = plan.get(id).expect("in order");
            let started = Instant::now();
            let output = self.eval(plan, node, &outputs, inspections, &mut trace)?;
            let rows = output_rows(&output);
            trace.nodes.push(NodeTrace {
                node: node.id.clone(),
                op: node.op.kind().to_string(),
                output_rows: rows,
                annotation_slots: rows * inspections.len() as u64,
                wall_micros: started.elapsed().as_micros() as u64,
            });
            trace.operators_evaluated += 1;
            outputs.insert(node.id.clone(), output);
            peak = peak.max(outputs.len());

            // release inputs that have no remaining consumers
            let mut used: Vec<&str> = node.inputs.iter().map(String::as_str).collect();
            if let Some(dep) = implicit_test_dep(plan, node) {
                used.push(dep);
            }
            for input in used {
                if let Some(count) = refcount.get_mut(input) {
                    *count -= 1;
                    if *count == 0 && !retain.contains(input) {
                        outputs.remove(input);
                    }
                }
            }
        }
        trace.peak_live = peak as u64;
        Ok((outputs, trace))
    }

    fn eval(
        &self,
        plan: &Plan,
        node: &PlanNode,
        outputs: &BTreeMap<String, NodeOutput>,
        inspections: &mut [&mut dyn Inspection],
        trace: &mut ExecutionTrace,
    ) -> Result<NodeOutput, ExecError> {
        let input = |i: usize| -> &NodeOutput {
            outputs
                .get(node.inputs[i].as_str())
                .expect("inputs precede consumers in topological order")
        };
        let relation = |i: usize, branch: SplitBranch| -> Result<&Rc<Relation>, ExecError> {
            input(i).branch(branch).ok_or_else(|| ExecError::Node {
                node: node.id.clone(),
                message: format!("input \"{}\" is not a relation", node.inputs[i]),
            })
        };

        match &node.op {
            Op::DataSource { name, path, digest, schema } => {
                let loaded = match self.source_overrides.get(name) {
                    Some(rel) => rel.clone(),
                    None => {
                        let resolved = self.resolve(path);
                        let on_disk = file_digest(&resolved)?;
                        if on_disk != *digest {
                            return Err(ExecError::SourceChanged {
                                name: name.clone(),
                                message: "content digest differs from the one stamped into the plan"
                                    .into(),
                            });
                        }
                        load_csv(&resolved, name)?
                    }
                };
                if loaded.schema != *schema {
                    return Err(ExecError::SourceChanged {
                        name: name.clone(),
                        message: "schema differs from the one stamped into the plan".into(),
                    });
                }
                let mut rel = loaded;
                rel.annotations = (0..rel.n_rows())
                    .map(|i| {
                        inspections
                            .iter_mut()
                            .map(|insp| {
                                insp.annotate_source(
                                    name,
                                    rel.row_ids[i].index,
                                    &rel.rows[i],
                                    &rel.schema,
                                )
                            })
                            .collect()
                    })
                    .collect();
                let rel = Rc::new(rel);
                observe(inspections, node, &[], &[&rel]);
                Ok(NodeOutput::Relation(rel))
            }
            Op::Selection { predicate } => {
                let data = relation(0, SplitBranch::Train)?.clone();
                let derived = ops::selection(&data, predicate);
                Ok(NodeOutput::Relation(finish(node, &[&data], derived, inspections)))
            }
            Op::Projection { columns } => {
                let data = relation(0, SplitBranch::Train)?.clone();
                let derived = ops::projection(&data, columns).map_err(|e| lift(node, e))?;
                Ok(NodeOutput::Relation(finish(node, &[&data], derived, inspections)))
            }
            Op::ExtendedProjection { column, predicate } => {
                let data = relation(0, SplitBranch::Train)?.clone();
                let derived =
                    ops::extended_projection(&data, column, predicate).map_err(|e| lift(node, e))?;
                Ok(NodeOutput::Relation(finish(node, &[&data], derived, inspections)))
            }
            Op::Join { on } => {
                let left = relation(0, SplitBranch::Train)?.clone();
                let right = relation(1, SplitBranch::Train)?.clone();
                let derived = ops::join(&left, &right, on).map_err(|e| lift(node, e))?;
                Ok(NodeOutput::Relation(finish(node, &[&left, &right], derived, inspections)))
            }
            Op::Concat => {
                let left = relation(0, SplitBranch::Train)?.clone();
                let right = relation(1, SplitBranch::Train)?.clone();
                let derived = ops::concat(&left, &right).map_err(|e| lift(node, e))?;
                Ok(NodeOutput::Relation(finish(node, &[&left, &right], derived, inspections)))
            }
            Op::Split { test_fraction, seed } => {
                // An empty branch is a legitimate partition; TrainModel,
                // Predict, and Score enforce non-emptiness where it matters.
                let data = relation(0, SplitBranch::Train)?.clone();
                let seed = self.seed_override.unwrap_or(*seed);
                let (train_d, test_d) = ops::split(&data, *test_fraction, seed);
                let train = annotate(node, &[&data], train_d, inspections);
                let test = annotate(node, &[&data], test_d, inspections);
                observe(inspections, node, &[&data], &[&train, &test]);
                Ok(NodeOutput::Pair { train, test })
            }
            Op::EstimatorFit { column, encoder, .. } => {
                let data = relation(0, SplitBranch::Train)?.clone();
                let ci = data.column_index(column).ok_or_else(|| ExecError::Node {
                    node: node.id.clone(),
                    message: format!("unknown column \"{column}\""),
                })?;
                if let Some(bad) = data.rows.iter().position(|r| {
                    *encoder == crate::ir::plan::EncoderKind::StandardScale
                        && !r[ci].is_null()
                        && r[ci].as_f64().is_none()
                }) {
                    return Err(ExecError::NonNumeric {
                        node: node.id.clone(),
                        column: column.clone(),
                        row: data.row_ids[bad].clone(),
                    });
                }
                let values: Vec<&Value> = data.column_values(ci).collect();
                let stats = fit(*encoder, &values)
                    .map_err(|m| ExecError::Node { node: node.id.clone(), message: m })?;
                record_aggregate(node, &data, inspections, trace);
                observe(inspections, node, &[&data], &[]);
                Ok(NodeOutput::Stats(Rc::new(stats)))
            }
            Op::Transform { column, branch, occurrence } => {
                let stats = match input(0) {
                    NodeOutput::Stats(s) => s.clone(),
                    _ => {
                        return Err(ExecError::Node {
                            node: node.id.clone(),
                            message: "first input is not fitted statistics".into(),
                        })
                    }
                };
                let data = relation(1, *branch)?.clone();
                let (derived, warnings) =
                    ops::transform(&stats, &data, column, *occurrence).map_err(|e| lift(node, e))?;
                for w in warnings {
                    trace.warnings.push(format!("{}: {w}", node.id));
                }
                Ok(NodeOutput::Relation(finish(node, &[&data], derived, inspections)))
            }
            Op::LabelExtract { column, positive, branch } => {
                let data = relation(0, *branch)?.clone();
                let derived =
                    ops::label_extract(&data, column, positive).map_err(|e| lift(node, e))?;
                Ok(NodeOutput::Relation(finish(node, &[&data], derived, inspections)))
            }
            Op::TrainModel { config } => {
                let features = relation(0, SplitBranch::Train)?.clone();
                let labels = relation(1, SplitBranch::Train)?.clone();
                if features.n_rows() == 0 {
                    return Err(ExecError::EmptyTrainSet);
                }
                if features.row_ids != labels.row_ids {
                    return Err(ExecError::Alignment {
                        node: node.id.clone(),
                        message: "feature and label rows differ".into(),
                    });
                }
                let x = to_matrix(node, &features)?;
                let y = to_labels(&labels);
                let model = model::train(config, &x, &y)
                    .map_err(|source| ExecError::Model { node: node.id.clone(), source })?;
                record_aggregate(node, &features, inspections, trace);
                observe(inspections, node, &[&features, &labels], &[]);
                Ok(NodeOutput::Model(Rc::new(model)))
            }
            Op::Predict => {
                let model = match input(0) {
                    NodeOutput::Model(m) => m.clone(),
                    _ => {
                        return Err(ExecError::Node {
                            node: node.id.clone(),
                            message: "first input is not a trained model".into(),
                        })
                    }
                };
                let features = relation(1, SplitBranch::Test)?.clone();
                if features.n_rows() == 0 {
                    return Err(ExecError::EmptyTestSet);
                }
                let x = to_matrix(node, &features)?;
                let probabilities = model::predict(&model, &x)
                    .map_err(|source| ExecError::Model { node: node.id.clone(), source })?;
                let schema = crate::ir::value::Schema::new(vec![
                    ("score".into(), ValueType::Float),
                    ("prediction".into(), ValueType::Bool),
                ])
                .expect("static");
                let mut derived = Derived {
                    relation: Relation::empty(schema),
                    parents: Vec::with_capacity(features.n_rows()),
                };
                for (i, p) in probabilities.iter().enumerate() {
                    derived.relation.rows.push(vec![
                        Value::Float(*p),
                        Value::Bool(model::classify(*p)),
                    ]);
                    derived.relation.row_ids.push(features.row_ids[i].clone());
                    derived.parents.push(vec![(0, i)]);
                }
                Ok(NodeOutput::Relation(finish(node, &[&features], derived, inspections)))
            }
            Op::Score { metrics, sensitive } => {
                let predictions = relation(0, SplitBranch::Test)?.clone();
                let labels = relation(1, SplitBranch::Test)?.clone();
                if predictions.n_rows() == 0 {
                    return Err(ExecError::EmptyTestSet);
                }
                if predictions.row_ids != labels.row_ids {
                    return Err(ExecError::Alignment {
                        node: node.id.clone(),
                        message: "prediction and label rows differ".into(),
                    });
                }
                let pred_ci = predictions.column_index("prediction").ok_or_else(|| {
                    ExecError::Node {
                        node: node.id.clone(),
                        message: "predictions input lacks a \"prediction\" column".into(),
                    }
                })?;
                let predicted: Vec<bool> = predictions
                    .column_values(pred_ci)
                    .map(|v| v.as_bool().unwrap_or(false))
                    .collect();
                let label_values = to_labels(&labels);
                let truth: Vec<bool> = label_values.iter().map(|y| *y == 1.0).collect();

                let mut report = BTreeMap::new();
                for metric in metrics {
                    let value = match metric.as_str() {
                        "accuracy" => model::accuracy(&predicted, &truth),
                        "demographic_parity_difference" => {
                            let spec = sensitive.as_ref().expect("validated");
                            let groups =
                                self.sensitive_groups(plan, node, outputs, &predictions, spec)?;
                            model::metric_dpd(&predicted, &groups, &spec.privileged).map_err(
                                |source| ExecError::Metric { node: node.id.clone(), source },
                            )?
                        }
                        other => {
                            return Err(ExecError::Node {
                                node: node.id.clone(),
                                message: format!("unknown metric \"{other}\""),
                            })
                        }
                    };
                    report.insert(metric.clone(), value);
                }
                observe(inspections, node, &[&predictions, &labels], &[]);
                Ok(NodeOutput::Report(ScoreReport(report)))
            }
            Op::Corruption { column, corruption, fraction, seed, branch } => {
                match input(0) {
                    NodeOutput::Relation(data) => {
                        let data = data.clone();
                        let derived = corrupt::corrupt(&data, column, corruption, *fraction, *seed)
                            .map_err(|e| lift(node, e))?;
                        Ok(NodeOutput::Relation(finish(node, &[&data], derived, inspections)))
                    }
                    NodeOutput::Pair { train, test } => {
                        let (train, test) = (train.clone(), test.clone());
                        let hit = |b: SplitBranch| match branch {
                            BranchSpec::Both => true,
                            BranchSpec::Train => b == SplitBranch::Train,
                            BranchSpec::Test => b == SplitBranch::Test,
                        };
                        let make = |rel: &Rc<Relation>,
                                        b: SplitBranch,
                                        input_index: usize|
                         -> Result<Derived, ExecError> {
                            let mut derived = if hit(b) {
                                corrupt::corrupt(rel, column, corruption, *fraction, *seed)
                                    .map_err(|e| lift(node, e))?
                            } else {
                                passthrough(rel)
                            };
                            for parents in &mut derived.parents {
                                for p in parents.iter_mut() {
                                    p.0 = input_index;
                                }
                            }
                            Ok(derived)
                        };
                        let train_d = make(&train, SplitBranch::Train, 0)?;
                        let test_d = make(&test, SplitBranch::Test, 1)?;
                        let inputs: [&Rc<Relation>; 2] = [&train, &test];
                        let train_out = annotate(node, &inputs, train_d, inspections);
                        let test_out = annotate(node, &inputs, test_d, inspections);
                        observe(inspections, node, &[&train, &test], &[&train_out, &test_out]);
                        Ok(NodeOutput::Pair { train: train_out, test: test_out })
                    }
                    _ => Err(ExecError::Node {
                        node: node.id.clone(),
                        message: "corruption input is not relational".into(),
                    }),
                }
            }
        }
    }

    /// Group values aligned with the prediction rows, read from the
    /// pre-featurization test relation (the labels node's data input).
    fn sensitive_groups(
        &self,
        plan: &Plan,
        node: &PlanNode,
        outputs: &BTreeMap<String, NodeOutput>,
        predictions: &Relation,
        spec: &crate::ir::plan::SensitiveSpec,
    ) -> Result<Vec<Option<String>>, ExecError> {
        let test = self
            .test_relation(plan, node, outputs)
            .ok_or_else(|| ExecError::Node {
                node: node.id.clone(),
                message: "cannot locate the test relation for the sensitive column".into(),
            })?;
        let ci = test.column_index(&spec.column).ok_or_else(|| ExecError::Node {
            node: node.id.clone(),
            message: format!("sensitive column \"{}\" missing from the test relation", spec.column),
        })?;
        let by_id: BTreeMap<&RowId, &Value> = test
            .row_ids
            .iter()
            .zip(test.rows.iter().map(|r| &r[ci]))
            .collect();
        predictions
            .row_ids
            .iter()
            .map(|row_id| {
                let value = by_id.get(row_id).ok_or_else(|| ExecError::Alignment {
                    node: node.id.clone(),
                    message: format!(
                        "prediction row ({}, {}) is missing from the test relation",
                        row_id.source, row_id.index
                    ),
                })?;
                Ok((!value.is_null()).then(|| value.display_string()))
            })
            .collect()
    }

    /// The relation feeding this Score's labels branch.
    pub fn test_relation<'o>(
        &self,
        plan: &Plan,
        node: &PlanNode,
        outputs: &'o BTreeMap<String, NodeOutput>,
    ) -> Option<&'o Rc<Relation>> {
        let labels = plan.get(node.inputs.get(1)?)?;
        let root = labels.inputs.first()?;
        let branch = match &labels.op {
            Op::LabelExtract { branch, .. } => *branch,
            _ => SplitBranch::Test,
        };
        outputs.get(root.as_str())?.branch(branch)
    }

    fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_root.join(p)
        }
    }
}

/// Ancestor closure (inclusive) over input edges plus the implicit
/// Score-to-test-relation dependency.
fn ancestors<'p>(plan: &'p Plan, roots: &[String]) -> BTreeSet<&'p str> {
    let mut needed: BTreeSet<&str> = BTreeSet::new();
    let mut stack: Vec<&str> = Vec::new();
    for root in roots {
        if let Some(node) = plan.get(root) {
            stack.push(node.id.as_str());
        }
    }
    while let Some(id) = stack.pop() {
        if !needed.insert(id) {
            continue;
        }
        let Some(node) = plan.get(id) else { continue };
        for input in &node.inputs {
            stack.push(input.as_str());
        }
        if let Some(dep) = implicit_test_dep(plan, node) {
            stack.push(dep);
        }
    }
    needed
}

/// A Score node with a sensitive spec reads the test relation that feeds its
/// labels input; that read keeps the relation alive in the release logic.
fn implicit_test_dep<'p>(plan: &'p Plan, node: &PlanNode) -> Option<&'p str> {
    match &node.op {
        Op::Score { sensitive: Some(_), .. } => {
            let labels = plan.get(node.inputs.get(1)?)?;
            let root = labels.inputs.first()?;
            Some(plan.get(root)?.id.as_str())
        }
        _ => None,
    }
}

fn lift(node: &PlanNode, err: OpError) -> ExecError {
    match err {
        OpError::MissingLabel { row } => ExecError::MissingLabel { node: node.id.clone(), row },
        OpError::NonNumeric { column, row } => {
            ExecError::NonNumeric { node: node.id.clone(), column, row }
        }
        OpError::Internal(message) => ExecError::Node { node: node.id.clone(), message },
    }
}

/// Identity Derived over a relation (used for the untouched corruption branch).
fn passthrough(rel: &Relation) -> Derived {
    Derived {
        relation: Relation {
            schema: rel.schema.clone(),
            rows: rel.rows.clone(),
            row_ids: rel.row_ids.clone(),
            annotations: Vec::new(),
        },
        parents: (0..rel.n_rows()).map(|i| vec![(0, i)]).collect(),
    }
}

/// Fills the annotation slots of a derived relation from its parent rows.
fn annotate(
    node: &PlanNode,
    inputs: &[&Rc<Relation>],
    mut derived: Derived,
    inspections: &mut [&mut dyn Inspection],
) -> Rc<Relation> {
    let kind = node.op.kind();
    derived.relation.annotations = (0..derived.relation.rows.len())
        .map(|i| {
            inspections
                .iter_mut()
                .enumerate()
                .map(|(slot, insp)| {
                    let parents: Vec<&Annotation> = derived.parents[i]
                        .iter()
                        .map(|(j, r)| &inputs[*j].annotations[*r][slot])
                        .collect();
                    insp.annotate_derived(
                        kind,
                        &parents,
                        &derived.relation.rows[i],
                        &derived.relation.schema,
                    )
                })
                .collect()
        })
        .collect();
    Rc::new(derived.relation)
}

fn finish(
    node: &PlanNode,
    inputs: &[&Rc<Relation>],
    derived: Derived,
    inspections: &mut [&mut dyn Inspection],
) -> Rc<Relation> {
    let rel = annotate(node, inputs, derived, inspections);
    observe(inspections, node, inputs, &[&rel]);
    rel
}

fn observe(
    inspections: &mut [&mut dyn Inspection],
    node: &PlanNode,
    inputs: &[&Rc<Relation>],
    outputs: &[&Rc<Relation>],
) {
    let input_refs: Vec<&Relation> = inputs.iter().map(|r| r.as_ref()).collect();
    let output_refs: Vec<&Relation> = outputs.iter().map(|r| r.as_ref()).collect();
    for (slot, insp) in inspections.iter_mut().enumerate() {
        insp.observe(slot, node, &input_refs, &output_refs);
    }
}

/// Summary annotation of a global aggregation: per inspection, the derived
/// annotation over every consumed row.
fn record_aggregate(
    node: &PlanNode,
    consumed: &Relation,
    inspections: &mut [&mut dyn Inspection],
    trace: &mut ExecutionTrace,
) {
    if inspections.is_empty() {
        return;
    }
    let kind = node.op.kind();
    let summary: Vec<Annotation> = inspections
        .iter_mut()
        .enumerate()
        .map(|(slot, insp)| {
            let parents: Vec<&Annotation> =
                consumed.annotations.iter().map(|slots| &slots[slot]).collect();
            insp.annotate_derived(kind, &parents, &[], &consumed.schema)
        })
        .collect();
    trace.aggregates.insert(node.id.clone(), summary);
}

fn output_rows(output: &NodeOutput) -> u64 {
    match output {
        NodeOutput::Relation(r) => r.n_rows() as u64,
        NodeOutput::Pair { train, test } => (train.n_rows() + test.n_rows()) as u64,
        _ => 0,
    }
}

fn to_matrix(node: &PlanNode, features: &Relation) -> Result<FeatureMatrix, ExecError> {
    let mut rows = Vec::with_capacity(features.n_rows());
    for (i, row) in features.rows.iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for (ci, v) in row.iter().enumerate() {
            let x = v.as_f64().ok_or_else(|| ExecError::NonNumeric {
                node: node.id.clone(),
                column: features.schema.columns()[ci].0.clone(),
                row: features.row_ids[i].clone(),
            })?;
            out.push(x);
        }
        rows.push(out);
    }
    Ok(FeatureMatrix {
        columns: features.schema.names().into_iter().map(String::from).collect(),
        rows,
    })
}

fn to_labels(labels: &Relation) -> Vec<f64> {
    let ci = labels.column_index("label").expect("label block shape");
    labels
        .column_values(ci)
        .map(|v| if v.as_bool().unwrap_or(false) { 1.0 } else { 0.0 })
        .collect()
}
