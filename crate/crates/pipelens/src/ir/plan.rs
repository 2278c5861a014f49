//! Plan DAG: operator nodes, validation, topological order, schema inference.

use crate::ir::predicate::Predicate;
use crate::ir::value::{Schema, ValueType};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;

/// Operator vocabulary. The closure of selections, projections and joins
/// plus featurization, splitting, training, and what-if corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum OpKind {
    DataSource,
    Selection,
    Projection,
    ExtendedProjection,
    Join,
    Concat,
    Split,
    EstimatorFit,
    Transform,
    LabelExtract,
    TrainModel,
    Predict,
    Score,
    Corruption,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            OpKind::DataSource => "DataSource",
            OpKind::Selection => "Selection",
            OpKind::Projection => "Projection",
            OpKind::ExtendedProjection => "ExtendedProjection",
            OpKind::Join => "Join",
            OpKind::Concat => "Concat",
            OpKind::Split => "Split",
            OpKind::EstimatorFit => "EstimatorFit",
            OpKind::Transform => "Transform",
            OpKind::LabelExtract => "LabelExtract",
            OpKind::TrainModel => "TrainModel",
            OpKind::Predict => "Predict",
            OpKind::Score => "Score",
            OpKind::Corruption => "Corruption",
        };
        f.write_str(name)
    }
}

/// Which half of a train/test pair an operator consumes or produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitBranch {
    Train,
    Test,
}

impl SplitBranch {
    pub fn name(&self) -> &'static str {
        match self {
            SplitBranch::Train => "train",
            SplitBranch::Test => "test",
        }
    }
}

/// Corruption scope: one branch of a pair, or everything flowing through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchSpec {
    Train,
    Test,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    OneHot,
    StandardScale,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::OneHot => "one_hot",
            EncoderKind::StandardScale => "standard_scale",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionKind {
    MissingValues,
    Outliers { factor: f64 },
    CategorySwap,
}

impl CorruptionKind {
    pub fn name(&self) -> &'static str {
        match self {
            CorruptionKind::MissingValues => "missing_values",
            CorruptionKind::Outliers { .. } => "outliers",
            CorruptionKind::CategorySwap => "category_swap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    LogisticRegression {
        lr: f64,
        epochs: u32,
        #[serde(default)]
        seed: u64,
    },
    Majority,
    DecisionStump,
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

/// Protected attribute configuration carried by the Score node so fairness
/// metrics and slice scores are a function of the plan alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveSpec {
    pub column: String,
    pub privileged: String,
}

/// Operator parameters, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "op_kind", content = "params")]
pub enum Op {
    /// Schema and content digest are stamped at load so that validation and
    /// fingerprinting are pure functions of the plan.
    DataSource {
        name: String,
        path: String,
        digest: String,
        schema: Schema,
    },
    Selection {
        predicate: Predicate,
    },
    Projection {
        columns: Vec<String>,
    },
    ExtendedProjection {
        column: String,
        predicate: Predicate,
    },
    Join {
        on: String,
    },
    Concat,
    Split {
        test_fraction: f64,
        seed: u64,
    },
    EstimatorFit {
        column: String,
        encoder: EncoderKind,
        #[serde(skip_serializing_if = "is_zero")]
        occurrence: u32,
    },
    Transform {
        column: String,
        branch: SplitBranch,
        #[serde(skip_serializing_if = "is_zero")]
        occurrence: u32,
    },
    LabelExtract {
        column: String,
        positive: String,
        branch: SplitBranch,
    },
    TrainModel {
        config: ModelConfig,
    },
    Predict,
    Score {
        metrics: Vec<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        sensitive: Option<SensitiveSpec>,
    },
    Corruption {
        column: String,
        corruption: CorruptionKind,
        fraction: f64,
        seed: u64,
        branch: BranchSpec,
    },
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::DataSource { .. } => OpKind::DataSource,
            Op::Selection { .. } => OpKind::Selection,
            Op::Projection { .. } => OpKind::Projection,
            Op::ExtendedProjection { .. } => OpKind::ExtendedProjection,
            Op::Join { .. } => OpKind::Join,
            Op::Concat => OpKind::Concat,
            Op::Split { .. } => OpKind::Split,
            Op::EstimatorFit { .. } => OpKind::EstimatorFit,
            Op::Transform { .. } => OpKind::Transform,
            Op::LabelExtract { .. } => OpKind::LabelExtract,
            Op::TrainModel { .. } => OpKind::TrainModel,
            Op::Predict => OpKind::Predict,
            Op::Score { .. } => OpKind::Score,
            Op::Corruption { .. } => OpKind::Corruption,
        }
    }

    pub fn arity(&self) -> usize {
        match self.kind() {
            OpKind::DataSource => 0,
            OpKind::Join
            | OpKind::Concat
            | OpKind::Transform
            | OpKind::TrainModel
            | OpKind::Predict
            | OpKind::Score => 2,
            _ => 1,
        }
    }
}

/// Name of the `i`-th generated feature column for a featurize entry.
/// Occurrence 0 is the common case; later occurrences of a repeated column
/// are disambiguated so concatenated schemas stay collision-free.
pub fn feature_column(column: &str, occurrence: u32, i: usize) -> String {
    if occurrence == 0 {
        format!("{column}__f{i}")
    } else {
        format!("{column}__{occurrence}__f{i}")
    }
}

/// Node id of a featurize entry's fit node. `occurrence` disambiguates a
/// column listed more than once.
pub fn fit_id(column: &str, occurrence: u32) -> String {
    if occurrence == 0 {
        format!("__fit_{column}")
    } else {
        format!("__fit_{column}__{occurrence}")
    }
}

/// Node id of a featurize entry's per-branch transform node.
pub fn transform_id(column: &str, occurrence: u32, branch: SplitBranch) -> String {
    if occurrence == 0 {
        format!("__tf_{column}_{}", branch.name())
    } else {
        format!("__tf_{column}__{occurrence}_{}", branch.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanNode {
    pub id: String,
    #[serde(flatten)]
    pub op: Op,
    pub inputs: Vec<String>,
}

impl PlanNode {
    pub fn new(id: impl Into<String>, op: Op, inputs: Vec<String>) -> Self {
        PlanNode { id: id.into(), op, inputs }
    }
}

/// What a node's output is at runtime. Relations flow between relational
/// operators; the other categories are artifacts consumed by specific kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Relation,
    /// Train/test relation pair produced by Split.
    Pair,
    Stats,
    Model,
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub node: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.node, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchemaError {
    #[error("{node}: unknown node")]
    UnknownNode { node: String },
    #[error("{node}: unknown column \"{column}\"")]
    UnknownColumn { node: String, column: String },
    #[error("{node}: {message}")]
    Invalid { node: String, message: String },
}

impl SchemaError {
    pub fn node(&self) -> &str {
        match self {
            SchemaError::UnknownNode { node }
            | SchemaError::UnknownColumn { node, .. }
            | SchemaError::Invalid { node, .. } => node,
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        let message = match self {
            SchemaError::UnknownNode { .. } => "unknown node".to_string(),
            SchemaError::UnknownColumn { column, .. } => format!("unknown column \"{column}\""),
            SchemaError::Invalid { message, .. } => message.clone(),
        };
        Diagnostic { node: self.node().to_string(), message }
    }
}

/// A logical query plan. Nodes keep insertion order; the graph structure is
/// given by each node's input ids. Construction never fails; `validate`
/// reports every invariant violation as a diagnostic.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Plan {
    nodes: Vec<PlanNode>,
}

impl Plan {
    pub fn new() -> Self {
        Plan::default()
    }

    pub fn add(&mut self, node: PlanNode) {
        self.nodes.push(node);
    }

    pub fn add_node(&mut self, id: impl Into<String>, op: Op, inputs: Vec<&str>) {
        self.add(PlanNode::new(id, op, inputs.into_iter().map(String::from).collect()));
    }

    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut Vec<PlanNode> {
        &mut self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PlanNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut PlanNode> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    /// Nodes no other node consumes, in insertion order.
    pub fn sinks(&self) -> Vec<&str> {
        let consumed: HashSet<&str> = self
            .nodes
            .iter()
            .flat_map(|n| n.inputs.iter().map(String::as_str))
            .collect();
        self.nodes
            .iter()
            .filter(|n| !consumed.contains(n.id.as_str()))
            .map(|n| n.id.as_str())
            .collect()
    }

    /// Nodes that list `id` among their inputs, in insertion order.
    pub fn consumers(&self, id: &str) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.inputs.iter().any(|i| i == id))
            .map(|n| n.id.as_str())
            .collect()
    }

    /// Stable topological order (insertion order among ready nodes).
    /// Errors with the ids stuck on a cycle, in insertion order.
    pub fn topo_order(&self) -> Result<Vec<&str>, Vec<&str>> {
        let index: HashMap<&str, usize> =
            self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let mut indegree: Vec<usize> = self
            .nodes
            .iter()
            .map(|n| n.inputs.iter().filter(|i| index.contains_key(i.as_str())).count())
            .collect();
        let mut done = vec![false; self.nodes.len()];
        let mut order = Vec::with_capacity(self.nodes.len());
        loop {
            let next = (0..self.nodes.len()).find(|&i| !done[i] && indegree[i] == 0);
            let Some(i) = next else { break };
            done[i] = true;
            order.push(self.nodes[i].id.as_str());
            for (j, node) in self.nodes.iter().enumerate() {
                if !done[j] && node.inputs.iter().any(|inp| inp == &self.nodes[i].id) {
                    indegree[j] = indegree[j].saturating_sub(
                        node.inputs.iter().filter(|inp| *inp == &self.nodes[i].id).count(),
                    );
                }
            }
        }
        if order.len() == self.nodes.len() {
            Ok(order)
        } else {
            Err(self
                .nodes
                .iter()
                .enumerate()
                .filter(|(i, _)| !done[*i])
                .map(|(_, n)| n.id.as_str())
                .collect())
        }
    }

    /// Empty iff the plan satisfies every structural invariant and schemas
    /// are inferable end-to-end.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();

        let mut seen: HashSet<&str> = HashSet::new();
        let mut reported: HashSet<&str> = HashSet::new();
        for node in &self.nodes {
            if !seen.insert(node.id.as_str()) && reported.insert(node.id.as_str()) {
                diags.push(Diagnostic {
                    node: node.id.clone(),
                    message: format!("duplicate node id \"{}\"", node.id),
                });
            }
        }

        for node in &self.nodes {
            for input in &node.inputs {
                if !seen.contains(input.as_str()) {
                    diags.push(Diagnostic {
                        node: node.id.clone(),
                        message: format!("unknown input \"{input}\""),
                    });
                }
            }
            let want = node.op.arity();
            if node.inputs.len() != want {
                diags.push(Diagnostic {
                    node: node.id.clone(),
                    message: format!(
                        "{} takes {} input(s), got {}",
                        node.op.kind(),
                        want,
                        node.inputs.len()
                    ),
                });
            }
        }

        if let Err(stuck) = self.topo_order() {
            diags.push(Diagnostic {
                node: stuck.first().map(|s| s.to_string()).unwrap_or_default(),
                message: format!("cycle detected: {}", stuck.join(", ")),
            });
        }

        if !diags.is_empty() {
            return diags;
        }

        // One resolve failure poisons every dependent node with the same
        // root error; report each failing node once.
        let mut resolver = Resolver::new(self);
        let order = self.topo_order().expect("acyclic checked above");
        let mut failed: HashSet<String> = HashSet::new();
        for id in order {
            if let Err(err) = resolver.resolve(id) {
                if failed.insert(err.node().to_string()) {
                    diags.push(err.to_diagnostic());
                }
            }
        }
        diags
    }

    /// Output schema of a node. Artifact-producing nodes (EstimatorFit,
    /// TrainModel, Score) have an empty schema.
    pub fn infer_schema(&self, node_id: &str) -> Result<Schema, SchemaError> {
        let mut resolver = Resolver::new(self);
        resolver.resolve(node_id).map(|(_, schema)| schema)
    }

    pub fn output_category(&self, node_id: &str) -> Result<Category, SchemaError> {
        let mut resolver = Resolver::new(self);
        resolver.resolve(node_id).map(|(cat, _)| cat)
    }
}

/// Join output: left columns, then right columns minus the key; non-key
/// names present on both sides get `_l`/`_r` suffixes.
pub(crate) fn join_schema(left: &Schema, right: &Schema, on: &str) -> Result<Schema, String> {
    let left_type = left.type_of(on).ok_or_else(|| format!("unknown column \"{on}\""))?;
    let right_type = right.type_of(on).ok_or_else(|| format!("unknown column \"{on}\""))?;
    let key_type = widen_pair(left_type, right_type).ok_or_else(|| {
        format!("join key \"{on}\" has incompatible types {left_type} and {right_type}")
    })?;

    let right_names: HashSet<&str> = right.names().into_iter().collect();
    let left_names: HashSet<&str> = left.names().into_iter().collect();
    let mut columns = Vec::new();
    for (name, ty) in left.columns() {
        if name == on {
            columns.push((name.clone(), key_type));
        } else if right_names.contains(name.as_str()) {
            columns.push((format!("{name}_l"), *ty));
        } else {
            columns.push((name.clone(), *ty));
        }
    }
    for (name, ty) in right.columns() {
        if name == on {
            continue;
        }
        if left_names.contains(name.as_str()) {
            columns.push((format!("{name}_r"), *ty));
        } else {
            columns.push((name.clone(), *ty));
        }
    }
    Schema::new(columns)
}

/// Int widens to Float; otherwise types must match exactly.
fn widen_pair(a: ValueType, b: ValueType) -> Option<ValueType> {
    use ValueType::*;
    match (a, b) {
        _ if a == b => Some(a),
        (Int, Float) | (Float, Int) => Some(Float),
        _ => None,
    }
}

struct Resolver<'p> {
    plan: &'p Plan,
    memo: HashMap<&'p str, (Category, Schema)>,
    visiting: HashSet<&'p str>,
}

impl<'p> Resolver<'p> {
    fn new(plan: &'p Plan) -> Self {
        Resolver { plan, memo: HashMap::new(), visiting: HashSet::new() }
    }

    fn resolve(&mut self, id: &str) -> Result<(Category, Schema), SchemaError> {
        if let Some(found) = self.memo.get(id) {
            return Ok(found.clone());
        }
        let node = self
            .plan
            .get(id)
            .ok_or_else(|| SchemaError::UnknownNode { node: id.to_string() })?;
        if !self.visiting.insert(&node.id) {
            return Err(SchemaError::Invalid {
                node: id.to_string(),
                message: "cycle detected during schema inference".into(),
            });
        }
        // visiting must be unwound on error too, or a failed ancestor
        // masquerades as a cycle for every later caller.
        let out = (|| {
            let mut inputs = Vec::with_capacity(node.inputs.len());
            for input in &node.inputs {
                inputs.push(self.resolve(input)?);
            }
            infer_node(node, &inputs)
        })();
        self.visiting.remove(node.id.as_str());
        let out = out?;
        self.memo.insert(&node.id, out.clone());
        Ok(out)
    }
}

fn invalid(node: &PlanNode, message: impl Into<String>) -> SchemaError {
    SchemaError::Invalid { node: node.id.clone(), message: message.into() }
}

fn unknown_column(node: &PlanNode, column: &str) -> SchemaError {
    SchemaError::UnknownColumn { node: node.id.clone(), column: column.to_string() }
}

/// A relation, or either half of a pair. Artifacts are rejected.
fn relational<'a>(
    node: &PlanNode,
    input: &'a (Category, Schema),
    role: &str,
) -> Result<&'a Schema, SchemaError> {
    match input.0 {
        Category::Relation | Category::Pair => Ok(&input.1),
        other => Err(invalid(
            node,
            format!("{role} input must be a relation, got {other:?}"),
        )),
    }
}

/// Strictly a relation: pairs must be consumed by branch-aware operators.
fn relation_only<'a>(
    node: &PlanNode,
    input: &'a (Category, Schema),
    role: &str,
) -> Result<&'a Schema, SchemaError> {
    match input.0 {
        Category::Relation => Ok(&input.1),
        other => Err(invalid(
            node,
            format!("{role} input must be a relation, got {other:?}"),
        )),
    }
}

fn check_predicate(node: &PlanNode, predicate: &Predicate, schema: &Schema) -> Result<(), SchemaError> {
    for column in predicate.columns() {
        if schema.index_of(column).is_none() {
            return Err(unknown_column(node, column));
        }
    }
    predicate.check(schema).map_err(|msg| invalid(node, msg))
}

fn infer_node(
    node: &PlanNode,
    inputs: &[(Category, Schema)],
) -> Result<(Category, Schema), SchemaError> {
    use Category::*;
    match &node.op {
        Op::DataSource { schema, .. } => Ok((Relation, schema.clone())),
        Op::Selection { predicate } => {
            let schema = relation_only(node, &inputs[0], "data")?;
            check_predicate(node, predicate, schema)?;
            Ok((Relation, schema.clone()))
        }
        Op::Projection { columns } => {
            let schema = relation_only(node, &inputs[0], "data")?;
            let mut picked = Vec::with_capacity(columns.len());
            for column in columns {
                let ty = schema
                    .type_of(column)
                    .ok_or_else(|| unknown_column(node, column))?;
                picked.push((column.clone(), ty));
            }
            Schema::new(picked).map(|s| (Relation, s)).map_err(|m| invalid(node, m))
        }
        Op::ExtendedProjection { column, predicate } => {
            let schema = relation_only(node, &inputs[0], "data")?;
            check_predicate(node, predicate, schema)?;
            let mut columns = schema.columns().to_vec();
            columns.push((column.clone(), ValueType::Bool));
            Schema::new(columns).map(|s| (Relation, s)).map_err(|m| invalid(node, m))
        }
        Op::Join { on } => {
            let left = relation_only(node, &inputs[0], "left")?;
            let right = relation_only(node, &inputs[1], "right")?;
            join_schema(left, right, on).map(|s| (Relation, s)).map_err(|m| {
                if m.starts_with("unknown column") {
                    unknown_column(node, on)
                } else {
                    invalid(node, m)
                }
            })
        }
        Op::Concat => {
            let left = relation_only(node, &inputs[0], "left")?;
            let right = relation_only(node, &inputs[1], "right")?;
            let mut columns = left.columns().to_vec();
            columns.extend(right.columns().iter().cloned());
            Schema::new(columns).map(|s| (Relation, s)).map_err(|m| invalid(node, m))
        }
        Op::Split { test_fraction, .. } => {
            let schema = relation_only(node, &inputs[0], "data")?;
            if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                return Err(invalid(
                    node,
                    format!("test_fraction must be in (0, 1), got {test_fraction}"),
                ));
            }
            Ok((Pair, schema.clone()))
        }
        Op::EstimatorFit { column, encoder, .. } => {
            let schema = relational(node, &inputs[0], "train")?;
            let ty = schema.type_of(column).ok_or_else(|| unknown_column(node, column))?;
            check_encoder_type(node, *encoder, column, ty)?;
            Ok((Stats, Schema::empty()))
        }
        Op::Transform { column, occurrence, .. } => {
            if inputs[0].0 != Stats {
                return Err(invalid(node, "first input must be fitted statistics"));
            }
            let schema = relational(node, &inputs[1], "data")?;
            if schema.index_of(column).is_none() {
                return Err(unknown_column(node, column));
            }
            // One-hot width is data-dependent; a single representative
            // feature column stands in for the block at inference time.
            let cols = vec![(feature_column(column, *occurrence, 0), ValueType::Float)];
            Schema::new(cols).map(|s| (Relation, s)).map_err(|m| invalid(node, m))
        }
        Op::LabelExtract { column, .. } => {
            let schema = relational(node, &inputs[0], "data")?;
            if schema.index_of(column).is_none() {
                return Err(unknown_column(node, column));
            }
            let out = Schema::new(vec![("label".into(), ValueType::Bool)]).expect("static");
            Ok((Relation, out))
        }
        Op::TrainModel { .. } => {
            let features = relation_only(node, &inputs[0], "features")?;
            check_feature_matrix(node, features)?;
            let labels = relation_only(node, &inputs[1], "labels")?;
            check_label_block(node, labels)?;
            Ok((Model, Schema::empty()))
        }
        Op::Predict => {
            if inputs[0].0 != Model {
                return Err(invalid(node, "first input must be a trained model"));
            }
            let features = relation_only(node, &inputs[1], "features")?;
            check_feature_matrix(node, features)?;
            let out = Schema::new(vec![
                ("score".into(), ValueType::Float),
                ("prediction".into(), ValueType::Bool),
            ])
            .expect("static");
            Ok((Relation, out))
        }
        Op::Score { metrics, sensitive } => {
            let predictions = relation_only(node, &inputs[0], "predictions")?;
            if predictions.type_of("prediction") != Some(ValueType::Bool) {
                return Err(invalid(node, "predictions input must carry a Bool \"prediction\" column"));
            }
            let labels = relation_only(node, &inputs[1], "labels")?;
            check_label_block(node, labels)?;
            if metrics.is_empty() {
                return Err(invalid(node, "no metrics requested"));
            }
            for metric in metrics {
                match metric.as_str() {
                    "accuracy" => {}
                    "demographic_parity_difference" => {
                        if sensitive.is_none() {
                            return Err(invalid(
                                node,
                                "demographic_parity_difference requires a sensitive column",
                            ));
                        }
                    }
                    other => return Err(invalid(node, format!("unknown metric \"{other}\""))),
                }
            }
            Ok((Report, Schema::empty()))
        }
        Op::Corruption { column, corruption, fraction, .. } => {
            let (category, schema) = (&inputs[0].0, relational(node, &inputs[0], "data")?);
            if !(0.0..=1.0).contains(fraction) {
                return Err(invalid(node, format!("fraction must be in [0, 1], got {fraction}")));
            }
            let ty = schema.type_of(column).ok_or_else(|| unknown_column(node, column))?;
            let out_ty = match corruption {
                CorruptionKind::MissingValues => ty,
                CorruptionKind::Outliers { .. } => match ty {
                    ValueType::Int | ValueType::Float => ValueType::Float,
                    other => {
                        return Err(invalid(
                            node,
                            format!("outlier corruption needs a numeric column, \"{column}\" is {other}"),
                        ))
                    }
                },
                CorruptionKind::CategorySwap => {
                    if ty != ValueType::Text {
                        return Err(invalid(
                            node,
                            format!("category swap needs a text column, \"{column}\" is {ty}"),
                        ));
                    }
                    ty
                }
            };
            let columns = schema
                .columns()
                .iter()
                .map(|(name, t)| {
                    if name == column {
                        (name.clone(), out_ty)
                    } else {
                        (name.clone(), *t)
                    }
                })
                .collect();
            let out = Schema::new(columns).map_err(|m| invalid(node, m))?;
            Ok((*category, out))
        }
    }
}

fn check_encoder_type(
    node: &PlanNode,
    encoder: EncoderKind,
    column: &str,
    ty: ValueType,
) -> Result<(), SchemaError> {
    match encoder {
        EncoderKind::StandardScale => match ty {
            ValueType::Int | ValueType::Float => Ok(()),
            other => Err(invalid(
                node,
                format!("standard_scale needs a numeric column, \"{column}\" is {other}"),
            )),
        },
        EncoderKind::OneHot => match ty {
            ValueType::Text | ValueType::Int | ValueType::Bool => Ok(()),
            ValueType::Float => Err(invalid(
                node,
                format!("one_hot needs a categorical column, \"{column}\" is float"),
            )),
        },
    }
}

fn check_feature_matrix(node: &PlanNode, schema: &Schema) -> Result<(), SchemaError> {
    if schema.is_empty() {
        return Err(invalid(node, "feature matrix has no columns"));
    }
    for (name, ty) in schema.columns() {
        if *ty != ValueType::Float {
            return Err(invalid(
                node,
                format!("feature column \"{name}\" must be float, got {ty}"),
            ));
        }
    }
    Ok(())
}

fn check_label_block(node: &PlanNode, schema: &Schema) -> Result<(), SchemaError> {
    if schema.len() != 1 || schema.columns()[0].1 != ValueType::Bool {
        return Err(invalid(node, "labels input must be a single Bool column"));
    }
    Ok(())
}
