//! The declarative pipeline document: strict JSON, version 1.
//!
//! Structural problems surface as syntax errors with a line and column;
//! semantic problems carry a dotted path into the document.

use crate::ir::plan::ModelConfig;
use crate::parse::predicate::parse_predicate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

pub const DOC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum DocError {
    Syntax { line: usize, col: usize, message: String },
    Semantic { path: String, message: String },
}

impl fmt::Display for DocError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DocError::Syntax { line, col, message } => {
                write!(f, "syntax error at {line}:{col}: {message}")
            }
            DocError::Semantic { path, message } => {
                write!(f, "semantic error at {path}: {message}")
            }
        }
    }
}

impl std::error::Error for DocError {}

pub(crate) fn semantic(path: impl Into<String>, message: impl Into<String>) -> DocError {
    DocError::Semantic { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDecl {
    pub path: String,
    pub format: String,
}

/// One relational step. `op` selects which optional fields apply; the
/// semantic check rejects missing or extraneous fields per op.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDecl {
    pub op: String,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturizeDecl {
    pub column: String,
    pub encoder: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelDecl {
    pub column: String,
    pub positive: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitDecl {
    pub test_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDecl {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitiveDecl {
    pub column: String,
    pub privileged: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineDoc {
    pub version: u32,
    pub datasets: BTreeMap<String, DatasetDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<StepDecl>,
    pub featurize: Vec<FeaturizeDecl>,
    pub label: LabelDecl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_dataset: Option<String>,
    pub model: ModelDecl,
    pub metrics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitive: Option<SensitiveDecl>,
}

impl PipelineDoc {
    pub fn model_config(&self) -> Result<ModelConfig, DocError> {
        model_config(&self.model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("doc serializes")
    }
}

fn model_config(model: &ModelDecl) -> Result<ModelConfig, DocError> {
    let reject_params = |kind: &str| -> Result<(), DocError> {
        for (field, set) in [
            ("lr", model.lr.is_some()),
            ("epochs", model.epochs.is_some()),
            ("seed", model.seed.is_some()),
        ] {
            if set {
                return Err(semantic(
                    format!("model.{field}"),
                    format!("\"{kind}\" takes no \"{field}\" parameter"),
                ));
            }
        }
        Ok(())
    };
    match model.kind.as_str() {
        "logistic_regression" => {
            let lr = model
                .lr
                .ok_or_else(|| semantic("model.lr", "logistic_regression requires \"lr\""))?;
            let epochs = model.epochs.ok_or_else(|| {
                semantic("model.epochs", "logistic_regression requires \"epochs\"")
            })?;
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(semantic("model.lr", format!("lr must be positive, got {lr}")));
            }
            Ok(ModelConfig::LogisticRegression { lr, epochs, seed: model.seed.unwrap_or(0) })
        }
        "majority" => {
            reject_params("majority")?;
            Ok(ModelConfig::Majority)
        }
        "decision_stump" => {
            reject_params("decision_stump")?;
            Ok(ModelConfig::DecisionStump)
        }
        other => Err(semantic("model.kind", format!("unknown model kind \"{other}\""))),
    }
}

/// Parses and semantically validates a pipeline document.
pub fn parse_pipeline(doc_text: &str) -> Result<PipelineDoc, DocError> {
    let doc: PipelineDoc = serde_json::from_str(doc_text).map_err(|e| DocError::Syntax {
        line: e.line(),
        col: e.column(),
        message: e.to_string(),
    })?;
    validate_doc(&doc)?;
    Ok(doc)
}

fn validate_doc(doc: &PipelineDoc) -> Result<(), DocError> {
    if doc.version != DOC_VERSION {
        return Err(semantic(
            "version",
            format!("unsupported version {}, expected {DOC_VERSION}", doc.version),
        ));
    }
    if doc.datasets.is_empty() {
        return Err(semantic("datasets", "at least one dataset is required"));
    }
    for (name, decl) in &doc.datasets {
        if decl.format != "csv" {
            return Err(semantic(
                format!("datasets.{name}.format"),
                format!("unsupported format \"{}\", only \"csv\"", decl.format),
            ));
        }
    }

    validate_steps(doc)?;

    if doc.featurize.is_empty() {
        return Err(semantic("featurize", "at least one featurize entry is required"));
    }
    for (i, entry) in doc.featurize.iter().enumerate() {
        if entry.encoder != "one_hot" && entry.encoder != "standard_scale" {
            return Err(semantic(
                format!("featurize[{i}].encoder"),
                format!("unknown encoder name \"{}\"", entry.encoder),
            ));
        }
    }

    match (&doc.split, &doc.test_dataset) {
        (Some(split), None) => {
            if !(split.test_fraction > 0.0 && split.test_fraction < 1.0) {
                return Err(semantic(
                    "split.test_fraction",
                    format!("must be in (0, 1), got {}", split.test_fraction),
                ));
            }
        }
        (None, Some(name)) => {
            if !doc.datasets.contains_key(name) {
                return Err(semantic(
                    "test_dataset",
                    format!("unknown dataset \"{name}\""),
                ));
            }
        }
        (Some(_), Some(_)) => {
            return Err(semantic("split", "split and test_dataset are mutually exclusive"));
        }
        (None, None) => {
            return Err(semantic("split", "one of split / test_dataset is required"));
        }
    }

    model_config(&doc.model)?;

    if doc.metrics.is_empty() {
        return Err(semantic("metrics", "at least one metric is required"));
    }
    for (i, metric) in doc.metrics.iter().enumerate() {
        match metric.as_str() {
            "accuracy" => {}
            "demographic_parity_difference" => {
                if doc.sensitive.is_none() {
                    return Err(semantic(
                        format!("metrics[{i}]"),
                        "demographic_parity_difference requires \"sensitive\"",
                    ));
                }
            }
            other => {
                return Err(semantic(
                    format!("metrics[{i}]"),
                    format!("unknown metric \"{other}\""),
                ));
            }
        }
    }
    Ok(())
}

fn validate_steps(doc: &PipelineDoc) -> Result<(), DocError> {
    let mut known: Vec<&str> = Vec::new();
    for (i, step) in doc.steps.iter().enumerate() {
        let at = |field: &str| format!("steps[{i}].{field}");

        if known.contains(&step.id.as_str()) {
            return Err(semantic(at("id"), format!("duplicate step id \"{}\"", step.id)));
        }
        if doc.datasets.contains_key(&step.id) {
            return Err(semantic(
                at("id"),
                format!("step id \"{}\" collides with a dataset name", step.id),
            ));
        }
        if step.id.starts_with("__") {
            return Err(semantic(at("id"), "ids starting with \"__\" are reserved"));
        }

        let check_ref = |field: &str, target: &str| -> Result<(), DocError> {
            let is_step = known.contains(&target);
            let is_dataset = doc.datasets.contains_key(target);
            if !is_step && !is_dataset {
                return Err(semantic(
                    at(field),
                    format!("\"{target}\" names neither a dataset nor an earlier step"),
                ));
            }
            if doc.test_dataset.as_deref() == Some(target) {
                return Err(semantic(
                    at(field),
                    format!("\"{target}\" is the test dataset and cannot feed a step"),
                ));
            }
            Ok(())
        };

        // Required/forbidden fields per op.
        let fields: [(&str, bool); 7] = [
            ("input", step.input.is_some()),
            ("left", step.left.is_some()),
            ("right", step.right.is_some()),
            ("on", step.on.is_some()),
            ("predicate", step.predicate.is_some()),
            ("columns", step.columns.is_some()),
            ("column", step.column.is_some()),
        ];
        let allowed: &[&str] = match step.op.as_str() {
            "filter" => &["input", "predicate"],
            "join" => &["left", "right", "on"],
            "project" => &["input", "columns"],
            "extend" => &["input", "column", "predicate"],
            other => {
                return Err(semantic(at("op"), format!("unknown step op \"{other}\"")));
            }
        };
        for (field, set) in fields {
            if set && !allowed.contains(&field) {
                return Err(semantic(
                    at(field),
                    format!("field not used by \"{}\" steps", step.op),
                ));
            }
            if !set && allowed.contains(&field) {
                return Err(semantic(
                    at(field),
                    format!("\"{}\" steps require \"{field}\"", step.op),
                ));
            }
        }

        match step.op.as_str() {
            "filter" | "project" | "extend" => {
                check_ref("input", step.input.as_deref().expect("checked above"))?;
            }
            "join" => {
                check_ref("left", step.left.as_deref().expect("checked above"))?;
                check_ref("right", step.right.as_deref().expect("checked above"))?;
            }
            _ => unreachable!("op checked above"),
        }

        if let Some(predicate) = &step.predicate {
            parse_predicate(predicate).map_err(|e| semantic(at("predicate"), e.to_string()))?;
        }

        known.push(&step.id);
    }
    Ok(())
}
