//! Lowering from a PipelineDoc to a logical query plan.
//!
//! Steps become relational nodes in literal order. Featurization duplicates
//! per branch: each entry yields one EstimatorFit fed by the train branch and
//! a Transform per branch; feature blocks fold into a Concat chain. The label
//! extraction, training, prediction and scoring tail is fixed.

use crate::exec::csv::{file_digest, load_csv};
use crate::ir::plan::{
    fit_id, transform_id, EncoderKind, Op, Plan, SensitiveSpec, SplitBranch,
};
use crate::ir::value::Schema;
use crate::parse::doc::{semantic, DocError, PipelineDoc, StepDecl};
use crate::parse::predicate::parse_predicate;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

/// Resolves a dataset path against the data root; absolute paths win.
pub fn resolve_path(data_root: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        data_root.join(p)
    }
}

fn step_op(step: &StepDecl) -> Result<Op, DocError> {
    match step.op.as_str() {
        "filter" => Ok(Op::Selection {
            predicate: parse_predicate(step.predicate.as_ref().expect("validated"))
                .expect("validated during parse_pipeline"),
        }),
        "join" => Ok(Op::Join { on: step.on.clone().expect("validated") }),
        "project" => Ok(Op::Projection { columns: step.columns.clone().expect("validated") }),
        "extend" => Ok(Op::ExtendedProjection {
            column: step.column.clone().expect("validated"),
            predicate: parse_predicate(step.predicate.as_ref().expect("validated"))
                .expect("validated during parse_pipeline"),
        }),
        other => Err(semantic("steps", format!("unknown step op \"{other}\""))),
    }
}

fn step_inputs(step: &StepDecl) -> Vec<String> {
    match step.op.as_str() {
        "join" => vec![
            step.left.clone().expect("validated"),
            step.right.clone().expect("validated"),
        ],
        _ => vec![step.input.clone().expect("validated")],
    }
}

/// Builds the plan, stamping each used DataSource with the schema and
/// content digest of its CSV. Fails when a referenced column is absent from
/// the relation it must be read from.
pub fn build_plan(doc: &PipelineDoc, data_root: &Path) -> Result<Plan, DocError> {
    let mut plan = Plan::new();

    // Which datasets feed the relational stage, and which is the test root.
    let mut used: BTreeSet<&str> = BTreeSet::new();
    for step in &doc.steps {
        for input in step_inputs(step) {
            if doc.datasets.contains_key(&input) {
                // Leaks a borrow through the map lookup; keys live as long as doc.
                used.insert(doc.datasets.keys().find(|k| **k == input).expect("present"));
            }
        }
    }
    let test_name = doc.test_dataset.as_deref();
    let train_source: Option<&str> = if doc.steps.is_empty() {
        let candidates: Vec<&str> = doc
            .datasets
            .keys()
            .map(String::as_str)
            .filter(|name| Some(*name) != test_name)
            .collect();
        match candidates.as_slice() {
            [only] => Some(*only),
            [] => {
                return Err(semantic("datasets", "no dataset left to train on"));
            }
            _ => {
                return Err(semantic(
                    "datasets",
                    "multiple datasets but no steps to combine them",
                ));
            }
        }
    } else {
        None
    };
    if let Some(name) = train_source {
        used.insert(doc.datasets.keys().find(|k| *k == name).expect("present"));
    }

    for name in doc.datasets.keys() {
        let is_used = used.contains(name.as_str()) || test_name == Some(name.as_str());
        if !is_used {
            return Err(semantic(
                format!("datasets.{name}"),
                "dataset is never used",
            ));
        }
    }

    // DataSource nodes in name order, schema and digest stamped from disk.
    // The node keeps the path as written in the doc; executors resolve it
    // against their own data root, and the digest catches content drift.
    for (name, decl) in &doc.datasets {
        let path = resolve_path(data_root, &decl.path);
        let relation = load_csv(&path, name).map_err(|e| {
            semantic(format!("datasets.{name}.path"), e.to_string())
        })?;
        let digest = file_digest(&path).map_err(|e| {
            semantic(format!("datasets.{name}.path"), e.to_string())
        })?;
        plan.add_node(
            name.clone(),
            Op::DataSource {
                name: name.clone(),
                path: decl.path.clone(),
                digest,
                schema: relation.schema.clone(),
            },
            vec![],
        );
    }

    for (i, step) in doc.steps.iter().enumerate() {
        let inputs = step_inputs(step);
        plan.add_node(
            step.id.clone(),
            step_op(step)?,
            inputs.iter().map(String::as_str).collect(),
        );
        let _ = i;
    }

    // Every intermediate step must feed a later step; the last step (or the
    // lone dataset) is the preprocessed relation both branches grow from.
    let train_root_id: String = match (doc.steps.last(), train_source) {
        (Some(last), _) => {
            for (i, step) in doc.steps[..doc.steps.len() - 1].iter().enumerate() {
                let consumed = doc.steps.iter().any(|s| step_inputs(s).contains(&step.id));
                if !consumed {
                    return Err(semantic(
                        format!("steps[{i}].id"),
                        format!("step \"{}\" output is never used", step.id),
                    ));
                }
            }
            last.id.clone()
        }
        (None, Some(name)) => name.to_string(),
        (None, None) => unreachable!("guarded above"),
    };

    let preprocessed = plan.infer_schema(&train_root_id).map_err(|e| {
        semantic("steps", e.to_string())
    })?;

    // Branch roots: one Split node, or the preprocessed relation plus the
    // held-out test source.
    let (train_root, test_root, test_schema): (String, String, Schema) = match &doc.split {
        Some(split) => {
            plan.add_node(
                "__split",
                Op::Split { test_fraction: split.test_fraction, seed: split.seed },
                vec![train_root_id.as_str()],
            );
            ("__split".to_string(), "__split".to_string(), preprocessed.clone())
        }
        None => {
            let name = test_name.expect("validated: split xor test_dataset");
            let schema = plan
                .get(name)
                .and_then(|n| match &n.op {
                    Op::DataSource { schema, .. } => Some(schema.clone()),
                    _ => None,
                })
                .expect("test dataset node added above");
            (train_root_id.clone(), name.to_string(), schema)
        }
    };

    // Column checks against both branch schemas before emitting the tail.
    let check_column = |path: String, column: &str| -> Result<(), DocError> {
        let train_ty = preprocessed.type_of(column).ok_or_else(|| {
            semantic(
                path.clone(),
                format!("column \"{column}\" is not in the preprocessed schema"),
            )
        })?;
        let test_ty = test_schema.type_of(column).ok_or_else(|| {
            semantic(
                path.clone(),
                format!("column \"{column}\" is not in the test schema"),
            )
        })?;
        if train_ty != test_ty {
            return Err(semantic(
                path,
                format!("column \"{column}\" is {train_ty} on train but {test_ty} on test"),
            ));
        }
        Ok(())
    };

    for (i, entry) in doc.featurize.iter().enumerate() {
        check_column(format!("featurize[{i}].column"), &entry.column)?;
    }
    check_column("label.column".into(), &doc.label.column)?;
    if let Some(sensitive) = &doc.sensitive {
        check_column("sensitive.column".into(), &sensitive.column)?;
    }

    // Featurization: fit on train, transform per branch, concat chains.
    let mut feature_nodes: Vec<(String, String)> = Vec::new();
    for (i, entry) in doc.featurize.iter().enumerate() {
        let occurrence =
            doc.featurize[..i].iter().filter(|e| e.column == entry.column).count() as u32;
        let encoder = match entry.encoder.as_str() {
            "one_hot" => EncoderKind::OneHot,
            "standard_scale" => EncoderKind::StandardScale,
            other => {
                return Err(semantic(
                    format!("featurize[{i}].encoder"),
                    format!("unknown encoder name \"{other}\""),
                ))
            }
        };
        let fit = fit_id(&entry.column, occurrence);
        plan.add_node(
            fit.clone(),
            Op::EstimatorFit { column: entry.column.clone(), encoder, occurrence },
            vec![train_root.as_str()],
        );
        let mut branch_ids = Vec::new();
        for branch in [SplitBranch::Train, SplitBranch::Test] {
            let root = match branch {
                SplitBranch::Train => train_root.as_str(),
                SplitBranch::Test => test_root.as_str(),
            };
            let id = transform_id(&entry.column, occurrence, branch);
            plan.add_node(
                id.clone(),
                Op::Transform { column: entry.column.clone(), branch, occurrence },
                vec![fit.as_str(), root],
            );
            branch_ids.push(id);
        }
        feature_nodes.push((branch_ids.remove(0), branch_ids.remove(0)));
    }

    let mut features = (feature_nodes[0].0.clone(), feature_nodes[0].1.clone());
    for (k, (tf_train, tf_test)) in feature_nodes.iter().enumerate().skip(1) {
        let train_id = format!("__concat_{k}_train");
        plan.add_node(train_id.clone(), Op::Concat, vec![features.0.as_str(), tf_train]);
        let test_id = format!("__concat_{k}_test");
        plan.add_node(test_id.clone(), Op::Concat, vec![features.1.as_str(), tf_test]);
        features = (train_id, test_id);
    }

    for (id, root, branch) in [
        ("__label_train", train_root.as_str(), SplitBranch::Train),
        ("__label_test", test_root.as_str(), SplitBranch::Test),
    ] {
        plan.add_node(
            id,
            Op::LabelExtract {
                column: doc.label.column.clone(),
                positive: doc.label.positive.clone(),
                branch,
            },
            vec![root],
        );
    }

    plan.add_node(
        "__train",
        Op::TrainModel { config: doc.model_config()? },
        vec![features.0.as_str(), "__label_train"],
    );
    plan.add_node("__predict", Op::Predict, vec!["__train", features.1.as_str()]);
    plan.add_node(
        "__score",
        Op::Score {
            metrics: doc.metrics.clone(),
            sensitive: doc.sensitive.as_ref().map(|s| SensitiveSpec {
                column: s.column.clone(),
                privileged: s.privileged.clone(),
            }),
        },
        vec!["__predict", "__label_test"],
    );

    let diagnostics = plan.validate();
    if !diagnostics.is_empty() {
        let rendered: Vec<String> = diagnostics.iter().map(|d| d.to_string()).collect();
        return Err(semantic("plan", rendered.join("; ")));
    }
    Ok(plan)
}
