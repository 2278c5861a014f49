//! Command-line interface. Deliberately thin: parse arguments, call the
//! library, render the result. Exit codes are part of the contract:
//! 0 success, 1 invalid pipeline or invocation, 2 execution error,
//! 3 flagged findings under `--fail-on-findings`.

use crate::exec::engine::{ExecError, ExecutionTrace, Executor, NodeOutput};
use crate::inspect::{
    check_distributions, slice_scores, DistributionFinding, GroupHistogramInspection, Inspection,
};
use crate::ir::dot::to_dot;
use crate::ir::plan::{Op, Plan, PlanNode};
use crate::model::ScoreReport;
use crate::parse::{build_plan, parse_pipeline};
use crate::whatif::{run_analysis, AnalysisConfig, AnalysisError, AnalysisReport};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_EXEC: i32 = 2;
pub const EXIT_FINDINGS: i32 = 3;

#[derive(Parser)]
#[command(
    name = "pipelens",
    version,
    about = "Inspect ML pipelines as logical query plans: validate, execute with provenance, screen for distribution bugs, and run what-if analyses."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Lower a pipeline document to a logical plan and validate it.
    Plan(PlanArgs),
    /// Execute a pipeline with instrumentation and distribution screening.
    Run(RunArgs),
    /// Execute a what-if analysis over patched plan variants.
    Whatif(WhatifArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// Pipeline document (JSON).
    pub doc: PathBuf,
    /// Directory dataset paths resolve against. Falls back to
    /// $PIPELENS_DATA_ROOT, then to the document's directory.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
}

#[derive(Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Print the plan as JSON.
    #[arg(long, conflicts_with = "dot")]
    pub json: bool,
    /// Print the plan in Graphviz DOT form.
    #[arg(long)]
    pub dot: bool,
}

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Print the full result (score, findings, slices, trace) as JSON.
    #[arg(long)]
    pub json: bool,
    /// Distribution screening threshold: flag when the group-share ratio
    /// leaves [tau, 1/tau].
    #[arg(long, default_value_t = crate::inspect::DEFAULT_TAU)]
    pub tau: f64,
    /// Override the split seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exit with status 3 when any finding is flagged.
    #[arg(long)]
    pub fail_on_findings: bool,
}

#[derive(Args)]
pub struct WhatifArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Analysis configuration: a JSON file path, or inline JSON when the
    /// value starts with '{'.
    #[arg(long)]
    pub analysis_config: String,
    /// Execute every variant independently instead of merging shared work.
    #[arg(long)]
    pub no_mqo: bool,
    /// Print the analysis report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Override the split seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Failures are rendered to stderr and mapped to the exit-code contract.
enum Failure {
    Invalid(String),
    Exec(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => EXIT_INVALID,
            Failure::Exec(_) => EXIT_EXEC,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Exec(m) => m,
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure::Invalid(message.into())
}

fn exec_failure(e: &ExecError) -> Failure {
    match e {
        ExecError::InvalidPlan(_) | ExecError::NoScoreSink(_) | ExecError::MultipleSinks(_) => {
            Failure::Invalid(e.to_string())
        }
        other => Failure::Exec(other.to_string()),
    }
}

/// Entry point for the binary.
pub fn run_cli() -> i32 {
    // clap's default usage-error status is 2, which this contract reserves
    // for execution failures; bad invocations are "invalid" like bad docs.
    match Cli::try_parse() {
        Ok(cli) => dispatch(cli),
        Err(e) => {
            let code = if e.exit_code() == 0 { EXIT_OK } else { EXIT_INVALID };
            let _ = e.print();
            code
        }
    }
}

pub fn dispatch(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Plan(args) => cmd_plan(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Whatif(args) => cmd_whatif(&args),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            failure.code()
        }
    }
}

fn data_root(common: &CommonArgs) -> PathBuf {
    common
        .data_root
        .clone()
        .or_else(|| std::env::var_os("PIPELENS_DATA_ROOT").map(PathBuf::from))
        .unwrap_or_else(|| {
            common.doc.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
        })
}

fn load_plan(common: &CommonArgs) -> Result<Plan, Failure> {
    let text = std::fs::read_to_string(&common.doc)
        .map_err(|e| invalid(format!("cannot read {}: {e}", common.doc.display())))?;
    let doc = parse_pipeline(&text).map_err(|e| invalid(e.to_string()))?;
    build_plan(&doc, &data_root(common)).map_err(|e| invalid(e.to_string()))
}

fn cmd_plan(args: &PlanArgs) -> Result<i32, Failure> {
    let plan = load_plan(&args.common)?;
    if args.dot {
        print!("{}", to_dot(&plan));
    } else if args.json {
        println!("{}", to_json(&plan)?);
    } else {
        println!("plan: {} nodes, sink {}", plan.len(), plan.sinks().join(", "));
        for node in plan.nodes() {
            if node.inputs.is_empty() {
                println!("  {} [{}]", node.id, node.op.kind());
            } else {
                println!("  {} [{}] <- {}", node.id, node.op.kind(), node.inputs.join(", "));
            }
        }
    }
    Ok(EXIT_OK)
}

/// The `run` result in `--json` form.
#[derive(Serialize)]
struct RunOutput<'a> {
    score: &'a ScoreReport,
    findings: &'a [DistributionFinding],
    slices: &'a BTreeMap<String, f64>,
    trace: &'a ExecutionTrace,
}

fn score_node(plan: &Plan) -> Option<&PlanNode> {
    plan.nodes().iter().find(|n| matches!(n.op, Op::Score { .. }))
}

fn cmd_run(args: &RunArgs) -> Result<i32, Failure> {
    let plan = load_plan(&args.common)?;
    let mut executor = Executor::new(data_root(&args.common));
    executor.seed_override = args.seed;

    let score = score_node(&plan).ok_or_else(|| invalid("plan has no Score node"))?;
    let sensitive = match &score.op {
        Op::Score { sensitive, .. } => sensitive.clone(),
        _ => None,
    };
    let score_id = score.id.clone();
    let score_inputs = score.inputs.clone();

    let mut hist = sensitive.as_ref().map(|s| GroupHistogramInspection::new(&s.column));
    let mut inspections: Vec<&mut dyn Inspection> = Vec::new();
    if let Some(h) = hist.as_mut() {
        inspections.push(h);
    }

    // Retain all outputs: slices need the prediction, label, and test
    // relations after the run.
    let (outputs, trace) =
        executor.execute_outputs(&plan, &mut inspections).map_err(|e| exec_failure(&e))?;
    let report = outputs
        .get(&score_id)
        .and_then(NodeOutput::as_report)
        .ok_or_else(|| Failure::Exec(format!("\"{score_id}\" produced no report")))?;

    let findings =
        hist.as_ref().map(|h| check_distributions(h, args.tau)).unwrap_or_default();

    let mut slices = BTreeMap::new();
    if let Some(s) = &sensitive {
        let node = plan.get(&score_id).expect("score exists");
        let predictions = score_inputs
            .first()
            .and_then(|id| outputs.get(id))
            .and_then(NodeOutput::as_relation);
        let labels = score_inputs
            .get(1)
            .and_then(|id| outputs.get(id))
            .and_then(NodeOutput::as_relation);
        let test = executor.test_relation(&plan, node, &outputs);
        if let (Some(predictions), Some(labels), Some(test)) = (predictions, labels, test) {
            slices = slice_scores(predictions, labels, test, &s.column)
                .map_err(|e| Failure::Exec(e.to_string()))?;
        }
    }

    if args.json {
        let out = RunOutput { score: report, findings: &findings, slices: &slices, trace: &trace };
        println!("{}", to_json(&out)?);
    } else {
        render_run(report, &findings, &slices, &trace, args.tau);
    }

    let flagged = findings.iter().any(|f| f.flagged);
    if args.fail_on_findings && flagged {
        return Ok(EXIT_FINDINGS);
    }
    Ok(EXIT_OK)
}

fn render_run(
    report: &ScoreReport,
    findings: &[DistributionFinding],
    slices: &BTreeMap<String, f64>,
    trace: &ExecutionTrace,
    tau: f64,
) {
    println!("score");
    for (metric, value) in report.metrics() {
        println!("  {metric}: {value}");
    }
    let flagged = findings.iter().filter(|f| f.flagged).count();
    println!("findings (tau = {tau}): {flagged} flagged, {} screened", findings.len());
    for f in findings.iter().filter(|f| f.flagged) {
        println!(
            "  {} \"{}\": {} -> {} (ratio {})",
            f.node, f.group, f.proportion_before, f.proportion_after, f.ratio
        );
    }
    if !slices.is_empty() {
        println!("slices");
        for (group, accuracy) in slices {
            println!("  {group}: {accuracy}");
        }
    }
    let slots: u64 = trace.nodes.iter().map(|n| n.annotation_slots).sum();
    println!(
        "trace: {} operators, peak {} live, {} annotation slots",
        trace.operators_evaluated, trace.peak_live, slots
    );
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
}

fn cmd_whatif(args: &WhatifArgs) -> Result<i32, Failure> {
    let plan = load_plan(&args.common)?;
    let mut executor = Executor::new(data_root(&args.common));
    executor.seed_override = args.seed;

    let raw = if args.analysis_config.trim_start().starts_with('{') {
        args.analysis_config.clone()
    } else {
        std::fs::read_to_string(&args.analysis_config)
            .map_err(|e| invalid(format!("cannot read {}: {e}", args.analysis_config)))?
    };
    let config: AnalysisConfig =
        serde_json::from_str(&raw).map_err(|e| invalid(format!("invalid analysis config: {e}")))?;

    let report = run_analysis(&plan, &executor, &config, !args.no_mqo).map_err(|e| match &e {
        AnalysisError::Config(_) | AnalysisError::Patch { .. } => invalid(e.to_string()),
        AnalysisError::Exec { source, .. } => {
            let failure = exec_failure(source);
            match failure {
                Failure::Invalid(_) => Failure::Invalid(e.to_string()),
                Failure::Exec(_) => Failure::Exec(e.to_string()),
            }
        }
        AnalysisError::Merge(_) => Failure::Exec(e.to_string()),
    })?;

    if args.json {
        println!("{}", to_json(&report)?);
    } else {
        render_whatif(&report);
    }

    // Completed variants are reported either way; any execution casualty
    // still surfaces in the exit code.
    if report.failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        for f in &report.failed {
            eprintln!("error: variant \"{}\": {}", f.label, f.error);
        }
        Ok(EXIT_EXEC)
    }
}

fn render_whatif(report: &AnalysisReport) {
    println!("analysis: {}", report.analysis);
    println!("baseline");
    for (metric, value) in report.baseline.metrics() {
        println!("  {metric}: {value}");
    }
    println!("variants");
    for v in &report.variants {
        let mut parts: Vec<String> = Vec::new();
        if let Some(importance) = v.importance {
            parts.push(format!("importance {importance}"));
        }
        for (metric, value) in v.score.metrics() {
            match v.deltas.get(metric) {
                Some(delta) => parts.push(format!("{metric} {value} ({delta:+})")),
                None => parts.push(format!("{metric} {value}")),
            }
        }
        println!("  {}: {}", v.label, parts.join(", "));
    }
    if !report.failed.is_empty() {
        println!("failed");
        for f in &report.failed {
            println!("  {}: {}", f.label, f.error);
        }
    }
    let r = &report.reuse_stats;
    println!(
        "reuse: {} naive -> {} merged operators, {} shared nodes",
        r.naive_operator_count, r.merged_operator_count, r.shared_node_count
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::Exec(format!("render failed: {e}")))
}
