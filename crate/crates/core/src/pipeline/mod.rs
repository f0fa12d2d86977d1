//! Five-stage pipeline execution with file-based artifact handoff.
//!
//! Stage order is fixed: initial advice, customisation plan, knowledge
//! retrieval, customised advice, threshold validation. Each stage renders its
//! prompt (inputs must already exist on disk), calls the backend, validates
//! the output and writes its artifact exactly once. A failed stage aborts the
//! run but leaves the partial workspace and trace behind for inspection.

pub mod workspace;

use std::path::Path;
use std::sync::Arc;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::agents::{
    check_report_matches_plan, parse_plan, parse_retrieval_report, parse_validation_report,
    render_prompt, AgentProfile, Placeholder, TaskKind, TaskSpec, ValidationReport, Verdict,
    STAGE_ORDER,
};
use crate::domain::{
    decide_pmd, parse_pma_markdown, render_pma_markdown, Citation, DocStage, PestScenario,
    PmaDocument, PmdDecision, UnitRegistry,
};
use crate::error::{Error, Result};
use crate::gateway::CompletionBackend;
use crate::knowledge::Corpus;
use crate::util::sha256_hex;

pub use workspace::{StaticAssets, Workspace, RUN_FILE};

/// Per-run options. The flip hook simulates an editor error after the
/// customised-advice stage so the validator's correction path can be
/// exercised with a deterministic backend.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub flip_marker: bool,
    pub assets: StaticAssets,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            flip_marker: false,
            assets: StaticAssets::builtin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: TaskKind,
    pub started: String,
    pub ended: String,
    pub prompt_digest: String,
    pub output_digest: String,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub run_id: String,
    pub fault_injected: bool,
    pub stages: Vec<StageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_pmd: Option<PmdDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validator_verdict: Option<Verdict>,
}

impl PipelineTrace {
    pub fn to_json_pretty(&self) -> String {
        let mut out =
            serde_json::to_string_pretty(self).expect("trace serialization is infallible");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<PipelineTrace> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Outcome of one executed stage.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub prompt_digest: String,
    pub output_digest: String,
    pub attempts: u32,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Deterministic run identifier derived from the scenario content.
pub fn run_id_for(scenario: &PestScenario) -> String {
    let canonical = scenario.strip_ground_truth().to_json_pretty();
    format!("run-{}", &sha256_hex(canonical.as_bytes())[..12])
}

/// Executes all five stages for one scenario. On success the workspace holds
/// all seven handoff artifacts plus `validation.json` and the trace.
pub fn run_pipeline(
    scenario: &PestScenario,
    corpus: &Arc<Corpus>,
    backend: &dyn CompletionBackend,
    workspace_root: &Path,
    options: &PipelineOptions,
) -> Result<PipelineTrace> {
    scenario
        .validate()
        .map_err(|e| Error::ScenarioInvalid(e.to_string()))?;
    let ws = Workspace::init(workspace_root, scenario, &options.assets)?;
    let mut trace = PipelineTrace {
        run_id: run_id_for(scenario),
        fault_injected: options.flip_marker,
        stages: Vec::new(),
        final_pmd: None,
        validator_verdict: None,
    };

    for kind in STAGE_ORDER {
        let started = now();
        match run_stage(&ws, kind, corpus, backend, options) {
            Ok(outcome) => trace.stages.push(StageRecord {
                stage: kind,
                started,
                ended: now(),
                prompt_digest: outcome.prompt_digest,
                output_digest: outcome.output_digest,
                attempts: outcome.attempts,
                error: None,
            }),
            Err(cause) => {
                trace.stages.push(StageRecord {
                    stage: kind,
                    started,
                    ended: now(),
                    prompt_digest: String::new(),
                    output_digest: String::new(),
                    attempts: 0,
                    error: Some(cause.to_string()),
                });
                ws.write_run(&trace.to_json_pretty())?;
                return Err(Error::stage(kind.header_token(), cause));
            }
        }
    }

    let report = read_validation(&ws)?;
    trace.validator_verdict = Some(report.verdict);
    trace.final_pmd = Some(extract_final_pmd(&ws, corpus.registry())?);
    ws.write_run(&trace.to_json_pretty())?;
    Ok(trace)
}

/// Runs one stage: render, complete, validate, write. Public so stage-order
/// violations and recovery flows can be exercised directly.
pub fn run_stage(
    ws: &Workspace,
    kind: TaskKind,
    corpus: &Arc<Corpus>,
    backend: &dyn CompletionBackend,
    options: &PipelineOptions,
) -> Result<StageOutcome> {
    let registry = corpus.registry();
    let profile = AgentProfile::default_for(kind.agent());
    let task = TaskSpec::new(kind);
    let exchange = render_prompt(&profile, &task, ws, corpus, registry)?;
    let completion = backend.complete(&exchange)?;
    let prompt_digest = sha256_hex(exchange.flattened().as_bytes());
    let output_digest = sha256_hex(completion.text.as_bytes());

    match kind {
        TaskKind::InitialPma => {
            let doc = parse_pma_markdown(registry, &completion.text)?;
            expect_stage(&doc, DocStage::Initial)?;
            ws.write_once(kind.output_artifact(), &render_pma_markdown(&doc))?;
        }
        TaskKind::CustomisationPlan => {
            let plan = parse_plan(&completion.text)?;
            ws.write_once(kind.output_artifact(), &plan.to_json_pretty())?;
        }
        TaskKind::KnowledgeRetrieval => {
            let report = parse_retrieval_report(&completion.text)?;
            let plan_text = ws.read(Placeholder::CustomPlanPath)?;
            let plan = parse_plan(&format!("```json\n{plan_text}\n```"))?;
            check_report_matches_plan(&report, &plan)?;
            ws.write_once(kind.output_artifact(), &completion.text)?;
        }
        TaskKind::CustomisedPma => {
            let doc = parse_pma_markdown(registry, &completion.text)?;
            expect_stage(&doc, DocStage::Customised)?;
            let doc = if options.flip_marker {
                doc.with_flipped_decision()?
            } else {
                doc
            };
            ws.write_once(kind.output_artifact(), &render_pma_markdown(&doc))?;
        }
        TaskKind::ValidateThreshold => {
            let report = parse_validation_report(&completion.text)?;
            let custom = parse_pma_markdown(registry, &ws.read(Placeholder::CustomPmaPath)?)?;
            if report.original_pmd != custom.decision_block.action_required {
                return Err(Error::SchemaViolation {
                    field: "original_pmd".into(),
                    cause: format!(
                        "validator saw {}, customised advice states {}",
                        report.original_pmd, custom.decision_block.action_required
                    ),
                });
            }
            ws.write_once(kind.output_artifact(), &report.to_json_pretty())?;
        }
    }

    Ok(StageOutcome {
        prompt_digest,
        output_digest,
        attempts: completion.usage.attempts,
    })
}

fn expect_stage(doc: &PmaDocument, expected: DocStage) -> Result<()> {
    if doc.stage != expected {
        return Err(Error::DocumentInvalid(format!(
            "expected a {expected:?}-stage document, got {:?}",
            doc.stage
        )));
    }
    Ok(())
}

fn read_validation(ws: &Workspace) -> Result<ValidationReport> {
    let path = ws.root().join(TaskKind::ValidateThreshold.output_artifact());
    if !path.is_file() {
        return Err(Error::MissingArtifact {
            placeholder: "validation".into(),
            path,
        });
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))?;
    let report: ValidationReport = serde_json::from_str(&text)?;
    report.validate()?;
    Ok(report)
}

/// The pre-validation measurement point: the decision stated by the
/// customised advice document.
pub fn extract_stage1_pmd(ws: &Workspace, registry: &UnitRegistry) -> Result<PmdDecision> {
    let text = ws.read(Placeholder::CustomPmaPath)?;
    let doc = parse_pma_markdown(registry, &text)?;
    Ok(doc.decision_block)
}

/// The post-validation decision, reconstructed from the validator's report.
/// Corrections recompute the comparison from the cited threshold, so the
/// result is exactly `decide_pmd(severity, threshold)` whenever a record was
/// cited.
pub fn extract_final_pmd(ws: &Workspace, registry: &UnitRegistry) -> Result<PmdDecision> {
    let report = read_validation(ws)?;
    let custom = parse_pma_markdown(registry, &ws.read(Placeholder::CustomPmaPath)?)?;
    final_decision(&report, &custom, registry)
}

fn final_decision(
    report: &ValidationReport,
    custom: &PmaDocument,
    registry: &UnitRegistry,
) -> Result<PmdDecision> {
    let decision = match &report.threshold_cited {
        Some(record) => decide_pmd(registry, &custom.scenario_echo.severity, record)?,
        None => custom.decision_block.clone(),
    };
    if decision.action_required != report.final_pmd {
        return Err(Error::DocumentInvalid(format!(
            "validation report final_pmd {} disagrees with the cited threshold comparison {}",
            report.final_pmd, decision.action_required
        )));
    }
    Ok(decision)
}

/// Produces the validated advice document: the customised document with the
/// validator's (possibly corrected) decision applied and its source cited.
pub fn apply_validation(
    custom: &PmaDocument,
    report: &ValidationReport,
    registry: &UnitRegistry,
) -> Result<PmaDocument> {
    let mut decision = final_decision(report, custom, registry)?;
    if report.verdict == Verdict::Unverifiable {
        decision.rationale = format!("{} {}", decision.rationale, report.justification);
    }
    let extra = report
        .threshold_cited
        .iter()
        .map(|record| Citation {
            url: record.source.reference.clone(),
            publisher: record.source.publisher.clone(),
        })
        .collect();
    custom.with_validated_decision(decision, extra)
}

/// Clears a directory this crate previously used as a run workspace, so a
/// run can be repeated. Refuses to touch directories that do not look like
/// run workspaces.
pub fn prepare_run_dir(path: &Path) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    if !path.is_dir() {
        return Err(Error::Workspace {
            path: path.to_path_buf(),
            cause: "exists and is not a directory".into(),
        });
    }
    let is_empty = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .next()
        .is_none();
    let ours = path.join(RUN_FILE).exists()
        || path.join(Placeholder::QueryPath.file_name()).exists();
    if is_empty || ours {
        std::fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
        Ok(())
    } else {
        Err(Error::Workspace {
            path: path.to_path_buf(),
            cause: "directory exists and does not look like a previous run workspace".into(),
        })
    }
}
