//! Deterministic scripted backend.
//!
//! Recognizes the task-type header the prompt renderer embeds and executes
//! each task by rule against the corpus: same prompt, same corpus,
//! byte-identical output, on every platform. This isolates orchestration
//! correctness from model quality and keeps the whole pipeline testable
//! offline.

use std::sync::Arc;

use crate::agents::{
    outputs, CustomisationPlan, Finding, PlanSection, ReportSection, RetrievalReport,
    TaskKind, ValidationReport, Verdict, TASK_HEADER_PREFIX, TOOL_HEADER_PREFIX,
};
use crate::domain::{
    decide_pmd, decision_marker, parse_pma_markdown, render_pma_markdown, Citation, DocStage,
    PestScenario, PmaDocument, PmdDecision, Quantity, ScenarioFile, Section, Source,
    ThresholdRecord, UnitRegistry, UnitToken, REQUIRED_SECTIONS,
};
use crate::error::{Error, Result};
use crate::gateway::{BackendKind, ChatExchange, Completion, CompletionBackend, Role, Usage};
use crate::knowledge::Corpus;
use crate::util::{format_value, normalize_ws};

/// Built-in "intrinsic knowledge": typical action levels per unit, used by the
/// scripted editor to estimate the decision before any threshold is retrieved.
pub const INTRINSIC_PIVOTS: [(&str, f64); 5] = [
    ("eggs-and-larvae/gram-soil", 10.0),
    ("nematodes/litre-soil", 1000.0),
    ("larvae/litre-soil", 150.0),
    ("cysts/gram-soil", 12.0),
    ("juveniles/litre-soil", 500.0),
];

/// The editor's intrinsic action level for a unit. Units without a pivot are
/// judged conservatively: no action.
pub fn intrinsic_pivot(unit: &UnitToken) -> f64 {
    INTRINSIC_PIVOTS
        .iter()
        .find(|(u, _)| *u == unit.as_str())
        .map(|(_, v)| *v)
        .unwrap_or(f64::INFINITY)
}

pub struct ScriptedBackend {
    corpus: Arc<Corpus>,
}

impl ScriptedBackend {
    pub fn new(corpus: Arc<Corpus>) -> Self {
        ScriptedBackend { corpus }
    }

    fn registry(&self) -> &UnitRegistry {
        self.corpus.registry()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, exchange: &ChatExchange) -> Result<Completion> {
        exchange.validate()?;
        let kind = task_kind_of(exchange).ok_or(Error::UnrecognizedScriptedTask)?;
        let text = match kind {
            TaskKind::InitialPma => self.run_initial_pma(exchange)?,
            TaskKind::CustomisationPlan => self.run_customisation_plan(exchange)?,
            TaskKind::KnowledgeRetrieval => self.run_knowledge_retrieval(exchange)?,
            TaskKind::CustomisedPma => self.run_customised_pma(exchange)?,
            TaskKind::ValidateThreshold => self.run_validate_threshold(exchange)?,
        };
        let prompt_chars = exchange.flattened().len() as u64;
        Ok(Completion {
            usage: Usage {
                attempts: 1,
                prompt_tokens: Some(prompt_chars / 4),
                completion_tokens: Some(text.len() as u64 / 4),
            },
            text,
        })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }
}

fn task_kind_of(exchange: &ChatExchange) -> Option<TaskKind> {
    for m in &exchange.messages {
        if m.role != Role::User {
            continue;
        }
        for line in m.content.lines() {
            if let Some(token) = line.strip_prefix(TASK_HEADER_PREFIX) {
                return TaskKind::from_header_token(token.trim());
            }
        }
    }
    None
}

/// The inlined output of one tool call, located by its header label.
fn tool_payload<'a>(exchange: &'a ChatExchange, label: &str) -> Result<&'a str> {
    let header = format!("{TOOL_HEADER_PREFIX}{label}");
    for m in &exchange.messages {
        if m.role != Role::Tool {
            continue;
        }
        if let Some(rest) = m.content.strip_prefix(&header) {
            if rest.is_empty() || rest.starts_with('\n') {
                return Ok(rest.trim_start_matches('\n'));
            }
        }
    }
    Err(Error::Config(format!(
        "scripted backend: prompt lacks inlined tool payload {label:?}"
    )))
}

// ---------------------------------------------------------------------------
// Task rules
// ---------------------------------------------------------------------------

impl ScriptedBackend {
    /// Editor, stage 1: synthesize advice from the scenario alone; the
    /// decision is an intrinsic estimate since no threshold is provided.
    fn run_initial_pma(&self, exchange: &ChatExchange) -> Result<String> {
        let payload = tool_payload(exchange, "json_reader query_path")?;
        let file: ScenarioFile = serde_json::from_str(payload)
            .map_err(|e| Error::MalformedResponse(format!("query payload: {e}")))?;
        let scenario = PestScenario::from_file_repr(self.registry(), file)?.strip_ground_truth();

        let decision = intrinsic_decision(&scenario);
        let sections = advice_sections(&scenario, &decision);
        let doc = PmaDocument::new(scenario, sections, decision, DocStage::Initial, vec![])?;
        Ok(render_pma_markdown(&doc))
    }

    /// Retriever, stage 2: one gap — the decision lacks a published threshold.
    fn run_customisation_plan(&self, exchange: &ChatExchange) -> Result<String> {
        let payload = tool_payload(exchange, "markdown_reader initial_pma_path")?;
        let doc = parse_pma_markdown(self.registry(), payload)?;
        let scenario = &doc.scenario_echo;
        let plan = CustomisationPlan {
            sections: vec![PlanSection {
                name: "Pest Management Decision threshold".to_string(),
                search_queries: vec![format!(
                    "{} action threshold {} {}",
                    scenario.pest, scenario.crop_name, scenario.location
                )],
                recommended_sources: vec!["AHDB".to_string()],
                justification: format!(
                    "The initial decision for {} on {} is model-estimated; a published \
                     action threshold from a trusted regional source is needed to confirm it.",
                    scenario.pest, scenario.crop_name
                ),
            }],
        };
        plan.validate()?;
        Ok(format!(
            "Reviewed the initial PMA. The pest management decision is not yet backed by a \
             published action threshold.\n\n```json\n{}\n```\n",
            serde_json::to_string_pretty(&plan).expect("plan serialization is infallible")
        ))
    }

    /// Retriever, stage 3: run each planned query against the corpus and
    /// compile findings; threshold facts cite exactly their supplying doc.
    fn run_knowledge_retrieval(&self, exchange: &ChatExchange) -> Result<String> {
        let payload = tool_payload(exchange, "json_reader custom_plan_path")?;
        let plan: CustomisationPlan = serde_json::from_str(payload)
            .map_err(|e| Error::MalformedResponse(format!("plan payload: {e}")))?;
        plan.validate()?;

        let mut sections = Vec::new();
        for plan_section in &plan.sections {
            let mut findings = Vec::new();
            for query in &plan_section.search_queries {
                findings.push(self.finding_for_query(query));
            }
            sections.push(ReportSection {
                name: plan_section.name.clone(),
                findings,
                analysis: "Where a published action threshold is available, the customised \
                           PMA must restate the decision by comparing the measured severity \
                           against it and cite the source."
                    .to_string(),
            });
        }
        let report = RetrievalReport { sections };
        Ok(format!(
            "Compiled findings for each planned search query from the recommended \
             sources.\n\n```json\n{}\n```\n",
            serde_json::to_string_pretty(&report).expect("report serialization is infallible")
        ))
    }

    fn finding_for_query(&self, query: &str) -> Finding {
        let results = self.corpus.search(query, 3);
        let query_key = normalize_ws(query);
        for result in &results {
            let doc = self
                .corpus
                .doc(&result.doc_id)
                .expect("result ids come from the corpus");
            for fact in &doc.thresholds {
                if query_key.contains(&normalize_ws(&fact.pest))
                    && query_key.contains(&normalize_ws(&fact.crop))
                {
                    return Finding {
                        query: query.to_string(),
                        summary: threshold_sentence(
                            fact.value, &fact.unit, &fact.pest, &fact.crop, &doc.publisher,
                            &fact.raw_text,
                        ),
                        citations: vec![Citation {
                            url: doc.url.clone(),
                            publisher: doc.publisher.clone(),
                        }],
                    };
                }
            }
        }
        match results.first() {
            Some(top) => {
                let doc = self.corpus.doc(&top.doc_id).expect("result ids come from the corpus");
                Finding {
                    query: query.to_string(),
                    summary: format!(
                        "No published action threshold located for this query; most relevant \
                         guidance: {}.",
                        doc.title
                    ),
                    citations: vec![Citation {
                        url: doc.url.clone(),
                        publisher: doc.publisher.clone(),
                    }],
                }
            }
            None => Finding {
                query: query.to_string(),
                summary: "No results found in the recommended sources.".to_string(),
                citations: vec![],
            },
        }
    }

    /// Editor, stage 4: integrate the retrieval report. A threshold finding
    /// re-derives the decision; otherwise the intrinsic estimate stands.
    fn run_customised_pma(&self, exchange: &ChatExchange) -> Result<String> {
        let initial_text = tool_payload(exchange, "markdown_reader initial_pma_path")?;
        let initial = parse_pma_markdown(self.registry(), initial_text)?;
        let report_text = tool_payload(exchange, "markdown_reader retrieved_info_path")?;
        let report = outputs::parse_retrieval_report(report_text)?;

        let mut threshold: Option<(ThresholdRecord, Citation)> = None;
        'outer: for section in &report.sections {
            for finding in &section.findings {
                if let Some(parsed) = parse_threshold_sentence(self.registry(), &finding.summary) {
                    let citation = finding.citations.first().cloned().unwrap_or(Citation {
                        url: String::new(),
                        publisher: parsed.publisher.clone(),
                    });
                    let record = ThresholdRecord {
                        pest: parsed.pest,
                        crop_name: parsed.crop,
                        threshold: Quantity::new(parsed.value, parsed.unit)?,
                        source: Source {
                            publisher: parsed.publisher,
                            reference: citation.url.clone(),
                        },
                        raw_text: parsed.raw_text,
                    };
                    threshold = Some((record, citation));
                    break 'outer;
                }
            }
        }

        let scenario = initial.scenario_echo.clone();
        let (decision, extra_citations) = match threshold {
            Some((record, citation)) => {
                let decision = decide_pmd(self.registry(), &scenario.severity, &record)?;
                (decision, vec![citation])
            }
            None => {
                let mut decision = initial.decision_block.clone();
                decision.rationale = format!(
                    "{} No published action threshold was found in the recommended sources; \
                     the intrinsic estimate stands.",
                    decision.rationale
                );
                (decision, vec![])
            }
        };

        let mut sections = initial.sections.clone();
        for s in &mut sections {
            if s.name == crate::domain::DECISION_SECTION {
                s.body = format!(
                    "{}\n\n{}",
                    decision_marker(decision.action_required),
                    decision.rationale
                );
            }
        }
        let mut citations = initial.citations.clone();
        for c in extra_citations {
            if !citations.contains(&c) {
                citations.push(c);
            }
        }
        let doc = PmaDocument::new(scenario, sections, decision, DocStage::Customised, citations)?;
        Ok(render_pma_markdown(&doc))
    }

    /// Validator, stage 5: recompute the decision from the corpus threshold
    /// and confirm, correct, or abstain.
    fn run_validate_threshold(&self, exchange: &ChatExchange) -> Result<String> {
        let pma_text = tool_payload(exchange, "markdown_reader custom_pma_path")?;
        let doc = parse_pma_markdown(self.registry(), pma_text)?;
        let scenario = &doc.scenario_echo;
        let original = doc.decision_block.action_required;

        let report = match self
            .corpus
            .lookup_threshold(&scenario.pest, &scenario.crop_name)
        {
            Some(record) => {
                let computed = decide_pmd(self.registry(), &scenario.severity, &record)?;
                if computed.action_required == original {
                    ValidationReport {
                        verdict: Verdict::Confirmed,
                        original_pmd: original,
                        final_pmd: original,
                        threshold_cited: Some(record),
                        justification: format!("Confirmed. {}", computed.rationale),
                    }
                } else {
                    ValidationReport {
                        verdict: Verdict::Corrected,
                        original_pmd: original,
                        final_pmd: computed.action_required,
                        threshold_cited: Some(record),
                        justification: format!(
                            "Corrected. The customised PMA states PMD: {original}, but {}",
                            computed.rationale
                        ),
                    }
                }
            }
            None => ValidationReport {
                verdict: Verdict::Unverifiable,
                original_pmd: original,
                final_pmd: original,
                threshold_cited: None,
                justification: format!(
                    "No corroborating action threshold found in the recommended sources for \
                     {} on {}; the published decision stands pending verification.",
                    scenario.pest, scenario.crop_name
                ),
            },
        };
        report.validate()?;
        Ok(format!(
            "Reviewed the threshold conclusion of the customised PMA against the recommended \
             sources.\n\n```json\n{}\n```\n",
            serde_json::to_string_pretty(&report).expect("report serialization is infallible")
        ))
    }
}

// ---------------------------------------------------------------------------
// Intrinsic decision and deterministic advice text
// ---------------------------------------------------------------------------

/// The editor's stage-one estimate: measured severity against the intrinsic
/// action level for its unit, strict-exceeds. No published values appear in
/// the rationale.
pub fn intrinsic_decision(scenario: &PestScenario) -> PmdDecision {
    let pivot = intrinsic_pivot(&scenario.severity.unit);
    let action = scenario.severity.value > pivot;
    let rationale = format!(
        "Intrinsic assessment: the sampled count of {} is {} for {} at the {} stage, so \
         immediate action is {} indicated while a published action threshold is confirmed.",
        scenario.severity_raw,
        if action { "high" } else { "low" },
        scenario.crop_name,
        scenario.crop_growth_stage,
        if action { "provisionally" } else { "not" },
    );
    PmdDecision::model_estimated(scenario.severity.clone(), action, rationale)
}

/// Deterministic section bodies for an advice document.
pub fn advice_sections(scenario: &PestScenario, decision: &PmdDecision) -> Vec<Section> {
    REQUIRED_SECTIONS
        .iter()
        .map(|name| {
            let body = match *name {
                "Pest Identification" => format!(
                    "{pest} identified on {crop} at the {stage} growth stage in {location} \
                     during {time}. Field conditions at sampling: {weather}, {temp} degrees \
                     Celsius, {humidity} percent relative humidity, {precip} mm recent \
                     precipitation. Reported infestation severity: {severity}.",
                    pest = scenario.pest,
                    crop = scenario.crop_name,
                    stage = scenario.crop_growth_stage,
                    location = scenario.location,
                    time = scenario.time,
                    weather = scenario.weather,
                    temp = format_value(scenario.temperature_c),
                    humidity = format_value(scenario.humidity_pct),
                    precip = format_value(scenario.precipitation_mm),
                    severity = scenario.severity_raw,
                ),
                "Threshold Exceeded" => format!(
                    "{}\n\n{}",
                    decision_marker(decision.action_required),
                    decision.rationale
                ),
                "IPM Strategies" => format!(
                    "Prioritise cultural control against {pest}: rotation planning, resistant \
                     or tolerant varieties where available, and field hygiene. Reserve chemical \
                     options for a confirmed exceedance of the action threshold, and prefer \
                     targeted treatments over broad-spectrum products.",
                    pest = scenario.pest
                ),
                "Economic Considerations" => format!(
                    "Weigh intervention cost against expected yield protection for {crop}. \
                     Treating below the action threshold usually returns less than it costs; \
                     revisit the decision if later counts rise.",
                    crop = scenario.crop_name
                ),
                "Application Timing" => format!(
                    "Align any justified treatment with the {stage} stage and with field access \
                     conditions in {time}; soil-applied options are only effective ahead of \
                     establishment.",
                    stage = scenario.crop_growth_stage,
                    time = scenario.time
                ),
                "Post-Treatment Monitoring" => format!(
                    "Resample the affected area on a fixed grid after any intervention and \
                     before the next host crop, recording {pest} counts per field so the \
                     rotation plan reflects measured pressure.",
                    pest = scenario.pest
                ),
                "Preventative Measures" => format!(
                    "Maintain machinery hygiene between fields, control volunteer plants and \
                     host weeds in intervening crops, and source certified seed or transplants \
                     for {crop}.",
                    crop = scenario.crop_name
                ),
                "Environmental Considerations" => {
                    "Avoid prophylactic treatments: broad-spectrum soil applications harm \
                     non-target fauna and may carry groundwater restrictions. Cultural controls \
                     are preferred wherever the threshold decision does not demand intervention."
                        .to_string()
                }
                other => format!("Advice for {other}."),
            };
            Section {
                name: name.to_string(),
                body,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Canonical threshold sentence
// ---------------------------------------------------------------------------

/// Renders the canonical threshold sentence used in retrieval summaries.
pub fn threshold_sentence(
    value: f64,
    unit: &str,
    pest: &str,
    crop: &str,
    publisher: &str,
    raw_text: &str,
) -> String {
    format!(
        "Action threshold: {} {unit} for {pest} on {crop} ({publisher}; raw: \"{raw_text}\").",
        format_value(value)
    )
}

pub struct ParsedThreshold {
    pub value: f64,
    pub unit: UnitToken,
    pub pest: String,
    pub crop: String,
    pub publisher: String,
    pub raw_text: String,
}

/// Parses the canonical threshold sentence back into its parts. Returns
/// `None` for summaries that do not state a threshold.
pub fn parse_threshold_sentence(registry: &UnitRegistry, summary: &str) -> Option<ParsedThreshold> {
    let rest = summary.strip_prefix("Action threshold: ")?;
    let (value_str, rest) = rest.split_once(' ')?;
    let value: f64 = value_str.replace(',', "").parse().ok()?;
    let (unit_str, rest) = rest.split_once(" for ")?;
    let unit = registry.token(unit_str).ok()?;
    let (pest, rest) = rest.split_once(" on ")?;
    let (crop, rest) = rest.split_once(" (")?;
    let (publisher, rest) = rest.split_once("; raw: \"")?;
    let raw_text = rest.strip_suffix("\").")?;
    Some(ParsedThreshold {
        value,
        unit,
        pest: pest.to_string(),
        crop: crop.to_string(),
        publisher: publisher.to_string(),
        raw_text: raw_text.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Message;

    fn exchange_with(task_line: &str, tools: Vec<(&str, String)>) -> ChatExchange {
        let mut messages = vec![
            Message {
                role: Role::System,
                content: "profile".into(),
            },
            Message {
                role: Role::User,
                content: format!("{task_line}\n\nbody"),
            },
        ];
        for (label, payload) in tools {
            messages.push(Message {
                role: Role::Tool,
                content: format!("{TOOL_HEADER_PREFIX}{label}\n\n{payload}"),
            });
        }
        ChatExchange {
            messages,
            temperature: 0.0,
            max_output: 1024,
            agent: None,
        }
    }

    #[test]
    fn prompt_without_header_is_unrecognized() {
        let backend = ScriptedBackend::new(Corpus::seed(UnitRegistry::default()));
        let exchange = exchange_with("no header here", vec![]);
        let err = backend.complete(&exchange).unwrap_err();
        assert!(matches!(err, Error::UnrecognizedScriptedTask), "{err}");
    }

    #[test]
    fn scripted_output_is_referentially_transparent() {
        let backend = ScriptedBackend::new(Corpus::seed(UnitRegistry::default()));
        let query = include_str!("../../assets/scenarios/beet-cyst-nematode-sugar-beet.json");
        // Strip the label the way the workspace does.
        let registry = UnitRegistry::default();
        let scenario = PestScenario::from_json(&registry, query).unwrap();
        let payload = scenario.strip_ground_truth().to_json_pretty();
        let exchange = exchange_with(
            "task-type: initial_pma",
            vec![("json_reader query_path", payload)],
        );
        let a = backend.complete(&exchange).unwrap();
        let b = backend.complete(&exchange).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a.usage, b.usage);
        assert_eq!(a.usage.attempts, 1);
    }

    #[test]
    fn initial_pma_uses_intrinsic_estimate() {
        let registry = UnitRegistry::default();
        let backend = ScriptedBackend::new(Corpus::seed(registry.clone()));
        let scenario = PestScenario::from_json(
            &registry,
            include_str!("../../assets/scenarios/beet-cyst-nematode-sugar-beet.json"),
        )
        .unwrap();
        let exchange = exchange_with(
            "task-type: initial_pma",
            vec![(
                "json_reader query_path",
                scenario.strip_ground_truth().to_json_pretty(),
            )],
        );
        let out = backend.complete(&exchange).unwrap();
        let doc = parse_pma_markdown(&registry, &out.text).unwrap();
        assert_eq!(doc.stage, DocStage::Initial);
        assert!(!doc.decision_block.action_required, "1 per gram is below the pivot");
        assert_eq!(
            doc.decision_block.confidence,
            crate::domain::Confidence::ModelEstimated
        );
        // The output must not state the corpus threshold.
        assert!(!out.text.contains("2 eggs-and-larvae/gram-soil"));
        assert!(!out.text.contains("2 eggs and larvae per"));
    }

    #[test]
    fn threshold_sentence_round_trips() {
        let registry = UnitRegistry::default();
        let sentence = threshold_sentence(
            1000.0,
            "nematodes/litre-soil",
            "Free-Living Nematodes",
            "Sugar Beet",
            "AHDB",
            "exceed 1,000 nematodes per litre of soil",
        );
        let parsed = parse_threshold_sentence(&registry, &sentence).unwrap();
        assert_eq!(parsed.value, 1000.0);
        assert_eq!(parsed.unit.as_str(), "nematodes/litre-soil");
        assert_eq!(parsed.pest, "Free-Living Nematodes");
        assert_eq!(parsed.crop, "Sugar Beet");
        assert_eq!(parsed.publisher, "AHDB");
        assert_eq!(parsed.raw_text, "exceed 1,000 nematodes per litre of soil");
    }

    #[test]
    fn non_threshold_summary_parses_to_none() {
        let registry = UnitRegistry::default();
        assert!(parse_threshold_sentence(&registry, "No results found.").is_none());
        assert!(parse_threshold_sentence(
            &registry,
            "Action threshold: unknown for X on Y (Z; raw: \"n/a\")."
        )
        .is_none());
    }

    #[test]
    fn intrinsic_pivots_cover_default_registry() {
        let registry = UnitRegistry::default();
        for (unit, pivot) in INTRINSIC_PIVOTS {
            let token = registry.token(unit).unwrap();
            assert_eq!(intrinsic_pivot(&token), pivot);
        }
    }
}
