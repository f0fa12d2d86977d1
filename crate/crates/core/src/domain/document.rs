//! The advice document: named markdown sections around a machine-readable
//! decision block.
//!
//! Canonical form: one H1 title, a `pma:meta` HTML comment carrying the
//! structured fields (stage, scenario echo, decision block, citations), then
//! one H2 per section. The first line of the "Threshold Exceeded" body is the
//! decision marker `PMD: true|false`, which must agree with the decision
//! block. `parse_pma_markdown(render_pma_markdown(d)) == d` for every valid
//! document.

use serde::{Deserialize, Serialize};

use crate::domain::scenario::{PestScenario, ScenarioFile};
use crate::domain::threshold::{Citation, PmdDecision};
use crate::domain::units::UnitRegistry;
use crate::error::{Error, Result};

/// Section names every advice document must carry, in canonical order.
pub const REQUIRED_SECTIONS: [&str; 8] = [
    "Pest Identification",
    "Threshold Exceeded",
    "IPM Strategies",
    "Economic Considerations",
    "Application Timing",
    "Post-Treatment Monitoring",
    "Preventative Measures",
    "Environmental Considerations",
];

/// The section holding the decision marker.
pub const DECISION_SECTION: &str = "Threshold Exceeded";

const META_PREFIX: &str = "<!-- pma:meta ";
const META_SUFFIX: &str = " -->";
const MARKER_PREFIX: &str = "PMD: ";

/// Canonical decision marker line.
pub fn decision_marker(action_required: bool) -> String {
    format!("{MARKER_PREFIX}{action_required}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocStage {
    Initial,
    Customised,
    Validated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmaDocument {
    /// The scenario this advice answers, never carrying the evaluation label.
    pub scenario_echo: PestScenario,
    pub sections: Vec<Section>,
    pub decision_block: PmdDecision,
    pub stage: DocStage,
    pub citations: Vec<Citation>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    stage: DocStage,
    scenario: ScenarioFile,
    decision: PmdDecision,
    citations: Vec<Citation>,
}

impl PmaDocument {
    /// Validating constructor. Section bodies are trimmed; the document is
    /// rejected unless every required section is present exactly once and the
    /// decision marker agrees with the decision block.
    pub fn new(
        scenario_echo: PestScenario,
        sections: Vec<Section>,
        decision_block: PmdDecision,
        stage: DocStage,
        citations: Vec<Citation>,
    ) -> Result<Self> {
        let scenario_echo = scenario_echo.strip_ground_truth();
        scenario_echo.validate()?;
        decision_block.check_structure()?;

        let sections: Vec<Section> = sections
            .into_iter()
            .map(|s| Section {
                name: s.name.trim().to_string(),
                body: s.body.trim().to_string(),
            })
            .collect();

        let mut seen = std::collections::BTreeSet::new();
        for s in &sections {
            if !seen.insert(s.name.clone()) {
                return Err(Error::DuplicateSection(s.name.clone()));
            }
            for line in s.body.lines() {
                if line.starts_with("## ") || line.starts_with(META_PREFIX) {
                    return Err(Error::DocumentInvalid(format!(
                        "section {:?} body contains a reserved line: {line:?}",
                        s.name
                    )));
                }
            }
        }
        for required in REQUIRED_SECTIONS {
            if !seen.contains(required) {
                return Err(Error::MissingSection(required.to_string()));
            }
        }

        let te_body = &sections
            .iter()
            .find(|s| s.name == DECISION_SECTION)
            .expect("presence checked above")
            .body;
        let marker = te_body.lines().next().unwrap_or("");
        let marked = parse_marker(marker)
            .ok_or_else(|| Error::MissingDecisionMarker(format!("first line is {marker:?}")))?;
        if marked != decision_block.action_required {
            return Err(Error::DocumentInvalid(format!(
                "marker says {marked}, decision block says {}",
                decision_block.action_required
            )));
        }

        Ok(PmaDocument {
            scenario_echo,
            sections,
            decision_block,
            stage,
            citations,
        })
    }

    pub fn section(&self, name: &str) -> Option<&str> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.body.as_str())
    }

    /// Simulates an editor slip: the decision boolean and marker line flip,
    /// everything else (including the now-contradictory rationale) stays.
    pub fn with_flipped_decision(&self) -> Result<PmaDocument> {
        let mut decision = self.decision_block.clone();
        decision.action_required = !decision.action_required;
        let sections = self
            .sections
            .iter()
            .map(|s| {
                if s.name == DECISION_SECTION {
                    let rest: Vec<&str> = s.body.lines().skip(1).collect();
                    let mut body = decision_marker(decision.action_required);
                    if !rest.is_empty() {
                        body.push('\n');
                        body.push_str(&rest.join("\n"));
                    }
                    Section {
                        name: s.name.clone(),
                        body,
                    }
                } else {
                    s.clone()
                }
            })
            .collect();
        PmaDocument::new(
            self.scenario_echo.clone(),
            sections,
            decision,
            self.stage,
            self.citations.clone(),
        )
    }

    /// Rewrites the decision section with a (possibly corrected) decision and
    /// promotes the document to the validated stage.
    pub fn with_validated_decision(
        &self,
        decision: PmdDecision,
        extra_citations: Vec<Citation>,
    ) -> Result<PmaDocument> {
        let sections = self
            .sections
            .iter()
            .map(|s| {
                if s.name == DECISION_SECTION {
                    Section {
                        name: s.name.clone(),
                        body: format!(
                            "{}\n\n{}",
                            decision_marker(decision.action_required),
                            decision.rationale
                        ),
                    }
                } else {
                    s.clone()
                }
            })
            .collect();
        let mut citations = self.citations.clone();
        for c in extra_citations {
            if !citations.contains(&c) {
                citations.push(c);
            }
        }
        PmaDocument::new(
            self.scenario_echo.clone(),
            sections,
            decision,
            DocStage::Validated,
            citations,
        )
    }
}

fn parse_marker(line: &str) -> Option<bool> {
    match line.strip_prefix(MARKER_PREFIX)? {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

/// Serializes a document to its canonical markdown form.
pub fn render_pma_markdown(doc: &PmaDocument) -> String {
    let meta = Meta {
        stage: doc.stage,
        scenario: doc.scenario_echo.to_file_repr(),
        decision: doc.decision_block.clone(),
        citations: doc.citations.clone(),
    };
    let meta_json = serde_json::to_string(&meta).expect("meta serialization is infallible");
    let mut out = format!(
        "# Pest Management Advice: {} on {}\n\n{META_PREFIX}{meta_json}{META_SUFFIX}\n",
        doc.scenario_echo.pest, doc.scenario_echo.crop_name
    );
    for s in &doc.sections {
        out.push_str("\n## ");
        out.push_str(&s.name);
        out.push_str("\n\n");
        out.push_str(&s.body);
        out.push('\n');
    }
    out
}

/// Parses canonical markdown back into a document.
pub fn parse_pma_markdown(registry: &UnitRegistry, text: &str) -> Result<PmaDocument> {
    let mut meta_json: Option<&str> = None;
    let mut sections: Vec<Section> = Vec::new();
    let mut current: Option<(String, Vec<&str>)> = None;

    for line in text.lines() {
        if let Some(rest) = line.strip_prefix(META_PREFIX) {
            if meta_json.is_none() {
                meta_json = rest.strip_suffix(META_SUFFIX);
            }
            continue;
        }
        if let Some(name) = line.strip_prefix("## ") {
            if let Some((n, body)) = current.take() {
                push_section(&mut sections, n, body)?;
            }
            current = Some((name.trim().to_string(), Vec::new()));
            continue;
        }
        if let Some((_, body)) = current.as_mut() {
            body.push(line);
        }
    }
    if let Some((n, body)) = current.take() {
        push_section(&mut sections, n, body)?;
    }

    for required in REQUIRED_SECTIONS {
        if !sections.iter().any(|s| s.name == required) {
            return Err(Error::MissingSection(required.to_string()));
        }
    }

    let meta_json = meta_json
        .ok_or_else(|| Error::MissingDecisionMarker("no pma:meta block in document".into()))?;
    let meta: Meta = serde_json::from_str(meta_json).map_err(|e| {
        Error::MissingDecisionMarker(format!("unreadable pma:meta block: {e}"))
    })?;
    if meta.scenario.pest_management_decision.is_some() {
        return Err(Error::DocumentInvalid(
            "scenario echo must not carry a ground-truth label".into(),
        ));
    }
    let scenario = PestScenario::from_file_repr(registry, meta.scenario)?;
    PmaDocument::new(scenario, sections, meta.decision, meta.stage, meta.citations)
}

fn push_section(sections: &mut Vec<Section>, name: String, body: Vec<&str>) -> Result<()> {
    if sections.iter().any(|s| s.name == name) {
        return Err(Error::DuplicateSection(name));
    }
    sections.push(Section {
        name,
        body: body.join("\n").trim().to_string(),
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::threshold::{Source, ThresholdRecord};
    use crate::domain::units::{parse_quantity, Quantity};

    fn sample_doc() -> PmaDocument {
        let reg = UnitRegistry::default();
        let scenario = PestScenario::from_json(
            &reg,
            r#"{
                "Pest": "Beet Cyst Nematode",
                "InfestationSeverity": "1 egg and larvae per gram of soil",
                "CropName": "Sugar Beet",
                "CropGrowthStage": "Seedling",
                "Temperature": 15,
                "Weather": "Overcast",
                "Humidity": 75,
                "Precipitation": 20,
                "Time": "April",
                "Location": "Lincolnshire"
            }"#,
        )
        .unwrap();
        let severity = parse_quantity(&reg, &scenario.severity_raw).unwrap();
        let decision = crate::domain::threshold::decide_pmd(
            &reg,
            &severity,
            &ThresholdRecord {
                pest: scenario.pest.clone(),
                crop_name: scenario.crop_name.clone(),
                threshold: Quantity::new(2.0, reg.token("eggs-and-larvae/gram-soil").unwrap())
                    .unwrap(),
                source: Source {
                    publisher: "AHDB".into(),
                    reference: "https://ahdb.org.uk/knowledge-library/beet-cyst-nematode".into(),
                },
                raw_text: "2 eggs and larvae per relevant soil volume".into(),
            },
        )
        .unwrap();
        let mut sections: Vec<Section> = REQUIRED_SECTIONS
            .iter()
            .map(|name| Section {
                name: name.to_string(),
                body: format!("Advice for {name}."),
            })
            .collect();
        sections[1].body = format!("{}\n\n{}", decision_marker(false), decision.rationale);
        PmaDocument::new(
            scenario,
            sections,
            decision,
            DocStage::Customised,
            vec![Citation {
                url: "https://ahdb.org.uk/knowledge-library/beet-cyst-nematode".into(),
                publisher: "AHDB".into(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn canonical_doc_round_trips() {
        let reg = UnitRegistry::default();
        let doc = sample_doc();
        let md = render_pma_markdown(&doc);
        assert_eq!(md.matches("\n## ").count(), 8);
        assert!(md.contains("PMD: false"));
        let back = parse_pma_markdown(&reg, &md).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn empty_string_is_missing_section() {
        let err = parse_pma_markdown(&UnitRegistry::default(), "").unwrap_err();
        assert!(matches!(err, Error::MissingSection(_)), "{err}");
    }

    #[test]
    fn duplicate_heading_rejected() {
        let doc = sample_doc();
        let md = render_pma_markdown(&doc);
        let dup = format!("{md}\n## Threshold Exceeded\n\nPMD: false\n");
        let err = parse_pma_markdown(&UnitRegistry::default(), &dup).unwrap_err();
        assert!(
            matches!(err, Error::DuplicateSection(ref s) if s == "Threshold Exceeded"),
            "{err}"
        );
    }

    #[test]
    fn missing_marker_rejected() {
        let doc = sample_doc();
        let md = render_pma_markdown(&doc);
        let broken = md.replace("PMD: false\n", "no marker here\n");
        let err = parse_pma_markdown(&UnitRegistry::default(), &broken).unwrap_err();
        assert!(matches!(err, Error::MissingDecisionMarker(_)), "{err}");
    }

    #[test]
    fn inconsistent_marker_rejected() {
        let doc = sample_doc();
        let md = render_pma_markdown(&doc);
        // Flip only the marker, leaving the meta decision untouched.
        let broken = md.replace("PMD: false", "PMD: true");
        let err = parse_pma_markdown(&UnitRegistry::default(), &broken).unwrap_err();
        assert!(matches!(err, Error::DocumentInvalid(_)), "{err}");
    }

    #[test]
    fn flip_keeps_document_parseable() {
        let reg = UnitRegistry::default();
        let doc = sample_doc();
        let flipped = doc.with_flipped_decision().unwrap();
        assert!(flipped.decision_block.action_required);
        assert_eq!(
            flipped.section(DECISION_SECTION).unwrap().lines().next(),
            Some("PMD: true")
        );
        let back = parse_pma_markdown(&reg, &render_pma_markdown(&flipped)).unwrap();
        assert_eq!(back, flipped);
        // Double flip restores the original.
        assert_eq!(flipped.with_flipped_decision().unwrap(), doc);
    }

    #[test]
    fn validated_rewrite_updates_stage_and_citations() {
        let doc = sample_doc().with_flipped_decision().unwrap();
        let mut corrected = doc.decision_block.clone();
        corrected.action_required = false;
        corrected.rationale = "Corrected after cross-validation.".into();
        let validated = doc
            .with_validated_decision(
                corrected,
                vec![Citation {
                    url: "https://ahdb.org.uk/pest-thresholds".into(),
                    publisher: "AHDB".into(),
                }],
            )
            .unwrap();
        assert_eq!(validated.stage, DocStage::Validated);
        assert!(!validated.decision_block.action_required);
        assert_eq!(validated.citations.len(), 2);
        assert!(validated
            .section(DECISION_SECTION)
            .unwrap()
            .contains("Corrected after cross-validation."));
    }

    #[test]
    fn ground_truth_never_survives_construction() {
        let reg = UnitRegistry::default();
        let doc = sample_doc();
        let mut scenario = doc.scenario_echo.clone();
        scenario.ground_truth_pmd = Some(true);
        let rebuilt = PmaDocument::new(
            scenario,
            doc.sections.clone(),
            doc.decision_block.clone(),
            doc.stage,
            doc.citations.clone(),
        )
        .unwrap();
        assert_eq!(rebuilt.scenario_echo.ground_truth_pmd, None);
        assert!(!render_pma_markdown(&rebuilt).contains("PestManagementDecision"));
        let _ = reg;
    }
}
