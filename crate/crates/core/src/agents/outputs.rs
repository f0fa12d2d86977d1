//! Structured task outputs: the customisation plan, the retrieval report and
//! the validation report, each parsed strictly from a fenced JSON block.

use serde::{Deserialize, Serialize};

use crate::agents::PUBLISHER_ALLOWLIST;
use crate::domain::{Citation, ThresholdRecord};
use crate::error::{Error, Result};

/// One knowledge gap the retriever plans to fill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub name: String,
    pub search_queries: Vec<String>,
    pub recommended_sources: Vec<String>,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomisationPlan {
    pub sections: Vec<PlanSection>,
}

impl CustomisationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.sections.is_empty() {
            return Err(Error::SchemaViolation {
                field: "sections".into(),
                cause: "plan needs at least one section".into(),
            });
        }
        for s in &self.sections {
            if s.search_queries.is_empty() {
                return Err(Error::SchemaViolation {
                    field: format!("sections[{:?}].search_queries", s.name),
                    cause: "every section needs at least one query".into(),
                });
            }
            for src in &s.recommended_sources {
                if !PUBLISHER_ALLOWLIST
                    .iter()
                    .any(|p| p.eq_ignore_ascii_case(src))
                {
                    return Err(Error::SchemaViolation {
                        field: format!("sections[{:?}].recommended_sources", s.name),
                        cause: format!("{src:?} is not an allowlisted publisher"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        let mut out =
            serde_json::to_string_pretty(self).expect("plan serialization is infallible");
        out.push('\n');
        out
    }
}

/// Summary of what one search query turned up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Finding {
    pub query: String,
    pub summary: String,
    pub citations: Vec<Citation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub name: String,
    pub findings: Vec<Finding>,
    pub analysis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalReport {
    pub sections: Vec<ReportSection>,
}

/// The validator's verdict on a customised advice document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Confirmed,
    Corrected,
    Unverifiable,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Confirmed => "confirmed",
            Verdict::Corrected => "corrected",
            Verdict::Unverifiable => "unverifiable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub original_pmd: bool,
    pub final_pmd: bool,
    pub threshold_cited: Option<ThresholdRecord>,
    pub justification: String,
}

impl ValidationReport {
    pub fn validate(&self) -> Result<()> {
        match self.verdict {
            Verdict::Confirmed | Verdict::Unverifiable => {
                if self.final_pmd != self.original_pmd {
                    return Err(Error::SchemaViolation {
                        field: "final_pmd".into(),
                        cause: format!(
                            "verdict {} must keep the original decision",
                            self.verdict
                        ),
                    });
                }
            }
            Verdict::Corrected => {
                if self.final_pmd == self.original_pmd {
                    return Err(Error::SchemaViolation {
                        field: "final_pmd".into(),
                        cause: "verdict corrected must flip the decision".into(),
                    });
                }
                if self.threshold_cited.is_none() {
                    return Err(Error::SchemaViolation {
                        field: "threshold_cited".into(),
                        cause: "a correction must cite the threshold justifying it".into(),
                    });
                }
            }
        }
        if let Some(record) = &self.threshold_cited {
            record.validate()?;
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        let mut out =
            serde_json::to_string_pretty(self).expect("report serialization is infallible");
        out.push('\n');
        out
    }
}

/// Extracts the first fenced ```json block. Prose before and after the block
/// is ignored; a missing block is an error.
pub fn extract_fenced_json(text: &str) -> Result<&str> {
    let open = text.find("```json").ok_or(Error::NoStructuredBlock)?;
    let after = &text[open + "```json".len()..];
    let after = after.strip_prefix('\n').unwrap_or(after);
    let close = after.find("\n```").ok_or(Error::NoStructuredBlock)?;
    Ok(&after[..close])
}

fn schema_err(field: &str, err: serde_json::Error) -> Error {
    Error::SchemaViolation {
        field: field.to_string(),
        cause: err.to_string(),
    }
}

pub fn parse_plan(text: &str) -> Result<CustomisationPlan> {
    let block = extract_fenced_json(text)?;
    let plan: CustomisationPlan =
        serde_json::from_str(block).map_err(|e| schema_err("CustomisationPlan", e))?;
    plan.validate()?;
    Ok(plan)
}

pub fn parse_retrieval_report(text: &str) -> Result<RetrievalReport> {
    let block = extract_fenced_json(text)?;
    let report: RetrievalReport =
        serde_json::from_str(block).map_err(|e| schema_err("RetrievalReport", e))?;
    Ok(report)
}

pub fn parse_validation_report(text: &str) -> Result<ValidationReport> {
    let block = extract_fenced_json(text)?;
    let report: ValidationReport =
        serde_json::from_str(block).map_err(|e| schema_err("ValidationReport", e))?;
    report.validate()?;
    Ok(report)
}

/// Report sections must mirror the plan's sections, in order.
pub fn check_report_matches_plan(
    report: &RetrievalReport,
    plan: &CustomisationPlan,
) -> Result<()> {
    let plan_names: Vec<&str> = plan.sections.iter().map(|s| s.name.as_str()).collect();
    let report_names: Vec<&str> = report.sections.iter().map(|s| s.name.as_str()).collect();
    if plan_names != report_names {
        return Err(Error::SchemaViolation {
            field: "sections".into(),
            cause: format!(
                "report sections {report_names:?} do not match plan sections {plan_names:?}"
            ),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fenced(json: &str) -> String {
        format!("Some prose first.\n\n```json\n{json}\n```\n\nTrailing prose ignored.")
    }

    #[test]
    fn parses_plan_and_ignores_prose() {
        let plan = parse_plan(&fenced(
            r#"{"sections": [{"name": "Pest Management Decision threshold",
                "search_queries": ["Beet Cyst Nematode action threshold Sugar Beet Lincolnshire"],
                "recommended_sources": ["AHDB"],
                "justification": "Regional guidance is needed to confirm the decision."}]}"#,
        ))
        .unwrap();
        assert_eq!(plan.sections.len(), 1);
        assert_eq!(plan.sections[0].recommended_sources, vec!["AHDB"]);
    }

    #[test]
    fn missing_block_is_no_structured_block() {
        let err = parse_plan("just prose, no fenced block").unwrap_err();
        assert!(matches!(err, Error::NoStructuredBlock), "{err}");
    }

    #[test]
    fn empty_plan_rejected() {
        let err = parse_plan(&fenced(r#"{"sections": []}"#)).unwrap_err();
        assert!(matches!(err, Error::SchemaViolation { .. }), "{err}");
    }

    #[test]
    fn section_without_query_rejected() {
        let err = parse_plan(&fenced(
            r#"{"sections": [{"name": "x", "search_queries": [],
                "recommended_sources": ["AHDB"], "justification": "j"}]}"#,
        ))
        .unwrap_err();
        assert!(matches!(err, Error::SchemaViolation { .. }), "{err}");
    }

    #[test]
    fn off_allowlist_source_rejected() {
        let err = parse_plan(&fenced(
            r#"{"sections": [{"name": "x", "search_queries": ["q"],
                "recommended_sources": ["RandomBlog"], "justification": "j"}]}"#,
        ))
        .unwrap_err();
        assert!(matches!(err, Error::SchemaViolation { .. }), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let err = parse_plan(&fenced(
            r#"{"sections": [], "extra": true}"#,
        ))
        .unwrap_err();
        assert!(matches!(err, Error::SchemaViolation { .. }), "{err}");
    }

    #[test]
    fn corrected_verdict_must_flip() {
        let err = parse_validation_report(&fenced(
            r#"{"verdict": "corrected", "original_pmd": true, "final_pmd": true,
                "threshold_cited": null, "justification": "j"}"#,
        ))
        .unwrap_err();
        assert!(matches!(err, Error::SchemaViolation { .. }), "{err}");
    }

    #[test]
    fn corrected_verdict_must_cite() {
        let err = parse_validation_report(&fenced(
            r#"{"verdict": "corrected", "original_pmd": true, "final_pmd": false,
                "threshold_cited": null, "justification": "j"}"#,
        ))
        .unwrap_err();
        assert!(matches!(err, Error::SchemaViolation { .. }), "{err}");
    }

    #[test]
    fn confirmed_verdict_parses() {
        let report = parse_validation_report(&fenced(
            r#"{"verdict": "confirmed", "original_pmd": false, "final_pmd": false,
                "threshold_cited": null, "justification": "matches guidance"}"#,
        ))
        .unwrap();
        assert_eq!(report.verdict, Verdict::Confirmed);
    }

    #[test]
    fn report_sections_must_match_plan() {
        let plan = parse_plan(&fenced(
            r#"{"sections": [{"name": "A", "search_queries": ["q"],
                "recommended_sources": ["AHDB"], "justification": "j"}]}"#,
        ))
        .unwrap();
        let report = parse_retrieval_report(&fenced(
            r#"{"sections": [{"name": "B", "findings": [], "analysis": "a"}]}"#,
        ))
        .unwrap();
        assert!(check_report_matches_plan(&report, &plan).is_err());
    }
}
