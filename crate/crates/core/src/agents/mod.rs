//! Agent profiles, the five task specifications, prompt rendering, tool
//! execution and structured-output parsing.

pub mod outputs;
pub mod prompt;
pub mod tools;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use outputs::{
    check_report_matches_plan, parse_plan, parse_retrieval_report, parse_validation_report,
    CustomisationPlan, Finding, PlanSection, ReportSection, RetrievalReport, ValidationReport,
    Verdict,
};
pub use prompt::{leak_scan, render_prompt, TASK_HEADER_PREFIX, TOOL_HEADER_PREFIX};
pub use tools::{run_tool, ToolArgs};

/// Trusted guidance publishers, used as the default source allowlist.
pub const PUBLISHER_ALLOWLIST: [&str; 3] = ["AHDB", "BCPC", "EU-FarmBook"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentName {
    Editor,
    Retriever,
    Validator,
}

impl fmt::Display for AgentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentName::Editor => "Editor",
            AgentName::Retriever => "Retriever",
            AgentName::Validator => "Validator",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    JsonReader,
    MarkdownReader,
    Search,
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ToolKind::JsonReader => "json_reader",
            ToolKind::MarkdownReader => "markdown_reader",
            ToolKind::Search => "search",
        })
    }
}

/// An agent role: its system-prompt profile text and the tools it may use.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentProfile {
    pub name: AgentName,
    pub profile_text: String,
    pub allowed_tools: BTreeSet<ToolKind>,
}

impl AgentProfile {
    /// Built-in profile for a role. The editor never searches; retrieval and
    /// validation both combine file reading with search.
    pub fn default_for(name: AgentName) -> AgentProfile {
        let (profile_text, tools): (&str, &[ToolKind]) = match name {
            AgentName::Editor => (
                "You are an agronomist with exceptional knowledge of pest management. \
                 Coordinate and synthesise information to generate both the initial and the \
                 final pest management advice (PMA) for the queried pest scenario.",
                &[ToolKind::JsonReader, ToolKind::MarkdownReader],
            ),
            AgentName::Retriever => (
                "Review the initial PMA created by the Editor and suggest a customisation \
                 plan to enhance it. With the customisation plan, retrieve detailed online \
                 information using the provided search queries and recommended online sources.",
                &[ToolKind::JsonReader, ToolKind::MarkdownReader, ToolKind::Search],
            ),
            AgentName::Validator => (
                "Critically review and validate the customised PMA, with a specific emphasis \
                 on verifying that the threshold conclusion is accurately derived from the \
                 diagnostic data. Leverage both your intrinsic expertise and the external \
                 search tool to ensure that the decision about whether the pest infestation \
                 exceeds the action threshold is scientifically sound and consistent with \
                 industry guidelines.",
                &[ToolKind::JsonReader, ToolKind::MarkdownReader, ToolKind::Search],
            ),
        };
        AgentProfile {
            name,
            profile_text: profile_text.to_string(),
            allowed_tools: tools.iter().copied().collect(),
        }
    }

    /// Same tool set, custom profile text.
    pub fn with_profile_text(name: AgentName, text: impl Into<String>) -> AgentProfile {
        AgentProfile {
            profile_text: text.into(),
            ..AgentProfile::default_for(name)
        }
    }
}

/// The five pipeline task kinds, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    InitialPma,
    CustomisationPlan,
    KnowledgeRetrieval,
    CustomisedPma,
    ValidateThreshold,
}

/// Canonical stage order.
pub const STAGE_ORDER: [TaskKind; 5] = [
    TaskKind::InitialPma,
    TaskKind::CustomisationPlan,
    TaskKind::KnowledgeRetrieval,
    TaskKind::CustomisedPma,
    TaskKind::ValidateThreshold,
];

impl TaskKind {
    /// The agent each task is bound to. The binding is closed.
    pub fn agent(self) -> AgentName {
        match self {
            TaskKind::InitialPma | TaskKind::CustomisedPma => AgentName::Editor,
            TaskKind::CustomisationPlan | TaskKind::KnowledgeRetrieval => AgentName::Retriever,
            TaskKind::ValidateThreshold => AgentName::Validator,
        }
    }

    pub fn header_token(self) -> &'static str {
        match self {
            TaskKind::InitialPma => "initial_pma",
            TaskKind::CustomisationPlan => "customisation_plan",
            TaskKind::KnowledgeRetrieval => "knowledge_retrieval",
            TaskKind::CustomisedPma => "customised_pma",
            TaskKind::ValidateThreshold => "validate_threshold",
        }
    }

    pub fn from_header_token(token: &str) -> Option<TaskKind> {
        STAGE_ORDER.into_iter().find(|k| k.header_token() == token)
    }

    /// File the stage writes into the workspace.
    pub fn output_artifact(self) -> &'static str {
        match self {
            TaskKind::InitialPma => "initial_pma.md",
            TaskKind::CustomisationPlan => "custom_plan.json",
            TaskKind::KnowledgeRetrieval => "retrieved_info.md",
            TaskKind::CustomisedPma => "custom_pma.md",
            TaskKind::ValidateThreshold => "validation.json",
        }
    }

    /// Workspace files the stage needs before it can render its prompt.
    pub fn required_inputs(self) -> &'static [Placeholder] {
        match self {
            TaskKind::InitialPma => &[
                Placeholder::QueryPath,
                Placeholder::ExamplePath,
                Placeholder::ExamplePmaPath,
            ],
            TaskKind::CustomisationPlan => &[Placeholder::InitialPmaPath],
            TaskKind::KnowledgeRetrieval => &[Placeholder::CustomPlanPath],
            TaskKind::CustomisedPma => &[
                Placeholder::InitialPmaPath,
                Placeholder::RetrievedInfoPath,
                Placeholder::CustomPlanPath,
            ],
            TaskKind::ValidateThreshold => &[Placeholder::CustomPmaPath],
        }
    }

    pub fn default_template(self) -> &'static str {
        match self {
            TaskKind::InitialPma => include_str!("../../assets/templates/initial_pma.txt"),
            TaskKind::CustomisationPlan => {
                include_str!("../../assets/templates/customisation_plan.txt")
            }
            TaskKind::KnowledgeRetrieval => {
                include_str!("../../assets/templates/knowledge_retrieval.txt")
            }
            TaskKind::CustomisedPma => include_str!("../../assets/templates/customised_pma.txt"),
            TaskKind::ValidateThreshold => {
                include_str!("../../assets/templates/validate_threshold.txt")
            }
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.header_token())
    }
}

/// The seven canonical workspace-path placeholders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placeholder {
    QueryPath,
    ExamplePath,
    ExamplePmaPath,
    InitialPmaPath,
    CustomPlanPath,
    RetrievedInfoPath,
    CustomPmaPath,
}

pub const ALL_PLACEHOLDERS: [Placeholder; 7] = [
    Placeholder::QueryPath,
    Placeholder::ExamplePath,
    Placeholder::ExamplePmaPath,
    Placeholder::InitialPmaPath,
    Placeholder::CustomPlanPath,
    Placeholder::RetrievedInfoPath,
    Placeholder::CustomPmaPath,
];

impl Placeholder {
    pub fn name(self) -> &'static str {
        match self {
            Placeholder::QueryPath => "query_path",
            Placeholder::ExamplePath => "example_path",
            Placeholder::ExamplePmaPath => "example_pma_path",
            Placeholder::InitialPmaPath => "initial_pma_path",
            Placeholder::CustomPlanPath => "custom_plan_path",
            Placeholder::RetrievedInfoPath => "retrieved_info_path",
            Placeholder::CustomPmaPath => "custom_pma_path",
        }
    }

    /// Canonical file name inside a run workspace.
    pub fn file_name(self) -> &'static str {
        match self {
            Placeholder::QueryPath => "query.json",
            Placeholder::ExamplePath => "example.json",
            Placeholder::ExamplePmaPath => "example_pma.md",
            Placeholder::InitialPmaPath => "initial_pma.md",
            Placeholder::CustomPlanPath => "custom_plan.json",
            Placeholder::RetrievedInfoPath => "retrieved_info.md",
            Placeholder::CustomPmaPath => "custom_pma.md",
        }
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One task: kind, bound agent, prompt template and output artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub agent: AgentName,
    pub template_text: String,
    pub output_artifact: String,
}

impl TaskSpec {
    /// Task with its built-in template.
    pub fn new(kind: TaskKind) -> TaskSpec {
        TaskSpec {
            kind,
            agent: kind.agent(),
            template_text: kind.default_template().to_string(),
            output_artifact: kind.output_artifact().to_string(),
        }
    }

    /// Task with a custom template. The template may only use the seven
    /// canonical placeholders.
    pub fn with_template(kind: TaskKind, template_text: impl Into<String>) -> Result<TaskSpec> {
        let template_text = template_text.into();
        validate_placeholders(&template_text)?;
        Ok(TaskSpec {
            template_text,
            ..TaskSpec::new(kind)
        })
    }

    /// Rejects any (kind, agent) pair other than the canonical binding.
    pub fn bound_to(kind: TaskKind, agent: AgentName) -> Result<TaskSpec> {
        if agent != kind.agent() {
            return Err(Error::TaskBinding {
                task: kind.to_string(),
                expected: kind.agent().to_string(),
                given: agent.to_string(),
            });
        }
        Ok(TaskSpec::new(kind))
    }
}

/// Scans `{ident}` tokens and rejects anything outside the canonical set.
fn validate_placeholders(template: &str) -> Result<()> {
    let known: BTreeSet<&str> = ALL_PLACEHOLDERS.iter().map(|p| p.name()).collect();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let tail = &rest[open + 1..];
        let Some(close) = tail.find('}') else { break };
        let ident = &tail[..close];
        if !ident.is_empty()
            && ident.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            && !known.contains(ident)
        {
            return Err(Error::TemplateInvalid(format!(
                "unknown placeholder {{{ident}}}"
            )));
        }
        rest = &tail[close + 1..];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tool_sets_match_task_table() {
        let editor = AgentProfile::default_for(AgentName::Editor);
        assert!(!editor.allowed_tools.contains(&ToolKind::Search));
        assert!(editor.allowed_tools.contains(&ToolKind::JsonReader));
        assert!(editor.allowed_tools.contains(&ToolKind::MarkdownReader));
        for name in [AgentName::Retriever, AgentName::Validator] {
            let p = AgentProfile::default_for(name);
            assert_eq!(p.allowed_tools.len(), 3);
            assert!(p.allowed_tools.contains(&ToolKind::Search));
        }
    }

    #[test]
    fn task_binding_is_closed() {
        assert!(TaskSpec::bound_to(TaskKind::ValidateThreshold, AgentName::Editor).is_err());
        assert!(TaskSpec::bound_to(TaskKind::InitialPma, AgentName::Retriever).is_err());
        assert!(TaskSpec::bound_to(TaskKind::ValidateThreshold, AgentName::Validator).is_ok());
        assert_eq!(TaskKind::CustomisedPma.agent(), AgentName::Editor);
        assert_eq!(TaskKind::CustomisationPlan.agent(), AgentName::Retriever);
    }

    #[test]
    fn default_templates_use_only_canonical_placeholders() {
        for kind in STAGE_ORDER {
            TaskSpec::with_template(kind, kind.default_template()).unwrap();
        }
    }

    #[test]
    fn unknown_placeholder_rejected() {
        let err = TaskSpec::with_template(TaskKind::InitialPma, "read {secret_path} now");
        assert!(matches!(err, Err(Error::TemplateInvalid(_))));
    }

    #[test]
    fn literal_braces_in_json_examples_are_tolerated() {
        // Template prose may show JSON snippets; only identifier-shaped
        // tokens are treated as placeholders.
        TaskSpec::with_template(TaskKind::CustomisationPlan, r#"emit {"sections": [...]}"#)
            .unwrap();
    }
}
