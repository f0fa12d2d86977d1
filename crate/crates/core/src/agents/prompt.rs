//! Prompt rendering: placeholder substitution, static tool execution with
//! inlined results, and the task-type header the scripted backend dispatches
//! on.

use crate::agents::{
    run_tool, AgentProfile, Placeholder, TaskKind, TaskSpec, ToolArgs,
};
use crate::domain::{parse_pma_markdown, ThresholdRecord, UnitRegistry};
use crate::error::{Error, Result};
use crate::gateway::{ChatExchange, Message, Role};
use crate::knowledge::Corpus;
use crate::pipeline::Workspace;
use crate::util::format_value;

/// First line of every rendered user message, e.g. `task-type: initial_pma`.
pub const TASK_HEADER_PREFIX: &str = "task-type: ";

/// First line of every inlined tool message, e.g. `tool: json_reader query_path`.
pub const TOOL_HEADER_PREFIX: &str = "tool: ";

/// Results inlined per search query.
const SEARCH_TOP_K: usize = 3;

const MAX_OUTPUT_TOKENS: u32 = 4096;

/// Renders the full exchange for a task: system profile, task header plus
/// substituted template as the user message, and one tool message per static
/// tool invocation so the model sees data, not paths alone.
pub fn render_prompt(
    profile: &AgentProfile,
    task: &TaskSpec,
    workspace: &Workspace,
    corpus: &Corpus,
    registry: &UnitRegistry,
) -> Result<ChatExchange> {
    if profile.name != task.agent {
        return Err(Error::TaskBinding {
            task: task.kind.to_string(),
            expected: task.agent.to_string(),
            given: profile.name.to_string(),
        });
    }
    // Stage ordering guarantees inputs exist; enforce it here so a violated
    // order surfaces as MissingArtifact naming the offending placeholder.
    for placeholder in task.kind.required_inputs() {
        let path = workspace.path_of(*placeholder);
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                placeholder: placeholder.name().to_string(),
                path,
            });
        }
    }

    let mut user = format!("{TASK_HEADER_PREFIX}{}\n\n", task.kind.header_token());
    user.push_str(&substitute(&task.template_text, workspace));

    let mut messages = vec![
        Message {
            role: Role::System,
            content: profile.profile_text.clone(),
        },
        Message {
            role: Role::User,
            content: user,
        },
    ];

    for invocation in static_tool_plan(task.kind, workspace, registry)? {
        let (label, payload) = match &invocation {
            Invocation::ReadJson(p) => {
                let path = workspace.path_of(*p);
                (
                    format!("json_reader {}", p.name()),
                    run_tool(profile, &ToolArgs::JsonReader { path: &path }, corpus)?,
                )
            }
            Invocation::ReadMarkdown(p) => {
                let path = workspace.path_of(*p);
                (
                    format!("markdown_reader {}", p.name()),
                    run_tool(profile, &ToolArgs::MarkdownReader { path: &path }, corpus)?,
                )
            }
            Invocation::Search(query) => (
                format!("search {query:?}"),
                run_tool(
                    profile,
                    &ToolArgs::Search {
                        query,
                        k: SEARCH_TOP_K,
                    },
                    corpus,
                )?,
            ),
        };
        messages.push(Message {
            role: Role::Tool,
            content: format!("{TOOL_HEADER_PREFIX}{label}\n\n{payload}"),
        });
    }

    let exchange = ChatExchange {
        messages,
        temperature: 0.0,
        max_output: MAX_OUTPUT_TOKENS,
        agent: Some(task.agent.to_string()),
    };
    exchange.validate()?;
    Ok(exchange)
}

fn substitute(template: &str, workspace: &Workspace) -> String {
    let mut out = template.to_string();
    for placeholder in crate::agents::ALL_PLACEHOLDERS {
        let needle = format!("{{{}}}", placeholder.name());
        if out.contains(&needle) {
            out = out.replace(&needle, &workspace.path_of(placeholder).display().to_string());
        }
    }
    out
}

/// One statically-planned tool call.
enum Invocation {
    ReadJson(Placeholder),
    ReadMarkdown(Placeholder),
    Search(String),
}

/// Which tools run for which task, mirroring each task's tool column.
fn static_tool_plan(
    kind: TaskKind,
    workspace: &Workspace,
    registry: &UnitRegistry,
) -> Result<Vec<Invocation>> {
    Ok(match kind {
        TaskKind::InitialPma => vec![
            Invocation::ReadJson(Placeholder::QueryPath),
            Invocation::ReadJson(Placeholder::ExamplePath),
            Invocation::ReadMarkdown(Placeholder::ExamplePmaPath),
        ],
        TaskKind::CustomisationPlan => {
            vec![Invocation::ReadMarkdown(Placeholder::InitialPmaPath)]
        }
        TaskKind::KnowledgeRetrieval => {
            let plan_text = workspace.read(Placeholder::CustomPlanPath)?;
            let plan = crate::agents::outputs::parse_plan(&wrap_json(&plan_text))?;
            let mut invocations = vec![Invocation::ReadJson(Placeholder::CustomPlanPath)];
            for section in &plan.sections {
                for query in &section.search_queries {
                    invocations.push(Invocation::Search(query.clone()));
                }
            }
            invocations
        }
        TaskKind::CustomisedPma => vec![
            Invocation::ReadMarkdown(Placeholder::InitialPmaPath),
            Invocation::ReadMarkdown(Placeholder::RetrievedInfoPath),
            Invocation::ReadJson(Placeholder::CustomPlanPath),
        ],
        TaskKind::ValidateThreshold => {
            let pma_text = workspace.read(Placeholder::CustomPmaPath)?;
            let doc = parse_pma_markdown(registry, &pma_text)?;
            let query = format!(
                "{} threshold {}",
                doc.scenario_echo.pest, doc.scenario_echo.crop_name
            );
            vec![
                Invocation::ReadMarkdown(Placeholder::CustomPmaPath),
                Invocation::Search(query),
            ]
        }
    })
}

/// The plan artifact is stored as bare JSON; the parser expects a fenced block.
fn wrap_json(json: &str) -> String {
    format!("```json\n{json}\n```")
}

/// Scans a rendered prompt for material that must not reach the first stage:
/// the evaluation label field and the corpus threshold for the scenario.
///
/// The label's boolean value is unscannable ("false" appears in ordinary
/// prose), so the guard checks that the label FIELD never appears — the
/// workspace strips it from `query.json` — and that the threshold statement
/// (raw text, `value unit`, and the natural-language spelling) is absent.
/// Returns every offending pattern found; empty means clean.
pub fn leak_scan(
    prompt_text: &str,
    registry: &UnitRegistry,
    threshold: Option<&ThresholdRecord>,
) -> Vec<String> {
    let haystack = prompt_text.to_lowercase();
    let mut hits = Vec::new();
    if haystack.contains("pestmanagementdecision") {
        hits.push("PestManagementDecision".to_string());
    }
    if let Some(record) = threshold {
        let value = format_value(record.threshold.value);
        let patterns = [
            record.raw_text.clone(),
            format!("{value} {}", record.threshold.unit),
            format!("{value} {}", registry.natural_phrase(&record.threshold.unit)),
        ];
        for pattern in patterns {
            if !pattern.trim().is_empty() && haystack.contains(&pattern.to_lowercase()) {
                hits.push(pattern);
            }
        }
    }
    hits
}
