//! Tool execution. Tools run under the orchestrator before prompt dispatch;
//! agents never invoke them mid-completion.

use std::path::{Path, PathBuf};

use crate::agents::{AgentProfile, ToolKind};
use crate::error::{Error, Result};
use crate::knowledge::Corpus;

/// Arguments for one tool invocation.
#[derive(Debug, Clone)]
pub enum ToolArgs<'a> {
    JsonReader { path: &'a Path },
    MarkdownReader { path: &'a Path },
    Search { query: &'a str, k: usize },
}

impl ToolArgs<'_> {
    pub fn kind(&self) -> ToolKind {
        match self {
            ToolArgs::JsonReader { .. } => ToolKind::JsonReader,
            ToolArgs::MarkdownReader { .. } => ToolKind::MarkdownReader,
            ToolArgs::Search { .. } => ToolKind::Search,
        }
    }
}

/// Executes a tool on behalf of `agent`, enforcing its allowed tool set.
/// All tools are read-only.
pub fn run_tool(agent: &AgentProfile, args: &ToolArgs<'_>, corpus: &Corpus) -> Result<String> {
    let kind = args.kind();
    if !agent.allowed_tools.contains(&kind) {
        return Err(Error::ToolNotAllowed {
            agent: agent.name.to_string(),
            tool: kind.to_string(),
        });
    }
    match args {
        ToolArgs::JsonReader { path } => {
            let text = read(path)?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::ToolIoError {
                    path: path.to_path_buf(),
                    cause: format!("not valid JSON: {e}"),
                })?;
            Ok(serde_json::to_string_pretty(&value).expect("re-serialization is infallible"))
        }
        ToolArgs::MarkdownReader { path } => read(path),
        ToolArgs::Search { query, k } => {
            let results = corpus.search(query, *k);
            if results.is_empty() {
                return Ok(format!("No results for query {query:?}."));
            }
            let mut out = format!("Top {} result(s) for query {query:?}:\n", results.len());
            for (i, r) in results.iter().enumerate() {
                let doc = corpus.doc(&r.doc_id).expect("result ids come from the corpus");
                out.push_str(&format!(
                    "{rank}. {title} — {publisher}, {url}\n   snippet: {snippet}\n",
                    rank = i + 1,
                    title = doc.title,
                    publisher = doc.publisher,
                    url = doc.url,
                    snippet = r.snippet,
                ));
            }
            Ok(out)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::ToolIoError {
        path: PathBuf::from(path),
        cause: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentName;
    use crate::domain::UnitRegistry;

    #[test]
    fn editor_cannot_search() {
        let corpus = Corpus::seed(UnitRegistry::default());
        let editor = AgentProfile::default_for(AgentName::Editor);
        let err = run_tool(
            &editor,
            &ToolArgs::Search {
                query: "anything",
                k: 3,
            },
            &corpus,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ToolNotAllowed { .. }), "{err}");
    }

    #[test]
    fn json_reader_pretty_prints() {
        let corpus = Corpus::seed(UnitRegistry::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        std::fs::write(&path, r#"{"Pest":"Beet Cyst Nematode","Location":"Lincolnshire"}"#)
            .unwrap();
        let editor = AgentProfile::default_for(AgentName::Editor);
        let out = run_tool(&editor, &ToolArgs::JsonReader { path: &path }, &corpus).unwrap();
        assert!(out.contains("\"Pest\": \"Beet Cyst Nematode\""));
        assert!(out.contains("\"Location\": \"Lincolnshire\""));
    }

    #[test]
    fn search_formats_snippets_with_citations() {
        let corpus = Corpus::seed(UnitRegistry::default());
        let validator = AgentProfile::default_for(AgentName::Validator);
        let out = run_tool(
            &validator,
            &ToolArgs::Search {
                query: "free living nematodes sugar beet threshold",
                k: 3,
            },
            &corpus,
        )
        .unwrap();
        assert!(out.contains("1,000 nematodes per litre"), "{out}");
        assert!(out.contains("AHDB"));
        assert!(out.contains("https://ahdb.org.uk/"));
    }

    #[test]
    fn missing_file_is_tool_io_error() {
        let corpus = Corpus::seed(UnitRegistry::default());
        let editor = AgentProfile::default_for(AgentName::Editor);
        let err = run_tool(
            &editor,
            &ToolArgs::MarkdownReader {
                path: Path::new("/nonexistent/file.md"),
            },
            &corpus,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ToolIoError { .. }), "{err}");
    }
}
