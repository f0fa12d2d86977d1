//! Per-run workspace: the directory holding the file artifacts handed
//! between stages.

use std::path::{Path, PathBuf};

use crate::agents::Placeholder;
use crate::domain::PestScenario;
use crate::error::{Error, Result};
use crate::util::sha256_hex;

/// Static inputs copied into every fresh workspace.
#[derive(Debug, Clone)]
pub struct StaticAssets {
    pub example_scenario_json: String,
    pub example_pma_md: String,
}

impl StaticAssets {
    /// The assets shipped with the crate.
    pub fn builtin() -> StaticAssets {
        StaticAssets {
            example_scenario_json: include_str!("../../assets/example_scenario.json").to_string(),
            example_pma_md: include_str!("../../assets/example_pma.md").to_string(),
        }
    }
}

/// Name of the trace file written at the end of a run.
pub const RUN_FILE: &str = "run.json";

/// A run directory. Each artifact is written exactly once per run.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    /// Creates the directory and writes the three stage-one inputs:
    /// `query.json` (label stripped), `example.json`, `example_pma.md`.
    pub fn init(root: &Path, scenario: &PestScenario, assets: &StaticAssets) -> Result<Workspace> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let ws = Workspace {
            root: root.to_path_buf(),
        };
        ws.write_once(
            Placeholder::QueryPath.file_name(),
            &scenario.strip_ground_truth().to_json_pretty(),
        )?;
        ws.write_once(
            Placeholder::ExamplePath.file_name(),
            &assets.example_scenario_json,
        )?;
        ws.write_once(Placeholder::ExamplePmaPath.file_name(), &assets.example_pma_md)?;
        Ok(ws)
    }

    /// Opens an existing workspace directory without touching it.
    pub fn open(root: &Path) -> Result<Workspace> {
        if !root.is_dir() {
            return Err(Error::Workspace {
                path: root.to_path_buf(),
                cause: "not a directory".into(),
            });
        }
        Ok(Workspace {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, placeholder: Placeholder) -> PathBuf {
        self.root.join(placeholder.file_name())
    }

    pub fn run_path(&self) -> PathBuf {
        self.root.join(RUN_FILE)
    }

    /// Reads an artifact, reporting the placeholder that names it when absent.
    pub fn read(&self, placeholder: Placeholder) -> Result<String> {
        let path = self.path_of(placeholder);
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                placeholder: placeholder.name().to_string(),
                path,
            });
        }
        std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))
    }

    /// Creates a file that must not already exist.
    pub fn write_once(&self, name: &str, content: &str) -> Result<()> {
        let path = self.root.join(name);
        if path.exists() {
            return Err(Error::Workspace {
                path,
                cause: "artifact already written this run".into(),
            });
        }
        std::fs::write(&path, content).map_err(|e| Error::io(path, e))
    }

    /// The trace file may be rewritten as stages complete.
    pub fn write_run(&self, content: &str) -> Result<()> {
        let path = self.run_path();
        std::fs::write(&path, content).map_err(|e| Error::io(path, e))
    }

    /// Digest over every canonical artifact present (sorted by name), the
    /// trace file excluded so timestamps never enter the digest.
    pub fn digest(&self) -> Result<String> {
        let mut acc = String::new();
        for placeholder in crate::agents::ALL_PLACEHOLDERS {
            let path = self.path_of(placeholder);
            if path.is_file() {
                let content = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                acc.push_str(placeholder.file_name());
                acc.push('\n');
                acc.push_str(&sha256_hex(content.as_bytes()));
                acc.push('\n');
            }
        }
        let validation = self.root.join("validation.json");
        if validation.is_file() {
            let content = std::fs::read_to_string(&validation)
                .map_err(|e| Error::io(&validation, e))?;
            acc.push_str("validation.json\n");
            acc.push_str(&sha256_hex(content.as_bytes()));
            acc.push('\n');
        }
        Ok(sha256_hex(acc.as_bytes()))
    }
}
