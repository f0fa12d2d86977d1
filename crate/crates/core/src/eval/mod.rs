//! Two-stage accuracy evaluation: run the pipeline per scenario, measure the
//! decision after the customised advice (stage 1) and again after validation,
//! and report both as exact ratios.
//!
//! Scenario runs are independent, so the harness fans them out with rayon
//! when the `parallel` feature is on; results are re-assembled in scenario-id
//! order, making the report identical either way.

pub mod synth;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::Verdict;
use crate::domain::{PestScenario, ScenarioFile, UnitRegistry};
use crate::error::{Error, Result};
use crate::gateway::{backend_from_config, BackendConfig, BackendKind, CompletionBackend};
use crate::knowledge::Corpus;
use crate::pipeline::{
    extract_final_pmd, extract_stage1_pmd, prepare_run_dir, run_pipeline, PipelineOptions,
};

/// Positionwise match ratio, exactly `correct / total`.
pub fn accuracy(predictions: &[bool], labels: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Renders `correct/total` as a percentage with one decimal, rounding half
/// up. Integer arithmetic, so 59/68 is exactly "86.8%" and 63/68 "92.6%".
pub fn format_percent(correct: usize, total: usize) -> String {
    assert!(total > 0, "format_percent needs a non-empty sample");
    let tenths = (2000 * correct as u64 + total as u64) / (2 * total as u64);
    format!("{}.{}%", tenths / 10, tenths % 10)
}

/// A labeled scenario set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub source_note: String,
    pub scenarios: Vec<PestScenario>,
}

impl Dataset {
    /// Stable per-scenario identifier within a dataset.
    pub fn scenario_id(index: usize) -> String {
        format!("s{index:03}")
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::SpecInvalid("dataset has no scenarios".into()));
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::DatasetRow {
                    row: i + 1,
                    cause: e.to_string(),
                })?;
            if s.ground_truth_pmd.is_none() {
                return Err(Error::DatasetRow {
                    row: i + 1,
                    cause: "scenario is missing its PestManagementDecision label".into(),
                });
            }
        }
        Ok(())
    }

    /// Loads a JSON array of scenario objects; parse failures report the
    /// offending row number.
    pub fn load(path: &Path, registry: &UnitRegistry) -> Result<Dataset> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Dataset::from_json(&text, registry, path.display().to_string())
    }

    pub fn from_json(text: &str, registry: &UnitRegistry, name: String) -> Result<Dataset> {
        let rows: Vec<serde_json::Value> = serde_json::from_str(text)?;
        let mut scenarios = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            let file: ScenarioFile =
                serde_json::from_value(row).map_err(|e| Error::DatasetRow {
                    row: i + 1,
                    cause: e.to_string(),
                })?;
            let scenario =
                PestScenario::from_file_repr(registry, file).map_err(|e| Error::DatasetRow {
                    row: i + 1,
                    cause: e.to_string(),
                })?;
            scenarios.push(scenario);
        }
        let dataset = Dataset {
            name,
            source_note: "loaded from file".into(),
            scenarios,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn to_json_pretty(&self) -> String {
        let rows: Vec<ScenarioFile> = self.scenarios.iter().map(|s| s.to_file_repr()).collect();
        let mut out =
            serde_json::to_string_pretty(&rows).expect("dataset serialization is infallible");
        out.push('\n');
        out
    }
}

/// Which scenarios get their customised-advice marker flipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultSpec {
    Off,
    /// Independent flip probability per scenario.
    Rate(f64),
    /// Exactly this many scenarios, chosen by seeded shuffle.
    Count(usize),
    /// Exactly these scenario ids.
    Ids(BTreeSet<String>),
}

impl FaultSpec {
    /// Resolves the flip set deterministically from the scenario ids and the
    /// evaluation seed, independent of execution order.
    pub fn resolve(&self, ids: &[String], seed: u64) -> BTreeSet<String> {
        let mut sorted: Vec<&String> = ids.iter().collect();
        sorted.sort();
        match self {
            FaultSpec::Off => BTreeSet::new(),
            FaultSpec::Rate(p) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                sorted
                    .into_iter()
                    .filter(|_| rng.random::<f64>() < *p)
                    .cloned()
                    .collect()
            }
            FaultSpec::Count(k) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut pool = sorted;
                pool.shuffle(&mut rng);
                pool.into_iter().take(*k).cloned().collect()
            }
            FaultSpec::Ids(set) => ids.iter().filter(|id| set.contains(*id)).cloned().collect(),
        }
    }
}

/// One evaluated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub id: String,
    pub truth: bool,
    pub stage1_pmd: Option<bool>,
    pub validated_pmd: Option<bool>,
    pub verdict: Option<Verdict>,
    pub fault_injected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAccuracy {
    pub n_correct: usize,
    pub accuracy: f64,
    pub percent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub backend: BackendKind,
    pub corpus_digest: String,
    pub fault: FaultSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_total: usize,
    pub stage1: StageAccuracy,
    pub validated: StageAccuracy,
    pub rows: Vec<ScenarioRow>,
    pub config: ConfigEcho,
}

impl EvalReport {
    pub fn to_json_pretty(&self) -> String {
        let mut out =
            serde_json::to_string_pretty(self).expect("report serialization is infallible");
        out.push('\n');
        out
    }

    /// Two-row accuracy table.
    pub fn to_markdown(&self) -> String {
        format!(
            "| Response stage | Acc. (%) |\n| --- | --- |\n\
             | PMD (editor + retriever) | {} |\n| PMD (validated by validator) | {} |\n",
            self.stage1.percent.trim_end_matches('%'),
            self.validated.percent.trim_end_matches('%'),
        )
    }

    /// Per-scenario rows must re-aggregate exactly to the summary counts.
    pub fn check_aggregation(&self) -> Result<()> {
        let stage1 = self
            .rows
            .iter()
            .filter(|r| r.stage1_pmd == Some(r.truth))
            .count();
        let validated = self
            .rows
            .iter()
            .filter(|r| r.validated_pmd == Some(r.truth))
            .count();
        if stage1 != self.stage1.n_correct
            || validated != self.validated.n_correct
            || self.rows.len() != self.n_total
        {
            return Err(Error::SpecInvalid(format!(
                "report aggregation mismatch: rows give {stage1}/{validated} of {}, summary \
                 says {}/{} of {}",
                self.rows.len(),
                self.stage1.n_correct,
                self.validated.n_correct,
                self.n_total
            )));
        }
        Ok(())
    }
}

/// Harness options: where run workspaces live and whether scenarios fan out
/// across threads.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub workspace_root: PathBuf,
    pub parallel: bool,
}

impl EvalOptions {
    pub fn new(workspace_root: impl Into<PathBuf>) -> Self {
        EvalOptions {
            workspace_root: workspace_root.into(),
            parallel: cfg!(feature = "parallel"),
        }
    }

    pub fn sequential(mut self) -> Self {
        self.parallel = false;
        self
    }
}

/// Runs the full pipeline per scenario and reports accuracy at both
/// measurement points. A failed scenario counts as incorrect at both stages
/// and is flagged on its row; the evaluation itself never aborts on stage
/// failures.
pub fn evaluate(
    dataset: &Dataset,
    corpus: &Arc<Corpus>,
    backend_config: &BackendConfig,
    fault: &FaultSpec,
    seed: u64,
    options: &EvalOptions,
) -> Result<EvalReport> {
    dataset.validate()?;
    let backend = backend_from_config(backend_config, Arc::clone(corpus))?;
    let ids: Vec<String> = (0..dataset.scenarios.len())
        .map(Dataset::scenario_id)
        .collect();
    let flips = fault.resolve(&ids, seed);

    let jobs: Vec<(usize, &PestScenario)> = dataset.scenarios.iter().enumerate().collect();
    let run_one = |&(index, scenario): &(usize, &PestScenario)| -> ScenarioRow {
        let id = Dataset::scenario_id(index);
        let fault_injected = flips.contains(&id);
        let truth = scenario.ground_truth_pmd.expect("dataset validated");
        let root = options.workspace_root.join(&id);
        match run_scenario(scenario, corpus, backend.as_ref(), &root, fault_injected) {
            Ok((stage1, validated, verdict)) => ScenarioRow {
                id,
                truth,
                stage1_pmd: Some(stage1),
                validated_pmd: Some(validated),
                verdict: Some(verdict),
                fault_injected,
                failure: None,
            },
            Err(e) => ScenarioRow {
                id,
                truth,
                stage1_pmd: None,
                validated_pmd: None,
                verdict: None,
                fault_injected,
                failure: Some(e.to_string()),
            },
        }
    };

    let mut rows = run_jobs(&jobs, options.parallel, run_one);
    rows.sort_by(|a, b| a.id.cmp(&b.id));

    let n_total = rows.len();
    let stage1_correct = rows.iter().filter(|r| r.stage1_pmd == Some(r.truth)).count();
    let validated_correct = rows
        .iter()
        .filter(|r| r.validated_pmd == Some(r.truth))
        .count();
    let report = EvalReport {
        n_total,
        stage1: StageAccuracy {
            n_correct: stage1_correct,
            accuracy: stage1_correct as f64 / n_total as f64,
            percent: format_percent(stage1_correct, n_total),
        },
        validated: StageAccuracy {
            n_correct: validated_correct,
            accuracy: validated_correct as f64 / n_total as f64,
            percent: format_percent(validated_correct, n_total),
        },
        rows,
        config: ConfigEcho {
            backend: backend_config.kind,
            corpus_digest: corpus.digest(),
            fault: fault.clone(),
            seed,
        },
    };
    report.check_aggregation()?;
    Ok(report)
}

fn run_scenario(
    scenario: &PestScenario,
    corpus: &Arc<Corpus>,
    backend: &dyn CompletionBackend,
    root: &Path,
    flip_marker: bool,
) -> Result<(bool, bool, Verdict)> {
    prepare_run_dir(root)?;
    let pipeline_options = PipelineOptions {
        flip_marker,
        ..PipelineOptions::default()
    };
    let trace = run_pipeline(scenario, corpus, backend, root, &pipeline_options)?;
    let registry = corpus.registry();
    let ws = crate::pipeline::Workspace::open(root)?;
    let stage1 = extract_stage1_pmd(&ws, registry)?.action_required;
    let validated = extract_final_pmd(&ws, registry)?.action_required;
    let verdict = trace
        .validator_verdict
        .ok_or_else(|| Error::DocumentInvalid("completed run lacks a verdict".into()))?;
    Ok((stage1, validated, verdict))
}

#[cfg(feature = "parallel")]
fn run_jobs<T: Sync, R: Send>(
    jobs: &[T],
    parallel: bool,
    f: impl Fn(&T) -> R + Send + Sync,
) -> Vec<R> {
    use rayon::prelude::*;
    if parallel {
        jobs.par_iter().map(f).collect()
    } else {
        jobs.iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn run_jobs<T: Sync, R: Send>(
    jobs: &[T],
    _parallel: bool,
    f: impl Fn(&T) -> R + Send + Sync,
) -> Vec<R> {
    jobs.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_exact_examples() {
        let mk = |correct: usize, total: usize| {
            let labels = vec![true; total];
            let mut preds = vec![true; correct];
            preds.extend(vec![false; total - correct]);
            accuracy(&preds, &labels).unwrap()
        };
        assert_eq!(mk(59, 68), 59.0 / 68.0);
        assert_eq!(mk(63, 68), 63.0 / 68.0);
        assert_eq!(mk(5, 5), 1.0);
        assert_eq!(mk(0, 4), 0.0);
    }

    #[test]
    fn accuracy_rejects_bad_shapes() {
        assert!(matches!(
            accuracy(&[true], &[true, false]).unwrap_err(),
            Error::LengthMismatch { .. }
        ));
        assert!(matches!(accuracy(&[], &[]).unwrap_err(), Error::EmptyInput));
    }

    #[test]
    fn percent_rendering_matches_presentation() {
        assert_eq!(format_percent(59, 68), "86.8%");
        assert_eq!(format_percent(63, 68), "92.6%");
        assert_eq!(format_percent(68, 68), "100.0%");
        assert_eq!(format_percent(0, 68), "0.0%");
        // Round-half-up at one decimal: 1/8 = 12.5% stays 12.5, 1/16 = 6.25 -> 6.3.
        assert_eq!(format_percent(1, 8), "12.5%");
        assert_eq!(format_percent(1, 16), "6.3%");
    }

    #[test]
    fn accuracy_is_one_minus_hamming() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..40usize);
            let preds: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let hamming = preds.iter().zip(&labels).filter(|(p, l)| p != l).count();
            let acc = accuracy(&preds, &labels).unwrap();
            // Exact contract: the ratio of matches. The Hamming identity holds
            // mathematically; in floats the two divisions differ by <= 1 ulp.
            assert_eq!(acc, (n - hamming) as f64 / n as f64);
            assert!((acc - (1.0 - hamming as f64 / n as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn fault_resolution_is_deterministic_and_order_independent() {
        let ids: Vec<String> = (0..20).map(Dataset::scenario_id).collect();
        let mut shuffled = ids.clone();
        shuffled.reverse();
        for spec in [FaultSpec::Rate(0.3), FaultSpec::Count(7)] {
            let a = spec.resolve(&ids, 42);
            let b = spec.resolve(&shuffled, 42);
            assert_eq!(a, b);
            assert_eq!(a, spec.resolve(&ids, 42));
        }
        assert_eq!(FaultSpec::Count(7).resolve(&ids, 42).len(), 7);
        assert!(FaultSpec::Off.resolve(&ids, 42).is_empty());
    }
}
