//! Command-line front end: advise on one scenario, evaluate a dataset,
//! inspect traces, query the corpus, generate synthetic worlds.
//!
//! Exit codes: 0 success, 2 usage or input parse error, 3 stage failure,
//! 4 missing artifact, 5 io/config/other.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pestadvisor::agents::parse_validation_report;
use pestadvisor::domain::{parse_pma_markdown, render_pma_markdown, PestScenario, UnitRegistry};
use pestadvisor::eval::synth::{generate_world, GeneratorSpec};
use pestadvisor::eval::{evaluate, Dataset, EvalOptions, FaultSpec};
use pestadvisor::gateway::{backend_from_config, BackendConfig};
use pestadvisor::knowledge::Corpus;
use pestadvisor::pipeline::{
    apply_validation, prepare_run_dir, run_id_for, run_pipeline, PipelineOptions, PipelineTrace,
    Workspace, RUN_FILE,
};
use pestadvisor::Error;

#[derive(Parser)]
#[command(name = "pestadvisor", version, about = "Evidence-based pest management advice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full advisory pipeline for one scenario file.
    Advise(AdviseArgs),
    /// Evaluate two-stage decision accuracy over a labeled dataset.
    Eval(EvalArgs),
    /// Show the stage timeline of a completed or aborted run.
    Trace(TraceArgs),
    /// Inspect the knowledge corpus.
    Corpus(CorpusArgs),
    /// Generate a synthetic labeled dataset with a matching corpus.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Scripted,
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Plain,
    Markdown,
    Json,
}

#[derive(Args)]
struct CommonArgs {
    /// Text-generation backend.
    #[arg(long, value_enum, default_value = "scripted")]
    backend: BackendArg,
    /// Corpus directory; the built-in seed corpus when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Remote model name.
    #[arg(long)]
    model: Option<String>,
    /// Remote chat-completions endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the API key (remote backend).
    #[arg(long, default_value = "LLM_API_KEY")]
    api_key_env: String,
    /// Seed for fault injection and generators.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output format.
    #[arg(long, value_enum, default_value = "plain")]
    format: Format,
}

impl CommonArgs {
    fn corpus(&self) -> Result<Arc<Corpus>, Error> {
        let registry = UnitRegistry::default();
        match &self.corpus {
            Some(dir) => Ok(Arc::new(Corpus::load(dir, registry)?)),
            None => Ok(Corpus::seed(registry)),
        }
    }

    fn backend_config(&self) -> Result<BackendConfig, Error> {
        match self.backend {
            BackendArg::Scripted => Ok(BackendConfig::scripted()),
            BackendArg::Remote => {
                let endpoint = self.endpoint.clone().ok_or_else(|| {
                    Error::Config("--endpoint is required with --backend remote".into())
                })?;
                let model = self.model.clone().ok_or_else(|| {
                    Error::Config("--model is required with --backend remote".into())
                })?;
                let mut config = BackendConfig::remote(endpoint, model);
                config.api_key_env = Some(self.api_key_env.clone());
                Ok(config)
            }
        }
    }
}

#[derive(Args)]
struct AdviseArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Directory run workspaces are created under.
    #[arg(long, default_value = "runs")]
    workspace: PathBuf,
    /// Probability of flipping the customised decision marker (fault hook).
    #[arg(long, default_value_t = 0.0)]
    fault_rate: f64,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset file: a JSON array of labeled scenarios.
    #[arg(long)]
    dataset: PathBuf,
    /// Directory per-scenario workspaces are created under.
    #[arg(long, default_value = "runs/eval")]
    workspace: PathBuf,
    /// Probability of flipping each scenario's customised decision marker.
    #[arg(long, default_value_t = 0.0)]
    fault_rate: f64,
    /// Run scenarios one at a time instead of in parallel.
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct TraceArgs {
    /// Workspace directory of the run to inspect.
    #[arg(long)]
    workspace: PathBuf,
    #[arg(long, value_enum, default_value = "plain")]
    format: Format,
}

#[derive(Args)]
struct CorpusArgs {
    #[command(subcommand)]
    action: CorpusAction,
}

#[derive(Subcommand)]
enum CorpusAction {
    /// List all documents.
    List(CorpusCommon),
    /// Rank documents for a query.
    Search {
        query: String,
        #[arg(short, default_value_t = 5)]
        k: usize,
        #[command(flatten)]
        common: CorpusCommon,
    },
    /// Look up the action threshold for a (pest, crop) pair.
    Lookup {
        #[arg(long)]
        pest: String,
        #[arg(long)]
        crop: String,
        #[command(flatten)]
        common: CorpusCommon,
    },
}

#[derive(Args)]
struct CorpusCommon {
    /// Corpus directory; the built-in seed corpus when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "plain")]
    format: Format,
}

impl CorpusCommon {
    fn corpus(&self) -> Result<Arc<Corpus>, Error> {
        let registry = UnitRegistry::default();
        match &self.corpus {
            Some(dir) => Ok(Arc::new(Corpus::load(dir, registry)?)),
            None => Ok(Corpus::seed(registry)),
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for dataset.json and corpus/.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 68)]
    scenarios: usize,
    #[arg(long, default_value_t = 39)]
    pests: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Advise(args) => cmd_advise(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Trace(args) => cmd_trace(args),
        Command::Corpus(args) => cmd_corpus(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The closed exit-code mapping.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ScenarioInvalid(_)
        | Error::DatasetRow { .. }
        | Error::SpecInvalid(_)
        | Error::UnparsableQuantity { .. }
        | Error::UnknownUnit { .. }
        | Error::Json(_) => 2,
        Error::StageFailure { .. } => 3,
        Error::MissingArtifact { .. } => 4,
        _ => 5,
    }
}

fn read_scenario(path: &Path, registry: &UnitRegistry) -> Result<PestScenario, Error> {
    // A missing or unreadable input file is a usage error, not a system one.
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::ScenarioInvalid(format!("cannot read scenario file {}: {e}", path.display()))
    })?;
    PestScenario::from_json(registry, &text)
}

fn load_dataset(path: &Path, registry: &UnitRegistry) -> Result<Dataset, Error> {
    if !path.is_file() {
        return Err(Error::DatasetRow {
            row: 0,
            cause: format!("dataset file {} not found", path.display()),
        });
    }
    Dataset::load(path, registry)
}

fn cmd_advise(args: AdviseArgs) -> Result<(), Error> {
    let corpus = args.common.corpus()?;
    let config = args.common.backend_config()?;
    let backend = backend_from_config(&config, Arc::clone(&corpus))?;
    let scenario = read_scenario(&args.scenario, corpus.registry())?;

    let run_id = run_id_for(&scenario);
    let root = args.workspace.join(&run_id);
    prepare_run_dir(&root)?;

    let flip = !FaultSpec::Rate(args.fault_rate)
        .resolve(std::slice::from_ref(&run_id), args.common.seed)
        .is_empty();
    let options = PipelineOptions {
        flip_marker: flip,
        ..PipelineOptions::default()
    };
    let trace = run_pipeline(&scenario, &corpus, backend.as_ref(), &root, &options)
        .inspect_err(|e| {
            if let Error::StageFailure { stage, cause } = e {
                eprintln!("stage {stage} failed: {cause}");
            }
        })?;

    let ws = Workspace::open(&root)?;
    let custom = parse_pma_markdown(
        corpus.registry(),
        &ws.read(pestadvisor::agents::Placeholder::CustomPmaPath)?,
    )?;
    let report = parse_validation_report(&format!(
        "```json\n{}\n```",
        std::fs::read_to_string(root.join("validation.json"))
            .map_err(|e| Error::Io { path: root.join("validation.json"), cause: e.to_string() })?
    ))?;
    let validated = apply_validation(&custom, &report, corpus.registry())?;
    let markdown = render_pma_markdown(&validated);

    let verdict = trace.validator_verdict.expect("completed run has a verdict");
    match args.common.format {
        Format::Plain | Format::Markdown => {
            print!("{markdown}");
            eprintln!("verdict: {verdict}");
            eprintln!("workspace: {}", root.display());
        }
        Format::Json => {
            let final_pmd = trace.final_pmd.as_ref().expect("completed run has a decision");
            let out = serde_json::json!({
                "run_id": trace.run_id,
                "verdict": verdict.to_string(),
                "final_pmd": final_pmd.action_required,
                "confidence": final_pmd.confidence,
                "pma_markdown": markdown,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            eprintln!("workspace: {}", root.display());
        }
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let corpus = args.common.corpus()?;
    let config = args.common.backend_config()?;
    let dataset = load_dataset(&args.dataset, corpus.registry())?;

    let fault = if args.fault_rate > 0.0 {
        FaultSpec::Rate(args.fault_rate)
    } else {
        FaultSpec::Off
    };
    prepare_eval_root(&args.workspace, dataset.scenarios.len())?;
    let mut options = EvalOptions::new(&args.workspace);
    if args.sequential {
        options = options.sequential();
    }
    let report = evaluate(&dataset, &corpus, &config, &fault, args.common.seed, &options)?;

    match args.common.format {
        Format::Plain => {
            println!(
                "stage-1 accuracy:   {} ({}/{})",
                report.stage1.percent, report.stage1.n_correct, report.n_total
            );
            println!(
                "validated accuracy: {} ({}/{})",
                report.validated.percent, report.validated.n_correct, report.n_total
            );
            let failures: Vec<&str> = report
                .rows
                .iter()
                .filter(|r| r.failure.is_some())
                .map(|r| r.id.as_str())
                .collect();
            if !failures.is_empty() {
                eprintln!("failed scenarios (counted incorrect): {failures:?}");
            }
        }
        Format::Markdown => print!("{}", report.to_markdown()),
        Format::Json => print!("{}", report.to_json_pretty()),
    }
    Ok(())
}

fn prepare_eval_root(root: &Path, n: usize) -> Result<(), Error> {
    for i in 0..n {
        prepare_run_dir(&root.join(Dataset::scenario_id(i)))?;
    }
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> Result<(), Error> {
    let run_path = args.workspace.join(RUN_FILE);
    if !run_path.is_file() {
        return Err(Error::MissingArtifact {
            placeholder: "run.json".into(),
            path: run_path,
        });
    }
    let text = std::fs::read_to_string(&run_path).map_err(|e| Error::Io {
        path: run_path,
        cause: e.to_string(),
    })?;
    let trace = PipelineTrace::from_json(&text)?;

    match args.format {
        Format::Json => print!("{text}"),
        Format::Plain | Format::Markdown => {
            println!("run {}", trace.run_id);
            if trace.fault_injected {
                println!("fault hook: marker flipped after the customised-advice stage");
            }
            for s in &trace.stages {
                match &s.error {
                    None => println!(
                        "  {:<20} ok      attempts={} prompt={} output={}",
                        s.stage.to_string(),
                        s.attempts,
                        &s.prompt_digest[..12.min(s.prompt_digest.len())],
                        &s.output_digest[..12.min(s.output_digest.len())],
                    ),
                    Some(e) => println!("  {:<20} FAILED  {e}", s.stage.to_string()),
                }
            }
            match (&trace.validator_verdict, &trace.final_pmd) {
                (Some(v), Some(d)) => {
                    println!("verdict: {v}");
                    println!("final PMD: {}", d.action_required);
                }
                _ => println!("run incomplete"),
            }
        }
    }
    Ok(())
}

fn cmd_corpus(args: CorpusArgs) -> Result<(), Error> {
    match args.action {
        CorpusAction::List(common) => {
            let corpus = common.corpus()?;
            match common.format {
                Format::Json => {
                    let docs: Vec<_> = corpus.docs().collect();
                    println!("{}", serde_json::to_string_pretty(&docs).expect("json"));
                }
                _ => {
                    for doc in corpus.docs() {
                        println!(
                            "{:<32} {:<12} thresholds={} {}",
                            doc.doc_id,
                            doc.publisher,
                            doc.thresholds.len(),
                            doc.title
                        );
                    }
                }
            }
        }
        CorpusAction::Search { query, k, common } => {
            let corpus = common.corpus()?;
            let results = corpus.search(&query, k);
            match common.format {
                Format::Json => {
                    println!("{}", serde_json::to_string_pretty(&results).expect("json"))
                }
                _ => {
                    for (i, r) in results.iter().enumerate() {
                        println!("{}. {} (score {:.6})", i + 1, r.doc_id, r.score);
                        println!("   {}", r.snippet);
                    }
                    if results.is_empty() {
                        println!("no results");
                    }
                }
            }
        }
        CorpusAction::Lookup { pest, crop, common } => {
            let corpus = common.corpus()?;
            match corpus.lookup_threshold(&pest, &crop) {
                Some(record) => match common.format {
                    Format::Json => {
                        println!("{}", serde_json::to_string_pretty(&record).expect("json"))
                    }
                    _ => println!(
                        "{} on {}: {} ({}, {})",
                        record.pest,
                        record.crop_name,
                        record.threshold,
                        record.source.publisher,
                        record.source.reference
                    ),
                },
                None => println!("no threshold on record for {pest} on {crop}"),
            }
        }
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let world = generate_world(&GeneratorSpec::new(args.scenarios, args.pests), args.seed)?;
    let corpus_dir = args.out.join("corpus");
    std::fs::create_dir_all(&corpus_dir).map_err(|e| Error::Io {
        path: corpus_dir.clone(),
        cause: e.to_string(),
    })?;

    let dataset_path = args.out.join("dataset.json");
    std::fs::write(&dataset_path, world.dataset.to_json_pretty()).map_err(|e| Error::Io {
        path: dataset_path.clone(),
        cause: e.to_string(),
    })?;

    let corpus = world.corpus_without(&BTreeSet::new());
    let mut n_docs = 0;
    for doc in corpus.docs() {
        let path = corpus_dir.join(format!("{}.json", doc.doc_id));
        let mut body = serde_json::to_string_pretty(doc).expect("json");
        body.push('\n');
        std::fs::write(&path, body).map_err(|e| Error::Io {
            path: path.clone(),
            cause: e.to_string(),
        })?;
        n_docs += 1;
    }

    println!(
        "wrote {} scenarios to {} and {} corpus docs to {}",
        world.dataset.scenarios.len(),
        dataset_path.display(),
        n_docs,
        corpus_dir.display()
    );
    Ok(())
}
