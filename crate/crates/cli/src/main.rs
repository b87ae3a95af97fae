//! `toolgap`: command-line driver for augmentation, suite runs, diagnosis,
//! gate training and gated runs.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use toolgap_core::backend::{Backend, HttpBackend, Playbook, PlaybookBackend};
use toolgap_core::corpus::{self, Corpus, Task, Variant};
use toolgap_core::diagnostics::fixtures::{fixture_report, FixtureSet};
use toolgap_core::diagnostics::report::{build_report, ReportBundle, RunMetadata};
use toolgap_core::distractor::{augment_corpus, AugmentConfig, FillerGenerator};
use toolgap_core::gate::{self, GateConfig, GateModel, TrainConfig};
use toolgap_core::harness::{
    prompts, results_csv, run_suite, Condition, Matcher, ResultSet, RunConfig, SuiteOptions, SuiteOutput, Trajectory,
    TrajectoryStore,
};

const RESULTS_FILE: &str = "results.csv";
const RUN_FILE: &str = "run.json";
const STORE_DIR: &str = "trajectories";

#[derive(Parser)]
#[command(name = "toolgap", version, about = "Diagnose the accuracy cost of tool use in LLM agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate distractor variants for every Base sample.
    Augment(AugmentArgs),
    /// Run intervention conditions over a corpus.
    Run(RunArgs),
    /// Build the full report bundle from a run directory.
    Diagnose(DiagnoseArgs),
    /// Train the continue/commit gate.
    GateTrain(GateTrainArgs),
    /// Run the gated agent next to Agent-Full and CoT.
    GateRun(GateRunArgs),
    /// Render tables from stored results or the bundled accuracy fixture.
    Report(ReportArgs),
    /// Split a corpus by question id into train and test files.
    Split(SplitArgs),
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// Line-delimited corpus; defaults to the bundled toy corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Task of the corpus (gsm8k | hotpotqa).
    #[arg(long, default_value = "gsm8k")]
    task: Task,
}

impl CorpusArgs {
    fn load(&self) -> Result<Corpus> {
        match &self.corpus {
            Some(p) => corpus::load_corpus(self.task, p).with_context(|| format!("loading {}", p.display())),
            None => Ok(corpus::toy_corpus()),
        }
    }
}

#[derive(Args, Clone)]
struct BackendArgs {
    /// `scripted:<name>` (demo, filler, or a playbook JSON path) or `http`.
    #[arg(long, default_value = "scripted:demo")]
    backend: String,
    /// Chat-completions endpoint for the http backend.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent to the endpoint.
    #[arg(long)]
    model: Option<String>,
}

impl BackendArgs {
    fn build(&self) -> Result<Box<dyn Backend>> {
        if self.backend == "http" {
            let endpoint = self.endpoint.as_deref().ok_or_else(|| anyhow!("--endpoint is required with --backend http"))?;
            let model = self.model.as_deref().ok_or_else(|| anyhow!("--model is required with --backend http"))?;
            return Ok(Box::new(HttpBackend::from_env(endpoint, model)?));
        }
        let name = self
            .backend
            .strip_prefix("scripted:")
            .ok_or_else(|| anyhow!("unknown backend '{}'", self.backend))?;
        if name == "filler" {
            return Ok(Box::new(FillerGenerator));
        }
        let playbook = match Playbook::named(name) {
            Some(p) => p,
            None => {
                let text = fs::read_to_string(name).with_context(|| format!("no bundled playbook or file '{name}'"))?;
                Playbook::from_json(&text)?
            }
        };
        Ok(Box::new(PlaybookBackend::new(playbook)))
    }
}

#[derive(Args, Clone)]
struct ExecArgs {
    /// Answer matcher (exact | contains).
    #[arg(long, default_value = "exact")]
    matcher: Matcher,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 8)]
    max_turns: usize,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    jobs: Option<usize>,
}

impl ExecArgs {
    fn run_config(&self, force_first_tool: bool) -> RunConfig {
        RunConfig {
            max_turns: self.max_turns,
            matcher: self.matcher,
            seed: Some(self.seed),
            temperature: self.temperature,
            force_first_tool,
        }
    }

    fn options(&self, store: Option<PathBuf>) -> SuiteOptions {
        let mut o = SuiteOptions {
            store,
            ..Default::default()
        };
        if let Some(j) = self.jobs {
            o.jobs = j;
        }
        o
    }
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    backend: BackendArgs,
    /// Output corpus path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "tb,sp,ped,hu")]
    variants: Vec<Variant>,
    #[arg(long, default_value_t = 2)]
    before: usize,
    #[arg(long, default_value_t = 2)]
    after: usize,
    /// Regeneration attempts after a failed validation.
    #[arg(long, default_value_t = 2)]
    retries: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    exec: ExecArgs,
    /// Output directory (trajectories, results.csv, run.json).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "cot,fcstyle,noop,full,max1,oraclecalc,oracleevid")]
    conditions: Vec<Condition>,
    /// Force a tool call on the first agent turn (gate data collection).
    #[arg(long)]
    require_first_tool: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Run directory written by `run` or `gate-run`.
    #[arg(long)]
    results: PathBuf,
    /// Report directory; defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GateTrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    exec: ExecArgs,
    /// Run directory holding `cot` and `full` results of the training
    /// split. Without it, CoT and Agent-Full are collected here.
    #[arg(long)]
    train_results: Option<PathBuf>,
    /// Model path; the CV report goes next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    /// Weight multiplier for under-compute rows.
    #[arg(long, default_value_t = 1.0)]
    boost: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
}

#[derive(Args)]
struct GateRunArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    exec: ExecArgs,
    /// Trained gate model.
    #[arg(long)]
    gate: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Continue threshold; defaults to the model's.
    #[arg(long)]
    tau: Option<f64>,
    /// Also run the critic-prompt arm.
    #[arg(long)]
    critic: bool,
    #[arg(long, default_value_t = 3)]
    max_extra_turns: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Render the bundled accuracy fixture.
    #[arg(long, conflicts_with = "results")]
    fixture: bool,
    /// Fixture JSON replacing the bundled one.
    #[arg(long, requires = "fixture")]
    fixture_file: Option<PathBuf>,
    /// Run directory to render.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Also write report files here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    train: usize,
    #[arg(long)]
    test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving train.jsonl and test.jsonl.
    #[arg(long)]
    out: PathBuf,
}

/// Everything needed to re-run a directory's results.
#[derive(Debug, Serialize, Deserialize)]
struct RunRecord {
    task: Task,
    backend: String,
    config: RunConfig,
    labels: Vec<String>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn metadata(task: Task, backend: &str, config: &RunConfig) -> RunMetadata {
    RunMetadata {
        task: Some(task.to_string()),
        model: Some(backend.to_string()),
        matcher: Some(config.matcher.to_string()),
        seed: config.seed,
        temperature: Some(config.temperature),
        max_turns: Some(config.max_turns),
        template_hashes: prompts::template_hashes(),
    }
}

fn save_run(dir: &Path, corpus: &Corpus, backend: &str, config: &RunConfig, out: &SuiteOutput) -> Result<()> {
    write(&dir.join(RESULTS_FILE), &results_csv(&out.results))?;
    let record = RunRecord {
        task: corpus.task,
        backend: backend.to_string(),
        config: config.clone(),
        labels: out.results.labels(),
    };
    write(&dir.join(RUN_FILE), &(serde_json::to_string_pretty(&record)? + "\n"))
}

fn load_results(dir: &Path) -> Result<ResultSet> {
    let path = dir.join(RESULTS_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    ResultSet::from_csv(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn load_record(dir: &Path) -> Result<Option<RunRecord>> {
    let path = dir.join(RUN_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
}

/// Stored trajectories of the given labels, in corpus order per label.
fn load_trajectories(dir: &Path, corpus: &Corpus, labels: &[String]) -> Result<Vec<Trajectory>> {
    let store = TrajectoryStore::open(&dir.join(STORE_DIR))?;
    let position: HashMap<(&str, Variant), usize> = corpus
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| ((s.question_id.as_str(), s.variant), i))
        .collect();
    let mut out = Vec::new();
    for label in labels {
        let mut ts: Vec<Trajectory> = store.load(label)?.into_values().collect();
        ts.retain(|t| position.contains_key(&(t.question_id.as_str(), t.variant)));
        ts.sort_by_key(|t| position[&(t.question_id.as_str(), t.variant)]);
        out.extend(ts);
    }
    Ok(out)
}

fn write_bundle(dir: &Path, bundle: &ReportBundle) -> Result<()> {
    write(&dir.join("report.json"), &bundle.to_json())?;
    write(&dir.join("report.txt"), &bundle.render_text())?;
    for (name, csv) in bundle.csv_tables() {
        write(&dir.join("tables").join(format!("{name}.csv")), &csv)?;
    }
    Ok(())
}

fn cmd_augment(a: AugmentArgs) -> Result<()> {
    let corpus = a.corpus.load()?;
    let backend = a.backend.build()?;
    let cfg = AugmentConfig {
        variants: a.variants,
        before_n: a.before,
        after_n: a.after,
        max_retries: a.retries,
        temperature: a.temperature,
        seed: Some(a.seed),
        jobs: a.jobs,
    };
    let out = augment_corpus(&corpus, backend.as_ref(), &cfg);
    corpus::write_corpus(&out.corpus, &a.out)?;
    let mut skipped = String::new();
    for s in &out.skipped {
        log::warn!("skipped {}/{} after {} attempts: {}", s.question_id, s.variant, s.attempts, s.last_error);
        skipped.push_str(&serde_json::to_string(s)?);
        skipped.push('\n');
    }
    write(&a.out.with_extension("skipped.jsonl"), &skipped)?;
    eprintln!("wrote {} samples ({} skipped)", out.corpus.samples.len(), out.skipped.len());
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let corpus = a.corpus.load()?;
    let backend = a.backend.build()?;
    let config = a.exec.run_config(a.require_first_tool);
    let out = run_suite(
        &corpus,
        &a.conditions,
        backend.as_ref(),
        &config,
        &a.exec.options(Some(a.out.join(STORE_DIR))),
    )?;
    save_run(&a.out, &corpus, &backend.describe(), &config, &out)?;
    eprintln!("{} trajectories ({} executed)", out.trajectories.len(), out.executed);
    Ok(())
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<()> {
    let corpus = a.corpus.load()?;
    let results = load_results(&a.results)?;
    let record = load_record(&a.results)?;
    let meta = match &record {
        Some(r) => metadata(r.task, &r.backend, &r.config),
        None => RunMetadata::default(),
    };
    let trajectories = load_trajectories(&a.results, &corpus, &results.labels())?;
    let bundle = build_report(&results, Some((&corpus, &trajectories)), meta)?;
    write_bundle(a.out.as_deref().unwrap_or(&a.results), &bundle)?;
    print!("{}", bundle.render_text());
    Ok(())
}

fn cmd_gate_train(a: GateTrainArgs) -> Result<()> {
    let corpus = a.corpus.load()?;
    let (results, trajectories, max_turns) = match &a.train_results {
        Some(dir) => {
            let results = load_results(dir)?;
            let max_turns = load_record(dir)?.map_or(a.exec.max_turns, |r| r.config.max_turns);
            let ts = load_trajectories(dir, &corpus, &[Condition::Full.id().to_string()])?;
            (results, ts, max_turns)
        }
        None => {
            let backend = a.backend.build()?;
            let opts = a.exec.options(None);
            let mut out = run_suite(&corpus, &[Condition::Cot], backend.as_ref(), &a.exec.run_config(false), &opts)?;
            let full = run_suite(&corpus, &[Condition::Full], backend.as_ref(), &a.exec.run_config(true), &opts)?;
            out.results.extend(full.results);
            (out.results, full.trajectories, a.exec.max_turns)
        }
    };
    let set = gate::build_training_set(&corpus, &trajectories, &results, max_turns, a.boost)?;
    if set.features.is_empty() {
        bail!("no Agent-Full trajectories to train on");
    }
    let cfg = TrainConfig {
        seed: a.exec.seed,
        max_epochs: a.epochs,
        ..Default::default()
    };
    let (model, cv) = gate::train_gate(&set.features, &set.labels, &set.groups, &cfg, a.folds, a.tau)?;
    write(&a.out, &model.to_json())?;
    write(&a.out.with_extension("cv.json"), &(serde_json::to_string_pretty(&cv)? + "\n"))?;
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    eprintln!(
        "trained on {} rows ({} continue); CV accuracy {} AUC {}",
        model.metadata.train_rows,
        model.metadata.continue_rows,
        fmt(cv.mean_accuracy),
        fmt(cv.mean_auc)
    );
    Ok(())
}

fn cmd_gate_run(a: GateRunArgs) -> Result<()> {
    let corpus = a.corpus.load()?;
    let backend = a.backend.build()?;
    let text = fs::read_to_string(&a.gate).with_context(|| format!("reading {}", a.gate.display()))?;
    let model = GateModel::from_json(&text)?;
    let config = a.exec.run_config(false);
    let opts = a.exec.options(Some(a.out.join(STORE_DIR)));
    let mut out = run_suite(&corpus, &[Condition::Cot, Condition::Full], backend.as_ref(), &config, &opts)?;
    let mut arms = vec![false];
    if a.critic {
        arms.push(true);
    }
    for critic in arms {
        let gate_cfg = GateConfig {
            tau: a.tau.unwrap_or(model.tau),
            max_extra_turns: a.max_extra_turns,
            critic,
        };
        let g = gate::run_gated(&corpus, backend.as_ref(), &model, &gate_cfg, &config, &opts)?;
        out.results.extend(g.results);
        out.trajectories.extend(g.trajectories);
        out.executed += g.executed;
    }
    let name = backend.describe();
    save_run(&a.out, &corpus, &name, &config, &out)?;
    let bundle = build_report(&out.results, Some((&corpus, &out.trajectories)), metadata(corpus.task, &name, &config))?;
    write_bundle(&a.out, &bundle)?;
    let comparison = serde_json::to_string_pretty(&bundle.gate)? + "\n";
    write(&a.out.join("comparison.json"), &comparison)?;
    print!("{}", bundle.render_text());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let (text, json, tables): (String, String, BTreeMap<String, String>) = if a.fixture {
        let set = match &a.fixture_file {
            Some(p) => FixtureSet::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
            None => FixtureSet::bundled(),
        };
        let r = fixture_report(&set)?;
        (r.render_text(), serde_json::to_string_pretty(&r)? + "\n", r.csv_tables())
    } else if let Some(dir) = &a.results {
        let results = load_results(dir)?;
        let meta = match load_record(dir)? {
            Some(r) => metadata(r.task, &r.backend, &r.config),
            None => RunMetadata::default(),
        };
        let b = build_report(&results, None, meta)?;
        (b.render_text(), b.to_json(), b.csv_tables())
    } else {
        bail!("report needs --fixture or --results <dir>");
    };
    if let Some(dir) = &a.out {
        write(&dir.join("report.txt"), &text)?;
        write(&dir.join("report.json"), &json)?;
        for (name, csv) in tables {
            write(&dir.join("tables").join(format!("{name}.csv")), &csv)?;
        }
    }
    print!("{text}");
    Ok(())
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let corpus = a.corpus.load()?;
    let (train, test) = corpus::split_corpus(&corpus, a.train, a.test, a.seed)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    corpus::write_corpus(&train, &a.out.join("train.jsonl"))?;
    corpus::write_corpus(&test, &a.out.join("test.jsonl"))?;
    eprintln!("train {} samples, test {} samples", train.samples.len(), test.samples.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Augment(a) => cmd_augment(a),
        Command::Run(a) => cmd_run(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::GateTrain(a) => cmd_gate_train(a),
        Command::GateRun(a) => cmd_gate_run(a),
        Command::Report(a) => cmd_report(a),
        Command::Split(a) => cmd_split(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
