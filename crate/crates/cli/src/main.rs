//! `evalboard`: submit, evaluate, score, perturb and serve.
//!
//! Exit status is 0 on success, 1 on a domain error and 2 on a usage error.

mod output;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};
use evalboard_core::dataset::{read_jsonl, write_jsonl, Example};
use evalboard_core::fixtures;
use evalboard_core::perturb::{FairnessLexicon, PerturbationKind, Perturber};
use evalboard_core::service::{self, ScoreRequest};
use evalboard_core::store::Store;
use evalboard_core::task::ModelEntry;
use evalboard_runner::{evaluate_and_commit, RunLimits};
use evalboard_server::{executable_reachable, ServerConfig, DATA_DIR_ENV, DEFAULT_PORT, DEFAULT_SEED};

#[derive(Parser)]
#[command(name = "evalboard", version, about = "Dynamic leaderboard and model evaluation")]
struct Cli {
    /// Store root.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "evalboard-data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

fn weights(s: &str) -> Result<BTreeMap<String, f64>, String> {
    service::parse_weight_list(s)
}

#[derive(Subcommand)]
enum Command {
    /// Install the bundled tasks and datasets.
    Init {
        /// Also load the published reference results.
        #[arg(long)]
        published: bool,
    },
    /// Register a model from its JSON manifest.
    Submit {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Evaluate a model on every dataset of a task and commit the results.
    Eval {
        #[arg(long)]
        task: String,
        /// Manifest path, or the id of a submitted model.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Print the leaderboard of a task.
    Board {
        #[arg(long)]
        task: String,
        /// Unnormalized metric weights, e.g. `perf=5,throughput=2`.
        #[arg(long, value_parser = weights)]
        weights: Option<BTreeMap<String, f64>>,
        #[arg(long, value_parser = weights)]
        dataset_weights: Option<BTreeMap<String, f64>>,
        /// Only use results measured at or before this RFC 3339 time.
        #[arg(long)]
        as_of: Option<DateTime<Utc>>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Write perturbed copies of a JSONL dataset.
    Perturb {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma separated: `fairness`, `robustness`, `fairness_gender`,
        /// `robustness:typos`, ...
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Lexicon JSON replacing the bundled one.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(String),
}

impl CliError {
    fn domain(e: impl ToString) -> Self {
        CliError::Domain(e.to_string())
    }
}

fn load_manifest(path: &Path) -> Result<ModelEntry, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    let model: ModelEntry =
        serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    model.validate().map_err(CliError::domain)?;
    Ok(model)
}

fn submit(store: &Store, model: &ModelEntry) -> Result<(), CliError> {
    if !executable_reachable(&model.exec_ref) {
        return Err(CliError::Domain(format!("executable `{}` is not reachable", model.exec_ref)));
    }
    store.put_model(model).map_err(CliError::domain)
}

fn eval(store: &Store, task_id: &str, model_arg: &str, seed: u64) -> Result<(), CliError> {
    let task = store.task(task_id).map_err(CliError::domain)?;
    let model = if Path::new(model_arg).is_file() {
        let m = load_manifest(Path::new(model_arg))?;
        if m.task_id != task.task_id {
            return Err(CliError::Domain(format!(
                "manifest is for task `{}`, not `{}`",
                m.task_id, task.task_id
            )));
        }
        submit(store, &m)?;
        m
    } else {
        store.model(model_arg).map_err(CliError::domain)?
    };
    let out = evaluate_and_commit(store, &model, &task, seed, Some(RunLimits::from(&task.limits)))
        .map_err(CliError::domain)?;
    for o in &out.outcomes {
        let f = &o.fairness_skips;
        let r = &o.robustness_skips;
        eprintln!(
            "{}: {} examples in {:.2} s; fairness perturbed {}/{}; robustness perturbed {}/{}",
            o.dataset_id,
            o.report.predictions.len(),
            o.report.wall_seconds,
            f.perturbed,
            f.total,
            r.perturbed,
            r.total
        );
    }
    let mut means: Vec<String> = Vec::new();
    for spec in &task.metrics {
        let vals: Vec<f64> = out
            .records
            .iter()
            .filter(|r| r.metric_id == spec.metric_id)
            .map(|r| r.value)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
        means.push(format!("{}={mean:.2}", spec.metric_id));
    }
    println!(
        "{} on {}: {} records committed; {}",
        model.model_id,
        task.task_id,
        out.records.len(),
        means.join(" ")
    );
    Ok(())
}

fn board(
    store: &Store,
    task_id: &str,
    req: ScoreRequest,
    format: Format,
) -> Result<(), CliError> {
    let task = store.task(task_id).map_err(CliError::domain)?;
    let resp = service::score(store, task_id, &req, Utc::now()).map_err(|e| match e.field() {
        Some(field) => CliError::Domain(format!("{field}: {e}")),
        None => CliError::domain(e),
    })?;
    for w in &resp.warnings {
        eprintln!("warning: {w}");
    }
    let order = task.metric_ids();
    let text = match format {
        Format::Table => output::table(&resp, &order),
        Format::Json => output::json(&resp) + "\n",
        Format::Csv => output::csv(&resp, &order).map_err(CliError::domain)?,
    };
    print!("{text}");
    if matches!(format, Format::Table) {
        eprintln!("{}", resp.disclaimer);
    }
    Ok(())
}

fn perturb(
    input: &Path,
    out: &Path,
    kind: &str,
    seed: u64,
    lexicon: Option<&Path>,
) -> Result<(), CliError> {
    let kinds = PerturbationKind::parse_list(&kind.replace('-', "_")).map_err(|e| CliError::Usage(e.to_string()))?;
    let lexicon = match lexicon {
        Some(p) => FairnessLexicon::load(p).map_err(CliError::domain)?,
        None => FairnessLexicon::bundled(),
    };
    let examples: Vec<Example> = read_jsonl(input).map_err(CliError::domain)?;
    let perturbed = Perturber::new(&lexicon)
        .perturb_dataset(&examples, &kinds, seed)
        .map_err(CliError::domain)?;
    let file = File::create(out).map_err(|e| CliError::Domain(format!("{}: {e}", out.display())))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&mut w, &perturbed.examples)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Domain(format!("{}: {e}", out.display())))?;
    let r = &perturbed.report;
    eprintln!(
        "total={} perturbed={} not_applicable={} entity_skipped={}",
        r.total, r.perturbed, r.not_applicable, r.entity_skipped
    );
    Ok(())
}

fn open(dir: &Path) -> Result<Store, CliError> {
    Store::open(dir).map_err(CliError::domain)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Init { published } => {
            let store = open(&cli.data_dir)?;
            if published {
                let n = fixtures::seed_store(&store).map_err(CliError::domain)?;
                println!("installed {} tasks and {n} reference records", fixtures::TASK_IDS.len());
            } else {
                fixtures::install_tasks(&store).map_err(CliError::domain)?;
                println!("installed {} tasks", fixtures::TASK_IDS.len());
            }
            Ok(())
        }
        Command::Submit { manifest } => {
            let store = open(&cli.data_dir)?;
            let model = load_manifest(&manifest)?;
            submit(&store, &model)?;
            println!("submitted {} for {}", model.model_id, model.task_id);
            Ok(())
        }
        Command::Eval { task, model, seed } => eval(&open(&cli.data_dir)?, &task, &model, seed),
        Command::Board {
            task,
            weights,
            dataset_weights,
            as_of,
            format,
        } => {
            let req = ScoreRequest {
                metric_weights: weights.unwrap_or_default(),
                dataset_weights: dataset_weights.unwrap_or_default(),
                as_of,
            };
            board(&open(&cli.data_dir)?, &task, req, format)
        }
        Command::Perturb {
            input,
            out,
            kind,
            seed,
            lexicon,
        } => perturb(&input, &out, &kind, seed, lexicon.as_deref()),
        Command::Serve { port, seed } => {
            let config = ServerConfig {
                seed,
                ..ServerConfig::default()
            };
            evalboard_server::run(port, &cli.data_dir, config).map_err(CliError::domain)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
