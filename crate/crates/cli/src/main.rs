mod eval;
mod io;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use portfolio_core::cost::{calibrate_timeout, static_solver_ranking, CostConfig, ResultsTable};
use portfolio_core::features::{FEATURE_COUNT, FEATURE_NAMES};
use portfolio_core::forest::{train_forest, ForestModel, Hyperparameters, TrainingSet};
use portfolio_core::scheduler::{
    prove, prove_with_threshold, ProcessBackend, ProofTask, ProveResult, ReplayBackend, SchedulerConfig,
    SolverBackend,
};
use portfolio_core::solver::{SolverId, SolverRanking};
use rayon::prelude::*;

use crate::io::{emit, num, secs, text, Table};

#[derive(Parser, Debug)]
#[command(name = "portfolio", version, about = "Learned solver portfolio: features, training, ranking and proving")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for per-task work.
    #[arg(long, global = true, value_parser = positive_count)]
    jobs: Option<usize>,
    /// Output format for tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Feature vector of every goal in the given documents.
    Extract {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a forest on extracted features and recorded solver results.
    Train(TrainArgs),
    /// Predicted solver ranking for every goal; no solver is run.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scheduling algorithm on every goal.
    Prove(ProveArgs),
    /// Strategy, level, curve and threshold reports over recorded results.
    Eval(eval::EvalArgs),
    /// Per-solver time limits that keep a given share of useful answers.
    Calibrate {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value_t = 0.99, value_parser = coverage)]
        coverage: f64,
        /// Limit the results were recorded under.
        #[arg(long, default_value_t = 60.0, value_parser = positive_secs)]
        timeout: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    results: PathBuf,
    /// Per-solver limit used by the cost function.
    #[arg(long, default_value_t = 10.0, value_parser = positive_secs)]
    timeout: f64,
    #[arg(long, default_value_t = 100, value_parser = positive_count)]
    trees: usize,
    #[arg(long, value_parser = positive_count)]
    max_depth: Option<usize>,
    #[arg(long, default_value_t = 1, value_parser = positive_count)]
    min_samples_leaf: usize,
    #[arg(long, value_parser = positive_count)]
    max_features: Option<usize>,
    /// Fit each tree on the full set instead of a bootstrap sample.
    #[arg(long)]
    no_bootstrap: bool,
    /// Give every task weight 1 instead of its cost spread.
    #[arg(long)]
    unweighted: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProveArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// `process`, or `replay:<results.csv>`.
    #[arg(long, default_value = "process")]
    backend: String,
    /// Solver configuration for the process backend.
    #[arg(long, env = "PORTFOLIO_CONFIG", default_value = "portfolio.ini")]
    config: PathBuf,
    #[arg(long, default_value_t = 10.0, value_parser = positive_secs)]
    timeout: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive_secs)]
    pre_solve_timeout: f64,
    /// Only call solvers whose predicted cost is at most this.
    #[arg(long, value_parser = finite)]
    threshold: Option<f64>,
    #[arg(long)]
    skip_presolver_in_ranking: bool,
    /// Comma-separated solver labels, best first; unlisted solvers follow in
    /// roster order. Replay defaults to ordering by goals proved.
    #[arg(long, value_delimiter = ',')]
    static_ranking: Option<Vec<String>>,
    /// Limit the replayed results were recorded under; defaults to --timeout.
    #[arg(long, value_parser = positive_secs)]
    recording_timeout: Option<f64>,
    /// Add the wall-clock prediction overhead as a column.
    #[arg(long)]
    overhead: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Marks an error as caused by the command line rather than by input data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn positive_count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("`{s}` is not a positive integer")),
    }
}

fn positive_secs(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
        _ => Err(format!("`{s}` is not a positive number of seconds")),
    }
}

fn finite(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("`{s}` is not a finite number"))
}

fn coverage(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x <= 1.0 => Ok(x),
        _ => Err(format!("`{s}` is not in (0, 1]")),
    }
}

pub fn read_results(path: &Path) -> Result<ResultsTable> {
    ResultsTable::from_path(path).with_context(|| format!("results {}", path.display()))
}

pub fn read_model(path: &Path) -> Result<ForestModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    let model = ForestModel::from_json(&text).with_context(|| format!("model {}", path.display()))?;
    if model.feature_names.len() != FEATURE_COUNT || model.feature_names.iter().zip(FEATURE_NAMES).any(|(a, b)| a != b) {
        bail!("model {}: feature names do not match the extractor's", path.display());
    }
    Ok(model)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UsageError>()) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker threads")?;
    let (seed, format) = (cli.seed, cli.format);
    pool.install(|| match cli.command {
        Command::Extract { paths, out } => {
            let docs = io::read_documents(&paths)?;
            let rows = io::document_features(&docs)?;
            emit(out.as_deref(), &io::features_table(&rows).render(format)?)
        }
        Command::Train(a) => train(a, seed),
        Command::Predict { model, paths, out } => predict(&model, &paths, out.as_deref(), format),
        Command::Prove(a) => prove_cmd(a, format),
        Command::Eval(a) => eval::run(a, seed, format),
        Command::Calibrate {
            results,
            coverage,
            timeout,
            out,
        } => calibrate(&results, coverage, timeout, out.as_deref(), format),
    })
}

fn train(a: TrainArgs, seed: u64) -> Result<()> {
    let features = io::read_features_csv(&a.features)?;
    let table = read_results(&a.results)?;
    table
        .check_timeouts(a.timeout)
        .with_context(|| format!("results {} under --timeout {}", a.results.display(), a.timeout))?;
    let cfg = CostConfig::new(a.timeout).map_err(|e| usage(format!("--timeout: {e}")))?;
    let ts = TrainingSet::from_results(&features, &table, cfg, !a.unweighted)
        .with_context(|| format!("joining {} with {}", a.features.display(), a.results.display()))?;
    let hp = Hyperparameters {
        trees: a.trees,
        max_depth: a.max_depth,
        min_samples_leaf: a.min_samples_leaf,
        max_features: a.max_features,
        bootstrap: !a.no_bootstrap,
    };
    let model = train_forest(&ts, &hp, seed).context("training")?;
    let mut json = model.to_json();
    json.push('\n');
    emit(a.out.as_deref(), json.as_bytes())
}

fn predict(model: &Path, paths: &[PathBuf], out: Option<&Path>, format: Format) -> Result<()> {
    let model = read_model(model)?;
    let docs = io::read_documents(paths)?;
    let rows = io::document_features(&docs)?;
    let ranked: Vec<(String, String)> = rows
        .par_iter()
        .map(|(id, fv)| {
            let r = model.predict_ranking(&fv.to_array());
            (id.to_string(), r.labels(&model.roster).join(" "))
        })
        .collect();
    let mut t = Table::new(["task_id", "ranking"]);
    for (id, r) in ranked {
        t.push(vec![text(id), text(r)]);
    }
    emit(out, &t.render(format)?)
}

/// Orders `roster` by the given labels first, then the rest in roster order.
fn ranking_from_labels(labels: &[String], roster: &[SolverId]) -> Result<SolverRanking> {
    let mut order = Vec::with_capacity(roster.len());
    for l in labels {
        let id = SolverId::from_label(l.trim());
        let Some(i) = roster.iter().position(|s| *s == id) else {
            return Err(usage(format!("--static-ranking: `{l}` is not in the model roster")));
        };
        if order.contains(&i) {
            return Err(usage(format!("--static-ranking: `{l}` is listed twice")));
        }
        order.push(i);
    }
    Ok(complete(order, roster.len()))
}

/// Static ranking of `table` re-expressed over `roster`.
pub fn static_ranking_for(table: &ResultsTable, roster: &[SolverId]) -> SolverRanking {
    let labels: Vec<String> = static_solver_ranking(table).labels(table.roster());
    let order: Vec<usize> = labels
        .iter()
        .filter_map(|l| roster.iter().position(|s| s.label() == *l))
        .collect();
    complete(order, roster.len())
}

/// Appends the roster positions missing from `order`, ascending.
fn complete(mut order: Vec<usize>, n: usize) -> SolverRanking {
    let rest: Vec<usize> = (0..n).filter(|i| !order.contains(i)).collect();
    order.extend(rest);
    SolverRanking(order)
}

enum Backend {
    Replay(ReplayBackend),
    Process(ProcessBackend),
}

impl Backend {
    fn as_dyn(&self) -> &dyn SolverBackend {
        match self {
            Backend::Replay(b) => b,
            Backend::Process(b) => b,
        }
    }
}

fn prove_cmd(a: ProveArgs, format: Format) -> Result<()> {
    let model = read_model(&a.model)?;
    let backend = if let Some(path) = a.backend.strip_prefix("replay:") {
        if path.is_empty() {
            return Err(usage("--backend: replay needs a results file, as in replay:results.csv"));
        }
        let table = read_results(Path::new(path))?;
        Backend::Replay(ReplayBackend::new(table, a.recording_timeout.unwrap_or(a.timeout)))
    } else if a.backend == "process" {
        let b = ProcessBackend::from_path(&a.config).with_context(|| format!("config {}", a.config.display()))?;
        Backend::Process(b)
    } else {
        return Err(usage(format!("--backend: expected `process` or `replay:<file>`, got `{}`", a.backend)));
    };
    let static_ranking = match (&a.static_ranking, &backend) {
        (Some(labels), _) => ranking_from_labels(labels, &model.roster)?,
        (None, Backend::Replay(r)) => static_ranking_for(&r.table, &model.roster),
        (None, Backend::Process(_)) => return Err(usage("--static-ranking is required with the process backend")),
    };
    let mut cfg = SchedulerConfig::new(static_ranking);
    cfg.timeout = a.timeout;
    cfg.pre_solve_timeout = a.pre_solve_timeout;
    cfg.cost_threshold = a.threshold;
    cfg.skip_presolver_in_ranking = a.skip_presolver_in_ranking;

    let docs = io::read_documents(&a.paths)?;
    let mut tasks: Vec<ProofTask> = docs.iter().flat_map(ProofTask::from_document).collect();
    tasks.sort_by(|x, y| x.id.cmp(&y.id));
    if let Some(w) = tasks.windows(2).find(|w| w[0].id == w[1].id) {
        bail!("task id {} occurs twice; document file names must be unique", w[0].id);
    }
    let b = backend.as_dyn();
    let results: Vec<ProveResult> = tasks
        .par_iter()
        .map(|t| {
            if cfg.cost_threshold.is_some() {
                prove_with_threshold(t, &cfg, &model, b)
            } else {
                prove(t, &cfg, &model, b)
            }
            .with_context(|| format!("proving {}", t.id))
        })
        .collect::<Result<_>>()?;

    let mut headers = vec!["task_id", "answer", "time_s"];
    if a.overhead {
        headers.push("overhead_s");
    }
    headers.push("calls");
    let mut t = Table::new(headers);
    for (task, r) in tasks.iter().zip(&results) {
        let calls: Vec<String> = r
            .trace
            .iter()
            .map(|c| {
                format!(
                    "{}:{}:{}:{}",
                    model.roster[c.solver].label(),
                    c.timeout,
                    c.outcome.answer,
                    portfolio_core::cost::format_seconds(c.outcome.cpu_time)
                )
            })
            .collect();
        let mut row = vec![text(task.id.to_string()), text(r.answer.as_str()), secs(r.time)];
        if a.overhead {
            row.push(num(r.overhead));
        }
        row.push(text(calls.join(" ")));
        t.push(row);
    }
    emit(a.out.as_deref(), &t.render(format)?)
}

fn calibrate(results: &Path, coverage: f64, timeout: f64, out: Option<&Path>, format: Format) -> Result<()> {
    let table = read_results(results)?;
    table
        .check_timeouts(timeout)
        .with_context(|| format!("results {} under --timeout {timeout}", results.display()))?;
    let limits = calibrate_timeout(&table, coverage).with_context(|| format!("results {}", results.display()))?;
    let mut t = Table::new(["solver", "limit_s", "useful_answers"]);
    for (s, (id, limit)) in table.roster().iter().zip(limits).enumerate() {
        let useful = (0..table.tasks().len())
            .filter(|&i| table.row(i)[s].answer.utility() >= 1)
            .count();
        t.push(vec![text(id.label()), num(limit), useful.into()]);
    }
    emit(out, &t.render(format)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster() -> Vec<SolverId> {
        ["A-1", "B-2", "C", "D-0.9"].iter().map(|l| SolverId::from_label(l)).collect()
    }

    #[test]
    fn listed_solvers_lead_the_static_ranking() {
        let r = ranking_from_labels(&["D-0.9".into(), "B-2".into()], &roster()).unwrap();
        assert_eq!(r.0, [3, 1, 0, 2]);
        let err = ranking_from_labels(&["E".into()], &roster()).unwrap_err();
        assert!(err.is::<UsageError>());
    }

    #[test]
    fn static_ranking_maps_between_rosters() {
        use portfolio_core::cost::{Answer, SolverOutcome};
        use portfolio_core::features::TaskId;
        let table_roster = vec![SolverId::from_label("C"), SolverId::from_label("A-1")];
        let tasks = vec![TaskId::new("f", "T", "g")];
        let rows = vec![vec![SolverOutcome::new(Answer::Valid, 1.0), SolverOutcome::new(Answer::Unknown, 1.0)]];
        let table = ResultsTable::new(table_roster, tasks, rows).unwrap();
        // C proved more, then A-1; solvers absent from the table trail.
        assert_eq!(static_ranking_for(&table, &roster()).0, [2, 0, 1, 3]);
    }
}
