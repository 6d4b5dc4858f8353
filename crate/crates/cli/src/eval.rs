use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use log::warn;
use portfolio_core::cost::{
    aggregate_report, choose_single_report, static_solver_ranking, CostConfig, LevelReport, LevelStats,
    ResultsTable, SolverOutcome,
};
use portfolio_core::eval::{
    cumulative_curve, evaluate_random, evaluate_rankings, replay_strategy, strategy_ranking, RelevanceMap,
    Strategy, StrategyOutcome, StrategyRow,
};
use portfolio_core::features::{FeatureVector, TaskId};
use portfolio_core::forest::{kfold_splits, train_forest, ForestModel, Hyperparameters, TrainingSet};
use portfolio_core::scheduler::{prove, prove_with_threshold, ProofTask, ProveResult, ReplayBackend, SchedulerConfig};
use portfolio_core::solver::SolverRanking;
use rayon::prelude::*;

use crate::io::{num, opt_num, secs, text, write_atomic, Table};
use crate::{read_model, read_results, usage, Format};

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    results: PathBuf,
    /// Per-solver limit used by the cost function and the scheduler.
    #[arg(long, default_value_t = 10.0, value_parser = crate::positive_secs)]
    timeout: f64,
    #[arg(long, default_value_t = 1.0, value_parser = crate::positive_secs)]
    pre_solve_timeout: f64,
    /// Trained model; with --folds only its hyperparameters are reused.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Features CSV from `extract`.
    #[arg(long, conflicts_with = "paths")]
    features: Option<PathBuf>,
    /// Documents to extract features from instead of --features.
    paths: Vec<PathBuf>,
    /// Score the learned strategy by k-fold cross-validation over files.
    #[arg(long, value_parser = at_least_two)]
    folds: Option<usize>,
    /// Give every training task weight 1 instead of its cost spread.
    #[arg(long)]
    unweighted: bool,
    #[arg(long, value_enum, default_value_t = Relevance::Linear)]
    relevance: Relevance,
    /// Comma-separated cost thresholds for the sweep; defaults to quarter
    /// multiples of --timeout up to three times it.
    #[arg(long, value_delimiter = ',', value_parser = crate::finite)]
    thresholds: Option<Vec<f64>>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Relevance {
    Linear,
    Reciprocal,
}

impl From<Relevance> for RelevanceMap {
    fn from(r: Relevance) -> Self {
        match r {
            Relevance::Linear => RelevanceMap::LinearDescending,
            Relevance::Reciprocal => RelevanceMap::Reciprocal,
        }
    }
}

fn at_least_two(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 2 => Ok(n),
        _ => Err(format!("`{s}` is not an integer of at least 2")),
    }
}

/// Per-task predictions of the learned strategy, aligned with the table.
struct Learned {
    models: Vec<ForestModel>,
    model_of: Vec<usize>,
    features: Vec<Vec<f64>>,
    costs: Vec<Vec<f64>>,
}

impl Learned {
    fn rankings(&self) -> Vec<SolverRanking> {
        self.costs.iter().map(|c| SolverRanking::by_ascending(c)).collect()
    }
}

fn load_features(a: &EvalArgs) -> Result<Option<Vec<(TaskId, FeatureVector)>>> {
    if let Some(p) = &a.features {
        return crate::io::read_features_csv(p).map(Some);
    }
    if a.paths.is_empty() {
        return Ok(None);
    }
    let docs = crate::io::read_documents(&a.paths)?;
    crate::io::document_features(&docs).map(Some)
}

fn learn(a: &EvalArgs, table: &ResultsTable, cfg: CostConfig, seed: u64) -> Result<Option<Learned>> {
    let model = a.model.as_deref().map(read_model).transpose()?;
    let features = load_features(a)?;
    let Some(features) = features else {
        if a.folds.is_some() {
            return Err(usage("--folds needs --features or document paths"));
        }
        warn!("no features given; learned and portfolio rows are skipped");
        return Ok(None);
    };
    let source = a
        .features
        .as_ref()
        .map_or_else(|| "the documents".to_string(), |p| p.display().to_string());
    let ts = TrainingSet::from_results(&features, table, cfg, !a.unweighted)
        .with_context(|| format!("joining {source} with {}", a.results.display()))?;
    let n = table.tasks().len();
    let task_of: Vec<usize> = ts
        .rows
        .iter()
        .map(|r| table.task_index(&r.task_id).expect("task sets were checked"))
        .collect();
    let mut by_task = vec![Vec::new(); n];
    for (row, &i) in ts.rows.iter().zip(&task_of) {
        by_task[i] = row.features.clone();
    }

    let (models, model_of) = match (a.folds, model) {
        (Some(k), m) => {
            let hp = m.map_or_else(Hyperparameters::default, |m| m.hyperparameters);
            let folds = kfold_splits(&ts, k, seed).with_context(|| format!("--folds {k}"))?;
            let mut models = Vec::with_capacity(k);
            let mut model_of = vec![usize::MAX; n];
            for (f, fold) in folds.iter().enumerate() {
                let m = train_forest(&ts.subset(&fold.train), &hp, seed.wrapping_add(f as u64))
                    .with_context(|| format!("training fold {}", f + 1))?;
                for &r in &fold.validation {
                    model_of[task_of[r]] = f;
                }
                models.push(m);
            }
            (models, model_of)
        }
        (None, Some(m)) => {
            if m.roster != table.roster() {
                bail!(
                    "model {} was trained on a different solver roster than {}",
                    a.model.as_ref().expect("model present").display(),
                    a.results.display()
                );
            }
            (vec![m], vec![0; n])
        }
        (None, None) => {
            warn!("neither --model nor --folds given; learned and portfolio rows are skipped");
            return Ok(None);
        }
    };
    let costs = (0..n).map(|i| models[model_of[i]].predict(&by_task[i])).collect();
    Ok(Some(Learned {
        models,
        model_of,
        features: by_task,
        costs,
    }))
}

fn scheduler_config(a: &EvalArgs, table: &ResultsTable, threshold: Option<f64>) -> SchedulerConfig {
    let mut cfg = SchedulerConfig::new(static_solver_ranking(table));
    cfg.timeout = a.timeout;
    cfg.pre_solve_timeout = a.pre_solve_timeout;
    cfg.cost_threshold = threshold;
    cfg
}

fn run_portfolio(
    a: &EvalArgs,
    table: &ResultsTable,
    backend: &ReplayBackend,
    learned: &Learned,
    threshold: Option<f64>,
) -> Result<Vec<ProveResult>> {
    let cfg = scheduler_config(a, table, threshold);
    (0..table.tasks().len())
        .into_par_iter()
        .map(|i| {
            let task = ProofTask::from_features(table.tasks()[i].clone(), learned.features[i].clone());
            let model = &learned.models[learned.model_of[i]];
            match threshold {
                Some(_) => prove_with_threshold(&task, &cfg, model, backend),
                None => prove(&task, &cfg, model, backend),
            }
            .with_context(|| format!("proving {}", task.id))
        })
        .collect()
}

fn strategy_table(rows: &[StrategyRow]) -> Table {
    let mut t = Table::new(["strategy", "mean_time_s", "ndcg", "r2", "mae", "reg_error", "mean_time_conclusive_s"]);
    for r in rows {
        t.push(vec![
            text(r.strategy.clone()),
            secs(r.mean_time),
            num(r.ndcg),
            opt_num(r.r2),
            num(r.mae),
            num(r.reg_error),
            r.mean_time_conclusive.map_or(serde_json::Value::Null, secs),
        ]);
    }
    t
}

fn level_table(rows: &[(String, LevelReport)]) -> Table {
    let mut headers = vec!["strategy".to_string()];
    for level in ["file", "theory", "goal"] {
        for col in ["proved", "total", "percent", "avg_time_s"] {
            headers.push(format!("{level}_{col}"));
        }
    }
    let mut t = Table::new(headers);
    for (name, r) in rows {
        let mut row = vec![text(name.clone())];
        for s in [r.file, r.theory, r.goal] {
            let LevelStats { proved, total, avg_time } = s;
            row.extend([proved.into(), total.into(), num(s.percent()), avg_time.map_or(serde_json::Value::Null, secs)]);
        }
        t.push(row);
    }
    t
}

fn curve_table(outcomes: &[StrategyOutcome]) -> Table {
    let mut t = Table::new(["time_s", "cumulative_conclusive"]);
    for (time, count) in cumulative_curve(outcomes) {
        t.push(vec![secs(time), count.into()]);
    }
    t
}

fn sweep_table(rows: &[(f64, Vec<ProveResult>)]) -> Table {
    let mut t = Table::new(["threshold", "goals_proved", "goals_total", "mean_time_s", "mean_calls"]);
    for (threshold, results) in rows {
        let n = results.len().max(1) as f64;
        let proved = results.iter().filter(|r| r.answer.is_conclusive()).count();
        t.push(vec![
            num(*threshold),
            proved.into(),
            results.len().into(),
            secs(results.iter().map(|r| r.time).sum::<f64>() / n),
            num(results.iter().map(|r| r.trace.len()).sum::<usize>() as f64 / n),
        ]);
    }
    t
}

fn outcomes_of(results: &[ProveResult]) -> Vec<SolverOutcome> {
    results.iter().map(|r| SolverOutcome::new(r.answer, r.time)).collect()
}

pub fn run(a: EvalArgs, seed: u64, format: Format) -> Result<()> {
    let table = read_results(&a.results)?;
    table
        .check_timeouts(a.timeout)
        .with_context(|| format!("results {} under --timeout {}", a.results.display(), a.timeout))?;
    let cfg = CostConfig::new(a.timeout).map_err(|e| usage(format!("--timeout: {e}")))?;
    let map: RelevanceMap = a.relevance.into();
    let learned = learn(&a, &table, cfg, seed)?;
    let n = table.tasks().len();

    let rankings = |s: Strategy<'_>| -> Result<Vec<SolverRanking>> {
        (0..n)
            .map(|i| strategy_ranking(&s, i, &table, cfg, None).context("ranking"))
            .collect()
    };
    let mut named: Vec<(&str, Vec<SolverRanking>)> = vec![
        ("best", rankings(Strategy::Best)?),
        ("random", rankings(Strategy::Random { seed })?),
        ("worst", rankings(Strategy::Worst)?),
    ];
    if let Some(l) = &learned {
        named.push(("learned", l.rankings()));
    }

    let mut strategy_rows = Vec::new();
    for (name, r) in &named {
        strategy_rows.push(match *name {
            "random" => evaluate_random(&table, cfg, map, seed),
            "learned" => {
                let costs = &learned.as_ref().expect("learned present").costs;
                evaluate_rankings(name, r, Some(costs), &table, cfg, map)?
            }
            _ => evaluate_rankings(name, r, None, &table, cfg, map)?,
        });
    }

    let mut levels: Vec<(String, LevelReport)> = table
        .roster()
        .iter()
        .enumerate()
        .map(|(s, id)| {
            let column: Vec<SolverOutcome> = (0..n).map(|i| table.row(i)[s]).collect();
            (id.label(), aggregate_report(&table, &column))
        })
        .collect();
    levels.push(("choose_single".into(), choose_single_report(&table)));
    let mut curves = Vec::new();
    for (name, r) in &named {
        let outcomes = replay_strategy(r, &table);
        let as_outcomes: Vec<SolverOutcome> = outcomes.iter().map(|o| o.as_outcome()).collect();
        levels.push((name.to_string(), aggregate_report(&table, &as_outcomes)));
        curves.push((name.to_string(), curve_table(&outcomes)));
    }

    let mut sweep = Vec::new();
    if let Some(l) = &learned {
        let backend = ReplayBackend::new(table.clone(), a.timeout);
        let results = run_portfolio(&a, &table, &backend, l, None)?;
        levels.push(("portfolio".into(), aggregate_report(&table, &outcomes_of(&results))));
        let thresholds = a
            .thresholds
            .clone()
            .unwrap_or_else(|| (1..=12).map(|k| a.timeout * k as f64 / 4.0).collect());
        for th in thresholds {
            sweep.push((th, run_portfolio(&a, &table, &backend, l, Some(th))?));
        }
    }

    let ext = format.extension();
    let write = |name: String, t: Table| -> Result<()> { write_atomic(&a.out_dir.join(name), &t.render(format)?) };
    write(format!("strategy_report.{ext}"), strategy_table(&strategy_rows))?;
    write(format!("level_report.{ext}"), level_table(&levels))?;
    for (name, t) in curves {
        write(format!("curve_{name}.{ext}"), t)?;
    }
    if learned.is_some() {
        write(format!("threshold_sweep.{ext}"), sweep_table(&sweep))?;
    }
    Ok(())
}
