//! Solver answers, the timeout-penalised cost function, recorded results and
//! the file/theory/goal aggregation used in reports.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::TaskId;
use crate::solver::{SolverId, SolverRanking};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Valid,
    Invalid,
    Unknown,
    Timeout,
    Failure,
}

impl Answer {
    pub const ALL: [Answer; 5] = [
        Answer::Valid,
        Answer::Invalid,
        Answer::Unknown,
        Answer::Timeout,
        Answer::Failure,
    ];

    /// Utility class: {Valid, Invalid} > Unknown > {Timeout, Failure}.
    pub fn utility(self) -> u8 {
        match self {
            Answer::Valid | Answer::Invalid => 2,
            Answer::Unknown => 1,
            Answer::Timeout | Answer::Failure => 0,
        }
    }

    pub fn is_conclusive(self) -> bool {
        self.utility() == 2
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Valid => "valid",
            Answer::Invalid => "invalid",
            Answer::Unknown => "unknown",
            Answer::Timeout => "timeout",
            Answer::Failure => "failure",
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Answer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Answer::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown answer `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub answer: Answer,
    pub cpu_time: f64,
}

impl SolverOutcome {
    pub fn new(answer: Answer, cpu_time: f64) -> Self {
        SolverOutcome { answer, cpu_time }
    }
}

/// Slack allowed between a Timeout's recorded time and the limit it ran under.
pub const TIMEOUT_SLACK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostConfig {
    pub timeout: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig { timeout: 10.0 }
    }
}

impl CostConfig {
    pub fn new(timeout: f64) -> Result<Self, DataError> {
        if timeout.is_finite() && timeout > 0.0 {
            Ok(CostConfig { timeout })
        } else {
            Err(DataError::Invalid(format!("timeout must be positive, got {timeout}")))
        }
    }
}

pub fn cost(o: SolverOutcome, cfg: CostConfig) -> f64 {
    match o.answer {
        Answer::Valid | Answer::Invalid => o.cpu_time,
        Answer::Unknown => o.cpu_time + cfg.timeout,
        Answer::Timeout | Answer::Failure => o.cpu_time + cfg.timeout * 2.0,
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("results table is incomplete: {0}")]
    Incomplete(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("{0}")]
    Invalid(String),
}

/// Header of the recorded-results CSV.
pub const RESULTS_HEADER: [&str; 6] = ["file", "theory", "goal", "solver", "answer", "time_s"];

#[derive(Debug, Deserialize)]
struct ResultRow {
    file: String,
    theory: String,
    goal: String,
    solver: String,
    answer: String,
    time_s: String,
}

/// Recorded (answer, time) for every task and every solver of a roster.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    roster: Vec<SolverId>,
    tasks: Vec<TaskId>,
    index: HashMap<String, usize>,
    outcomes: Vec<Vec<SolverOutcome>>,
}

/// Formats seconds with at most six fractional digits and no trailing zeros.
pub fn format_seconds(t: f64) -> String {
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn parse_seconds(s: &str) -> Result<f64, String> {
    let ok_shape = match s.split_once('.') {
        Some((a, b)) => {
            !a.is_empty()
                && a.bytes().all(|c| c.is_ascii_digit())
                && !b.is_empty()
                && b.len() <= 6
                && b.bytes().all(|c| c.is_ascii_digit())
        }
        None => !s.is_empty() && s.bytes().all(|c| c.is_ascii_digit()),
    };
    if !ok_shape {
        return Err(format!("time_s `{s}` is not a non-negative decimal with at most 6 fractional digits"));
    }
    s.parse::<f64>().map_err(|e| e.to_string())
}

impl ResultsTable {
    /// Builds a table from per-task rows. `outcomes[i][j]` belongs to task `i`
    /// and roster solver `j`.
    pub fn new(
        roster: Vec<SolverId>,
        tasks: Vec<TaskId>,
        outcomes: Vec<Vec<SolverOutcome>>,
    ) -> Result<Self, DataError> {
        if roster.is_empty() {
            return Err(DataError::Invalid("empty solver roster".into()));
        }
        let unique: HashSet<&SolverId> = roster.iter().collect();
        if unique.len() != roster.len() {
            return Err(DataError::Invalid("duplicate solver in roster".into()));
        }
        if outcomes.len() != tasks.len() {
            return Err(DataError::Incomplete("task count mismatch".into()));
        }
        let mut index = HashMap::new();
        for (i, (t, row)) in tasks.iter().zip(&outcomes).enumerate() {
            if row.len() != roster.len() {
                return Err(DataError::Incomplete(format!("task `{t}` has {} of {} solvers", row.len(), roster.len())));
            }
            if let Some(o) = row.iter().find(|o| !(o.cpu_time.is_finite() && o.cpu_time >= 0.0)) {
                return Err(DataError::Invalid(format!("task `{t}` has invalid time {}", o.cpu_time)));
            }
            if index.insert(t.to_string(), i).is_some() {
                return Err(DataError::Invalid(format!("duplicate task `{t}`")));
            }
        }
        Ok(ResultsTable {
            roster,
            tasks,
            index,
            outcomes,
        })
    }

    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::None).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().ne(RESULTS_HEADER.iter().copied()) {
            return Err(DataError::Row {
                line: 1,
                message: format!("expected header `{}`", RESULTS_HEADER.join(",")),
            });
        }
        let mut roster: Vec<SolverId> = Vec::new();
        let mut solver_pos: HashMap<String, usize> = HashMap::new();
        let mut tasks: Vec<TaskId> = Vec::new();
        let mut task_pos: HashMap<String, usize> = HashMap::new();
        let mut cells: HashMap<(usize, usize), SolverOutcome> = HashMap::new();
        for rec in rdr.deserialize::<ResultRow>() {
            let row = rec?;
            let line = cells.len() as u64 + 2;
            let bad = |message: String| DataError::Row { line, message };
            let answer: Answer = row.answer.parse().map_err(bad)?;
            let time = parse_seconds(&row.time_s).map_err(bad)?;
            let sid = *solver_pos.entry(row.solver.clone()).or_insert_with(|| {
                roster.push(SolverId::from_label(&row.solver));
                roster.len() - 1
            });
            let task = TaskId::new(row.file, row.theory, row.goal);
            let key = task.to_string();
            let tid = *task_pos.entry(key.clone()).or_insert_with(|| {
                tasks.push(task);
                tasks.len() - 1
            });
            if cells.insert((tid, sid), SolverOutcome::new(answer, time)).is_some() {
                return Err(bad(format!("duplicate row for task `{key}` and solver `{}`", row.solver)));
            }
        }
        let mut outcomes = Vec::with_capacity(tasks.len());
        let mut missing = Vec::new();
        for (tid, task) in tasks.iter().enumerate() {
            let mut row = Vec::with_capacity(roster.len());
            for (sid, s) in roster.iter().enumerate() {
                match cells.get(&(tid, sid)) {
                    Some(o) => row.push(*o),
                    None => {
                        missing.push(format!("{task}/{s}"));
                        row.push(SolverOutcome::new(Answer::Failure, 0.0));
                    }
                }
            }
            outcomes.push(row);
        }
        if !missing.is_empty() {
            let shown: Vec<_> = missing.iter().take(5).cloned().collect();
            return Err(DataError::Incomplete(format!(
                "{} missing cell(s), e.g. {}",
                missing.len(),
                shown.join(", ")
            )));
        }
        ResultsTable::new(roster, tasks, outcomes)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let p = path.as_ref();
        let f = std::fs::File::open(p).map_err(|source| DataError::Io {
            path: p.display().to_string(),
            source,
        })?;
        Self::read_csv(io::BufReader::new(f))
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(RESULTS_HEADER)?;
        for (task, row) in self.tasks.iter().zip(&self.outcomes) {
            for (s, o) in self.roster.iter().zip(row) {
                w.write_record([
                    task.file.as_str(),
                    &task.theory,
                    &task.goal,
                    &s.label(),
                    o.answer.as_str(),
                    &format_seconds(o.cpu_time),
                ])?;
            }
        }
        w.flush().map_err(|source| DataError::Io {
            path: "<output>".into(),
            source,
        })?;
        Ok(())
    }

    pub fn roster(&self) -> &[SolverId] {
        &self.roster
    }

    pub fn tasks(&self) -> &[TaskId] {
        &self.tasks
    }

    pub fn task_index(&self, task: &str) -> Option<usize> {
        self.index.get(task).copied()
    }

    pub fn row(&self, task: usize) -> &[SolverOutcome] {
        &self.outcomes[task]
    }

    pub fn solver_index(&self, s: &SolverId) -> Option<usize> {
        self.roster.iter().position(|r| r == s)
    }

    /// Rejects Timeout cells recorded well under `limit`.
    pub fn check_timeouts(&self, limit: f64) -> Result<(), DataError> {
        for (task, row) in self.tasks.iter().zip(&self.outcomes) {
            for (s, o) in self.roster.iter().zip(row) {
                if o.answer == Answer::Timeout && o.cpu_time < limit * (1.0 - TIMEOUT_SLACK) {
                    return Err(DataError::Invalid(format!(
                        "task `{task}`, solver `{s}`: timeout recorded at {}s, below the {limit}s limit",
                        o.cpu_time
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn cost_vector(&self, task: usize, cfg: CostConfig) -> Vec<f64> {
        self.outcomes[task].iter().map(|&o| cost(o, cfg)).collect()
    }

    /// Indices of tasks grouped by theory, in first-appearance order.
    pub fn theories(&self) -> Vec<Vec<usize>> {
        group_by(&self.tasks, |t| (t.file.clone(), t.theory.clone()))
    }

    /// Indices of tasks grouped by file, in first-appearance order.
    pub fn files(&self) -> Vec<Vec<usize>> {
        group_by(&self.tasks, |t| t.file.clone())
    }

    /// A copy restricted to `tasks` (indices into this table), in that order.
    pub fn subset(&self, tasks: &[usize]) -> ResultsTable {
        let picked: Vec<TaskId> = tasks.iter().map(|&i| self.tasks[i].clone()).collect();
        let outcomes = tasks.iter().map(|&i| self.outcomes[i].clone()).collect();
        ResultsTable::new(self.roster.clone(), picked, outcomes).expect("subset of a valid table")
    }
}

fn group_by<K: Eq + std::hash::Hash>(tasks: &[TaskId], key: impl Fn(&TaskId) -> K) -> Vec<Vec<usize>> {
    let mut order: HashMap<K, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, t) in tasks.iter().enumerate() {
        let g = *order.entry(key(t)).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

pub fn ground_truth_ranking(task: &str, t: &ResultsTable, cfg: CostConfig) -> Result<SolverRanking, DataError> {
    let i = t
        .task_index(task)
        .ok_or_else(|| DataError::UnknownTask(task.to_string()))?;
    Ok(SolverRanking::by_ascending(&t.cost_vector(i, cfg)))
}

/// Roster ordered by descending number of conclusive answers.
pub fn static_solver_ranking(t: &ResultsTable) -> SolverRanking {
    let proved: Vec<f64> = (0..t.roster().len())
        .map(|s| {
            -((0..t.tasks().len())
                .filter(|&i| t.row(i)[s].answer.is_conclusive())
                .count() as f64)
        })
        .collect();
    SolverRanking::by_ascending(&proved)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    File,
    Theory,
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelStats {
    pub proved: usize,
    pub total: usize,
    /// Mean over proved units; `None` when nothing was proved.
    pub avg_time: Option<f64>,
}

impl LevelStats {
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.proved as f64 / self.total as f64
        }
    }

    fn from_units(total: usize, proved_times: &[f64]) -> Self {
        LevelStats {
            proved: proved_times.len(),
            total,
            avg_time: if proved_times.is_empty() {
                None
            } else {
                Some(proved_times.iter().sum::<f64>() / proved_times.len() as f64)
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelReport {
    pub file: LevelStats,
    pub theory: LevelStats,
    pub goal: LevelStats,
}

impl LevelReport {
    pub fn level(&self, level: Level) -> LevelStats {
        match level {
            Level::File => self.file,
            Level::Theory => self.theory,
            Level::Goal => self.goal,
        }
    }
}

/// Aggregates one (answer, time) per task of `t`, aligned with `t.tasks()`.
pub fn aggregate_report(t: &ResultsTable, outcomes: &[SolverOutcome]) -> LevelReport {
    assert_eq!(outcomes.len(), t.tasks().len(), "one outcome per task");
    let unit = |members: &[usize]| -> Option<f64> {
        members
            .iter()
            .all(|&i| outcomes[i].answer.is_conclusive())
            .then(|| members.iter().map(|&i| outcomes[i].cpu_time).sum())
    };
    let level = |groups: Vec<Vec<usize>>| {
        let times: Vec<f64> = groups.iter().filter_map(|g| unit(g)).collect();
        LevelStats::from_units(groups.len(), &times)
    };
    let goals: Vec<Vec<usize>> = (0..t.tasks().len()).map(|i| vec![i]).collect();
    LevelReport {
        file: level(t.files()),
        theory: level(t.theories()),
        goal: level(goals),
    }
}

/// Per unit, the single fastest solver that proves every goal of the unit.
pub fn choose_single(t: &ResultsTable, level: Level) -> LevelStats {
    let groups = match level {
        Level::File => t.files(),
        Level::Theory => t.theories(),
        Level::Goal => (0..t.tasks().len()).map(|i| vec![i]).collect(),
    };
    let times: Vec<f64> = groups
        .iter()
        .filter_map(|g| {
            (0..t.roster().len())
                .filter(|&s| g.iter().all(|&i| t.row(i)[s].answer.is_conclusive()))
                .map(|s| g.iter().map(|&i| t.row(i)[s].cpu_time).sum::<f64>())
                .min_by(f64::total_cmp)
        })
        .collect();
    LevelStats::from_units(groups.len(), &times)
}

pub fn choose_single_report(t: &ResultsTable) -> LevelReport {
    LevelReport {
        file: choose_single(t, Level::File),
        theory: choose_single(t, Level::Theory),
        goal: choose_single(t, Level::Goal),
    }
}

/// Smallest time limit under which each solver still returns `coverage` of
/// the useful (Valid/Invalid/Unknown) answers it gave in `t`.
pub fn calibrate_timeout(t: &ResultsTable, coverage: f64) -> Result<Vec<f64>, DataError> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(DataError::Invalid(format!("coverage must be in (0, 1], got {coverage}")));
    }
    Ok((0..t.roster().len())
        .map(|s| {
            let mut useful: Vec<f64> = (0..t.tasks().len())
                .map(|i| t.row(i)[s])
                .filter(|o| o.answer.utility() >= 1)
                .map(|o| o.cpu_time)
                .collect();
            if useful.is_empty() {
                return 0.0;
            }
            useful.sort_by(f64::total_cmp);
            // 1e-9 keeps e.g. 0.99 * 100 from rounding up to 100.
            let need = ((coverage * useful.len() as f64) - 1e-9).ceil().max(1.0) as usize;
            useful[need.min(useful.len()) - 1]
        })
        .collect())
}
