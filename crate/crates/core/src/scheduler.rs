//! Ranked solver scheduling with pre-solving.
//!
//! A statically best solver gets a short first attempt. If it is not
//! conclusive, the task's features are extracted, the forest ranks the
//! roster, and solvers are called in that order with the full time limit
//! until one answers Valid or Invalid.

use std::io::{Read, Write as _};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use log::warn;
use regex::Regex;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::cost::{Answer, ResultsTable, SolverOutcome};
use crate::features::{extract_task_features, TaskId, TaskScope};
use crate::forest::ForestModel;
use crate::logic::{DeclKind, Declaration, Document, Theory};
use crate::solver::{SolverId, SolverRanking};

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("no solver of the ranking is installed")]
    NoneInstalled,
    #[error("static ranking is not a permutation of the {0}-solver model roster")]
    BadStaticRanking(usize),
    #[error("invalid scheduler configuration: {0}")]
    Config(String),
}

/// One goal together with what a solver needs to attempt it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofTask {
    pub id: TaskId,
    pub body: TaskBody,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskBody {
    Parsed {
        goal: Declaration,
        /// Lemmas counted alongside the goal for feature extraction.
        lemmas: Vec<Declaration>,
        /// Standalone document: the goal's theory up to the goal, other goals removed.
        source: String,
    },
    /// Only a feature vector is known; enough for replay, not for running a solver.
    Features(Vec<f64>),
}

impl ProofTask {
    /// One task per goal of `d`, in declaration order.
    pub fn from_document(d: &Document) -> Vec<ProofTask> {
        let file = crate::features::file_key(&d.path);
        let mut out = Vec::new();
        for th in &d.theories {
            for (i, decl) in th.decls.iter().enumerate() {
                if decl.kind != DeclKind::Goal {
                    continue;
                }
                let context: Vec<Declaration> = th.decls[..i]
                    .iter()
                    .filter(|d| d.kind != DeclKind::Goal)
                    .cloned()
                    .collect();
                let lemmas = context.iter().filter(|d| d.kind == DeclKind::Lemma).cloned().collect();
                let mut decls = context;
                decls.push(decl.clone());
                let source = crate::logic::print_document(&Document {
                    path: d.path.clone(),
                    theories: vec![Theory {
                        name: th.name.clone(),
                        decls,
                    }],
                });
                out.push(ProofTask {
                    id: TaskId::new(file, th.name.clone(), decl.name.clone()),
                    body: TaskBody::Parsed {
                        goal: decl.clone(),
                        lemmas,
                        source,
                    },
                });
            }
        }
        out
    }

    pub fn from_features(id: TaskId, features: Vec<f64>) -> Self {
        ProofTask {
            id,
            body: TaskBody::Features(features),
        }
    }

    pub fn source(&self) -> Option<&str> {
        match &self.body {
            TaskBody::Parsed { source, .. } => Some(source),
            TaskBody::Features(_) => None,
        }
    }

    pub fn features(&self) -> Vec<f64> {
        match &self.body {
            TaskBody::Parsed { goal, lemmas, .. } => {
                let lemmas: Vec<&Declaration> = lemmas.iter().collect();
                extract_task_features(TaskScope {
                    goal,
                    context: &lemmas,
                })
                .to_array()
                .to_vec()
            }
            TaskBody::Features(f) => f.clone(),
        }
    }
}

/// Something that can run a solver on a task.
pub trait SolverBackend: Sync {
    /// Runs `solver` on `task` with a limit of `timeout` seconds. Problems
    /// running the solver come back as `Failure`.
    fn call(&self, task: &ProofTask, solver: &SolverId, timeout: f64) -> SolverOutcome;

    fn installed(&self, solver: &SolverId) -> bool;
}

/// Answers from a recorded results table.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    pub table: ResultsTable,
    /// Limit the table was recorded under. Limits above it are not
    /// extrapolated: the recorded outcome is returned unchanged.
    pub recording_timeout: f64,
}

impl ReplayBackend {
    pub fn new(table: ResultsTable, recording_timeout: f64) -> Self {
        ReplayBackend {
            table,
            recording_timeout,
        }
    }
}

impl SolverBackend for ReplayBackend {
    fn call(&self, task: &ProofTask, solver: &SolverId, timeout: f64) -> SolverOutcome {
        let key = task.id.to_string();
        let (Some(i), Some(s)) = (self.table.task_index(&key), self.table.solver_index(solver)) else {
            warn!("replay: no recorded outcome for {key} / {solver}");
            return SolverOutcome::new(Answer::Failure, 0.0);
        };
        let o = self.table.row(i)[s];
        if o.cpu_time > timeout {
            SolverOutcome::new(Answer::Timeout, timeout)
        } else {
            o
        }
    }

    fn installed(&self, solver: &SolverId) -> bool {
        self.table.solver_index(solver).is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    pub timeout: f64,
    pub pre_solve_timeout: f64,
    /// Ranking (over the model roster) the pre-solver is picked from.
    pub static_ranking: SolverRanking,
    /// Solvers predicted to cost more than this are skipped.
    pub cost_threshold: Option<f64>,
    /// Leave the pre-solver out of the predicted ranking.
    pub skip_presolver_in_ranking: bool,
}

impl SchedulerConfig {
    pub fn new(static_ranking: SolverRanking) -> Self {
        SchedulerConfig {
            timeout: 10.0,
            pre_solve_timeout: 1.0,
            static_ranking,
            cost_threshold: None,
            skip_presolver_in_ranking: false,
        }
    }

    fn check(&self, roster_len: usize) -> Result<(), SchedulerError> {
        if !(self.timeout > 0.0) || !(self.pre_solve_timeout > 0.0) {
            return Err(SchedulerError::Config("timeouts must be positive".into()));
        }
        if !self.static_ranking.is_permutation_of(roster_len) {
            return Err(SchedulerError::BadStaticRanking(roster_len));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverCall {
    /// Position in the model roster.
    pub solver: usize,
    pub timeout: f64,
    pub outcome: SolverOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProveResult {
    pub answer: Answer,
    /// Sum of the solver times in `trace`.
    pub time: f64,
    pub trace: Vec<SolverCall>,
    /// Wall-clock seconds spent extracting features and predicting; not part
    /// of `time`.
    pub overhead: f64,
}

/// First solver of `ranking` the backend has installed.
pub fn best_installed(
    ranking: &[usize],
    roster: &[SolverId],
    backend: &(impl SolverBackend + ?Sized),
) -> Result<usize, SchedulerError> {
    ranking
        .iter()
        .copied()
        .find(|&s| backend.installed(&roster[s]))
        .ok_or(SchedulerError::NoneInstalled)
}

pub fn prove(
    task: &ProofTask,
    cfg: &SchedulerConfig,
    model: &ForestModel,
    backend: &(impl SolverBackend + ?Sized),
) -> Result<ProveResult, SchedulerError> {
    run(task, cfg, model, backend, None)
}

/// Like [`prove`], but after pre-solving only solvers whose predicted cost is
/// at most `cfg.cost_threshold` are called. If none qualifies, the
/// pre-solver's result is returned.
pub fn prove_with_threshold(
    task: &ProofTask,
    cfg: &SchedulerConfig,
    model: &ForestModel,
    backend: &(impl SolverBackend + ?Sized),
) -> Result<ProveResult, SchedulerError> {
    let threshold = cfg
        .cost_threshold
        .ok_or_else(|| SchedulerError::Config("cost threshold not set".into()))?;
    run(task, cfg, model, backend, Some(threshold))
}

fn run(
    task: &ProofTask,
    cfg: &SchedulerConfig,
    model: &ForestModel,
    backend: &(impl SolverBackend + ?Sized),
    threshold: Option<f64>,
) -> Result<ProveResult, SchedulerError> {
    let roster = &model.roster;
    cfg.check(roster.len())?;
    let pre = best_installed(&cfg.static_ranking.0, roster, backend)?;
    let first = backend.call(task, &roster[pre], cfg.pre_solve_timeout);
    let mut result = ProveResult {
        answer: first.answer,
        time: first.cpu_time,
        trace: vec![SolverCall {
            solver: pre,
            timeout: cfg.pre_solve_timeout,
            outcome: first,
        }],
        overhead: 0.0,
    };
    if first.answer.is_conclusive() {
        return Ok(result);
    }

    let started = Instant::now();
    let predicted = model.predict(&task.features());
    let ranking = SolverRanking::by_ascending(&predicted);
    result.overhead = started.elapsed().as_secs_f64();

    let mut remaining: Vec<usize> = ranking
        .0
        .into_iter()
        .filter(|&s| threshold.map_or(true, |t| predicted[s] <= t))
        .filter(|&s| !(cfg.skip_presolver_in_ranking && s == pre))
        .collect();
    while !result.answer.is_conclusive() && !remaining.is_empty() {
        let Ok(s) = best_installed(&remaining, roster, backend) else {
            break;
        };
        remaining.retain(|&r| r != s);
        let o = backend.call(task, &roster[s], cfg.timeout);
        result.time += o.cpu_time;
        if o.answer.utility() > result.answer.utility() {
            result.answer = o.answer;
        }
        result.trace.push(SolverCall {
            solver: s,
            timeout: cfg.timeout,
            outcome: o,
        });
    }
    Ok(result)
}

/// Rankings for every goal of a document, without calling any solver.
pub fn predict_only(d: &Document, model: &ForestModel) -> Vec<(TaskId, SolverRanking, Vec<f64>)> {
    ProofTask::from_document(d)
        .into_iter()
        .map(|t| {
            let costs = model.predict(&t.features());
            (t.id, SolverRanking::by_ascending(&costs), costs)
        })
        .collect()
}

/// How to run one solver as a child process.
#[derive(Debug, Clone)]
pub struct SolverCommand {
    pub id: SolverId,
    pub program: String,
    /// May contain `{file}` and `{timeout}` placeholders.
    pub args: Vec<String>,
    pub valid: Regex,
    pub invalid: Regex,
    pub unknown: Regex,
}

impl SolverCommand {
    /// Valid, then Invalid, then Unknown patterns are tried against stdout.
    pub fn parse_answer(&self, stdout: &str) -> Option<Answer> {
        [
            (&self.valid, Answer::Valid),
            (&self.invalid, Answer::Invalid),
            (&self.unknown, Answer::Unknown),
        ]
        .into_iter()
        .find(|(re, _)| re.is_match(stdout))
        .map(|(_, a)| a)
    }
}

/// Runs solvers as child processes described by an INI file with one
/// section per solver:
///
/// ```ini
/// [z3]
/// name = Z3
/// version = 4.4.1
/// command = z3 -T:{timeout} {file}
/// valid_pattern = ^unsat
/// invalid_pattern = ^sat
/// unknown_pattern = ^unknown
/// ```
#[derive(Debug, Clone)]
pub struct ProcessBackend {
    pub solvers: Vec<SolverCommand>,
    pub workdir: PathBuf,
}

impl ProcessBackend {
    pub fn from_ini(text: &str, workdir: impl Into<PathBuf>) -> Result<Self, SchedulerError> {
        let conf = ini::Ini::load_from_str(text).map_err(|e| SchedulerError::Config(e.to_string()))?;
        let mut solvers = Vec::new();
        for (section, props) in conf.iter() {
            let Some(section) = section else {
                if props.iter().next().is_some() {
                    return Err(SchedulerError::Config("keys outside a [solver] section".into()));
                }
                continue;
            };
            let get = |k: &str| {
                props
                    .get(k)
                    .ok_or_else(|| SchedulerError::Config(format!("[{section}] is missing `{k}`")))
            };
            let pattern = |k: &str| -> Result<Regex, SchedulerError> {
                let src = get(k)?;
                Regex::new(&format!("(?m){src}"))
                    .map_err(|e| SchedulerError::Config(format!("[{section}] {k}: {e}")))
            };
            let words = shlex::split(get("command")?)
                .filter(|w| !w.is_empty())
                .ok_or_else(|| SchedulerError::Config(format!("[{section}] command cannot be split into words")))?;
            let (program, args) = words.split_first().expect("non-empty");
            solvers.push(SolverCommand {
                id: SolverId::new(get("name")?, props.get("version").unwrap_or("")),
                program: program.clone(),
                args: args.to_vec(),
                valid: pattern("valid_pattern")?,
                invalid: pattern("invalid_pattern")?,
                unknown: pattern("unknown_pattern")?,
            });
        }
        let mut ids: Vec<&SolverId> = solvers.iter().map(|s| &s.id).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(SchedulerError::Config("duplicate solver name/version".into()));
        }
        Ok(ProcessBackend {
            solvers,
            workdir: workdir.into(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, SchedulerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchedulerError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_ini(&text, dir)
    }

    pub fn roster(&self) -> Vec<SolverId> {
        self.solvers.iter().map(|s| s.id.clone()).collect()
    }

    fn command(&self, solver: &SolverId) -> Option<&SolverCommand> {
        self.solvers.iter().find(|s| &s.id == solver)
    }

    /// Wall-clock seconds and answer of one run. Killed runs report the limit.
    fn run_once(&self, cmd: &SolverCommand, task: &ProofTask, timeout: f64) -> std::io::Result<SolverOutcome> {
        let source = task.source().ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("{}: no goal text to send", task.id))
        })?;
        let mut file = tempfile::Builder::new()
            .prefix("task-")
            .suffix(".lang")
            .tempfile_in(if self.workdir.as_os_str().is_empty() {
                std::env::temp_dir()
            } else {
                self.workdir.clone()
            })?;
        file.write_all(source.as_bytes())?;
        file.flush()?;
        let path = file.path().display().to_string();
        let limit = crate::cost::format_seconds(timeout);
        let args: Vec<String> = cmd
            .args
            .iter()
            .map(|a| a.replace("{file}", &path).replace("{timeout}", &limit))
            .collect();
        let started = Instant::now();
        let mut child = Command::new(&cmd.program)
            .args(&args)
            .current_dir(if self.workdir.as_os_str().is_empty() {
                Path::new(".")
            } else {
                &self.workdir
            })
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let mut stdout = child.stdout.take().expect("piped");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let status = child.wait_timeout(Duration::from_secs_f64(timeout))?;
        let Some(status) = status else {
            let _ = child.kill();
            let _ = child.wait();
            let _ = reader.join();
            return Ok(SolverOutcome::new(Answer::Timeout, timeout));
        };
        let elapsed = started.elapsed().as_secs_f64();
        let out = reader.join().unwrap_or_default();
        let answer = match cmd.parse_answer(&out) {
            Some(a) => a,
            None => {
                if !status.success() {
                    warn!("{}: exited with {status} without a recognised answer", cmd.id);
                }
                Answer::Failure
            }
        };
        Ok(SolverOutcome::new(answer, elapsed))
    }

    /// Repeats a run until the mean time is known to the requested precision.
    pub fn measure(
        &self,
        task: &ProofTask,
        solver: &SolverId,
        timeout: f64,
        cfg: &MeasureConfig,
    ) -> Result<(Answer, Measurement), MeasureError<String>> {
        let cmd = self.command(solver).ok_or_else(|| MeasureError {
            error: format!("unknown solver {solver}"),
            partial: None,
        })?;
        let mut answer: Option<Answer> = None;
        let m = measure_mean_time(
            || {
                let o = self.run_once(cmd, task, timeout).map_err(|e| e.to_string())?;
                match answer {
                    Some(a) if a != o.answer => Err(format!("answer changed from {a} to {}", o.answer)),
                    _ if o.answer == Answer::Failure => Err("solver failed".to_string()),
                    _ => {
                        answer = Some(o.answer);
                        Ok(o.cpu_time)
                    }
                }
            },
            cfg,
        )?;
        Ok((answer.unwrap_or(Answer::Failure), m))
    }
}

impl SolverBackend for ProcessBackend {
    fn call(&self, task: &ProofTask, solver: &SolverId, timeout: f64) -> SolverOutcome {
        let Some(cmd) = self.command(solver) else {
            return SolverOutcome::new(Answer::Failure, 0.0);
        };
        match self.run_once(cmd, task, timeout) {
            Ok(o) => o,
            Err(e) => {
                warn!("{solver}: {e}");
                SolverOutcome::new(Answer::Failure, 0.0)
            }
        }
    }

    fn installed(&self, solver: &SolverId) -> bool {
        self.command(solver).is_some_and(|c| which::which(&c.program).is_ok())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureConfig {
    /// Two-sided confidence level of the interval.
    pub confidence: f64,
    /// Allowed half-width as a fraction of the mean.
    pub allowed_error: f64,
    pub min_runs: usize,
    pub max_runs: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            confidence: 0.90,
            allowed_error: 0.035,
            min_runs: 3,
            max_runs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub mean: f64,
    /// Sample standard deviation.
    pub std_dev: f64,
    pub runs: usize,
    pub half_width: f64,
    /// False when `max_runs` was reached before the interval was narrow enough.
    pub converged: bool,
}

#[derive(Debug, Error)]
#[error("measurement aborted: {error}")]
pub struct MeasureError<E: std::fmt::Display + std::fmt::Debug> {
    pub error: E,
    /// Statistics of the runs completed before the failure.
    pub partial: Option<Measurement>,
}

fn summarize(samples: &[f64], z: f64, allowed: f64) -> Measurement {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std_dev = var.sqrt();
    let half_width = z * std_dev / n.sqrt();
    Measurement {
        mean,
        std_dev,
        runs: samples.len(),
        half_width,
        converged: half_width <= allowed * mean,
    }
}

/// Repeats `run` (which returns one timing in seconds) until the normal
/// approximation confidence interval's half-width is within
/// `allowed_error * mean`, or `max_runs` is reached.
pub fn measure_mean_time<E: std::fmt::Display + std::fmt::Debug>(
    mut run: impl FnMut() -> Result<f64, E>,
    cfg: &MeasureConfig,
) -> Result<Measurement, MeasureError<E>> {
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf((1.0 + cfg.confidence) / 2.0);
    let min_runs = cfg.min_runs.max(2);
    let max_runs = cfg.max_runs.max(min_runs);
    let mut samples = Vec::with_capacity(min_runs);
    loop {
        match run() {
            Ok(t) => samples.push(t),
            Err(error) => {
                return Err(MeasureError {
                    error,
                    partial: (!samples.is_empty()).then(|| summarize(&samples, z, cfg.allowed_error)),
                })
            }
        }
        if samples.len() < min_runs {
            continue;
        }
        let m = summarize(&samples, z, cfg.allowed_error);
        if m.converged {
            return Ok(m);
        }
        if samples.len() >= max_runs {
            warn!(
                "mean time {:.4}s did not converge after {} runs (half-width {:.4}s)",
                m.mean, m.runs, m.half_width
            );
            return Ok(m);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::TaskId;
    use crate::forest::{Hyperparameters, TreeNode};
    use crate::logic::parse_document_at;
    use Answer::*;

    fn roster(n: usize) -> Vec<SolverId> {
        (0..n).map(|i| SolverId::new(format!("s{i}"), "1")).collect()
    }

    fn constant_model(costs: Vec<f64>) -> ForestModel {
        ForestModel {
            roster: roster(costs.len()),
            feature_names: crate::features::FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            hyperparameters: Hyperparameters::default(),
            trees: vec![TreeNode::Leaf { value: costs }],
        }
    }

    fn task() -> ProofTask {
        ProofTask::from_document(&parse_document_at("f.lang", "(theory T (goal g true))").unwrap()).remove(0)
    }

    fn replay(cells: &[(Answer, f64)]) -> ReplayBackend {
        let t = ResultsTable::new(
            roster(cells.len()),
            vec![TaskId::new("f.lang", "T", "g")],
            vec![cells.iter().map(|&(a, t)| SolverOutcome::new(a, t)).collect()],
        )
        .unwrap();
        ReplayBackend::new(t, 10.0)
    }

    struct Partial<'a>(&'a ReplayBackend, Vec<bool>);

    impl SolverBackend for Partial<'_> {
        fn call(&self, task: &ProofTask, solver: &SolverId, timeout: f64) -> SolverOutcome {
            self.0.call(task, solver, timeout)
        }
        fn installed(&self, solver: &SolverId) -> bool {
            self.0.table.solver_index(solver).is_some_and(|i| self.1[i])
        }
    }

    #[test]
    fn best_installed_skips_missing() {
        let b = replay(&[(Valid, 1.0), (Valid, 1.0), (Valid, 1.0)]);
        let r = roster(3);
        assert_eq!(best_installed(&[2, 0, 1], &r, &b).unwrap(), 2);
        let p = Partial(&b, vec![true, true, false]);
        assert_eq!(best_installed(&[2, 0, 1], &r, &p).unwrap(), 0);
        let none = Partial(&b, vec![false; 3]);
        assert!(matches!(best_installed(&[2, 0, 1], &r, &none), Err(SchedulerError::NoneInstalled)));
    }

    #[test]
    fn replay_clips_to_limit() {
        let b = replay(&[(Valid, 3.0), (Timeout, 10.0)]);
        let t = task();
        assert_eq!(b.call(&t, &roster(2)[0], 1.0), SolverOutcome::new(Timeout, 1.0));
        assert_eq!(b.call(&t, &roster(2)[0], 10.0), SolverOutcome::new(Valid, 3.0));
        assert_eq!(b.call(&t, &roster(2)[1], 10.0), SolverOutcome::new(Timeout, 10.0));
        assert_eq!(b.call(&t, &roster(2)[0], 60.0), SolverOutcome::new(Valid, 3.0));
    }

    #[test]
    fn early_exit() {
        let b = replay(&[(Valid, 0.4), (Valid, 0.1)]);
        let m = constant_model(vec![2.0, 1.0]);
        let r = prove(&task(), &SchedulerConfig::new(SolverRanking(vec![0, 1])), &m, &b).unwrap();
        assert_eq!((r.answer, r.time, r.trace.len()), (Valid, 0.4, 1));
    }

    #[test]
    fn pre_solver_then_ranked() {
        let b = replay(&[(Unknown, 1.0), (Valid, 0.8)]);
        let m = constant_model(vec![2.0, 1.0]);
        let r = prove(&task(), &SchedulerConfig::new(SolverRanking(vec![0, 1])), &m, &b).unwrap();
        assert_eq!((r.answer, r.time, r.trace.len()), (Valid, 1.8, 2));
        assert_eq!(r.trace[1].solver, 1);
    }

    #[test]
    fn exhaustion_keeps_first_best_answer() {
        let b = replay(&[(Timeout, 10.0), (Unknown, 2.0), (Unknown, 3.0), (Failure, 0.5)]);
        let m = constant_model(vec![1.0, 2.0, 3.0, 4.0]);
        let r = prove(&task(), &SchedulerConfig::new(SolverRanking(vec![0, 1, 2, 3])), &m, &b).unwrap();
        // pre-solve clipped to 1s, then all four with the full limit.
        let solvers: Vec<usize> = r.trace.iter().map(|c| c.solver).collect();
        assert_eq!(solvers, vec![0, 0, 1, 2, 3]);
        assert_eq!(r.answer, Unknown);
        assert_eq!(r.time, 1.0 + 10.0 + 2.0 + 3.0 + 0.5);
        assert_eq!(r.trace[2].outcome.cpu_time, 2.0);

        let mut cfg = SchedulerConfig::new(SolverRanking(vec![0, 1, 2, 3]));
        cfg.skip_presolver_in_ranking = true;
        let r = prove(&task(), &cfg, &m, &b).unwrap();
        assert_eq!(r.trace.len(), 4);
    }

    #[test]
    fn thresholds() {
        let b = replay(&[(Unknown, 0.5), (Valid, 2.0), (Valid, 1.0)]);
        let m = constant_model(vec![1.0, 5.0, 9.0]);
        let mut cfg = SchedulerConfig::new(SolverRanking(vec![0, 1, 2]));
        assert!(prove_with_threshold(&task(), &cfg, &m, &b).is_err());
        cfg.cost_threshold = Some(0.5);
        let r = prove_with_threshold(&task(), &cfg, &m, &b).unwrap();
        assert_eq!((r.answer, r.time, r.trace.len()), (Unknown, 0.5, 1));
        cfg.cost_threshold = Some(5.0);
        let r = prove_with_threshold(&task(), &cfg, &m, &b).unwrap();
        assert_eq!((r.answer, r.time, r.trace.len()), (Valid, 0.5 + 0.5 + 2.0, 3));
        cfg.cost_threshold = Some(f64::INFINITY);
        let unfiltered = prove(&task(), &cfg, &m, &b).unwrap();
        assert_eq!(prove_with_threshold(&task(), &cfg, &m, &b).unwrap().trace, unfiltered.trace);
    }

    #[test]
    fn predict_only_lists_goals() {
        let m = constant_model(vec![3.0, 1.0]);
        let d = parse_document_at("x.lang", "(theory A (goal a true) (lemma l true) (goal b false))").unwrap();
        let out = predict_only(&d, &m);
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].0.to_string(), "x.lang:A:b");
        assert_eq!(out[0].1 .0, vec![1, 0]);
        assert!(predict_only(&parse_document_at("e", "").unwrap(), &m).is_empty());
    }

    #[test]
    fn task_sources_are_standalone() {
        let d = parse_document_at(
            "x.lang",
            "(theory A (function f (x)) (goal a true) (lemma l (f c)) (goal b (f d)))",
        )
        .unwrap();
        let tasks = ProofTask::from_document(&d);
        let again = crate::logic::parse_document(tasks[1].source().unwrap()).unwrap();
        let names: Vec<&str> = again.theories[0].decls.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, vec!["f", "l", "b"]);
        assert!(matches!(&tasks[1].body, TaskBody::Parsed { lemmas, .. } if lemmas.len() == 1));
        let f = ProofTask::from_features(tasks[1].id.clone(), tasks[1].features());
        assert_eq!(f.features(), tasks[1].features());
        assert!(f.source().is_none());
    }

    #[test]
    fn measurement_stops_early_on_constant_timer() {
        let m = measure_mean_time(|| Ok::<f64, String>(2.0), &MeasureConfig::default()).unwrap();
        assert_eq!((m.runs, m.mean, m.converged), (3, 2.0, true));
    }

    #[test]
    fn measurement_gives_up_at_max_runs() {
        let mut flip = false;
        let cfg = MeasureConfig {
            max_runs: 6,
            ..Default::default()
        };
        let m = measure_mean_time(
            || {
                flip = !flip;
                Ok::<f64, String>(if flip { 1.0 } else { 3.0 })
            },
            &cfg,
        )
        .unwrap();
        assert_eq!((m.runs, m.converged), (6, false));
    }

    #[test]
    fn measurement_failure_keeps_partial_stats() {
        let mut n = 0;
        let e = measure_mean_time(
            || {
                n += 1;
                if n == 3 {
                    Err("boom")
                } else {
                    Ok(1.0 + n as f64)
                }
            },
            &MeasureConfig::default(),
        )
        .unwrap_err();
        assert_eq!(e.partial.unwrap().runs, 2);
    }

    #[cfg(unix)]
    #[test]
    fn process_backend_runs_commands() {
        let dir = tempfile::tempdir().unwrap();
        let ini = "[ok]\nname = echoer\nversion = 1\ncommand = sh -c \"echo Valid; cat {file} > /dev/null\"\n\
                   valid_pattern = ^Valid\ninvalid_pattern = ^Invalid\nunknown_pattern = ^Unknown\n\
                   [slow]\nname = sleeper\ncommand = sleep 5\nvalid_pattern = x\ninvalid_pattern = y\nunknown_pattern = z\n\
                   [bad]\nname = failer\ncommand = sh -c \"exit 3\"\nvalid_pattern = x\ninvalid_pattern = y\nunknown_pattern = z\n\
                   [missing]\nname = ghost\ncommand = /nonexistent/solver {file}\nvalid_pattern = x\ninvalid_pattern = y\nunknown_pattern = z\n";
        let b = ProcessBackend::from_ini(ini, dir.path()).unwrap();
        let t = task();
        let ids = b.roster();
        assert_eq!(b.call(&t, &ids[0], 5.0).answer, Valid);
        let slow = b.call(&t, &ids[1], 0.2);
        assert_eq!(slow, SolverOutcome::new(Timeout, 0.2));
        assert_eq!(b.call(&t, &ids[2], 5.0).answer, Failure);
        assert!(b.installed(&ids[0]));
        assert!(!b.installed(&ids[3]));
        assert_eq!(b.call(&t, &ids[3], 5.0).answer, Failure);
    }

    #[test]
    fn ini_errors() {
        assert!(ProcessBackend::from_ini("[a]\nname = x\n", ".").is_err());
        assert!(ProcessBackend::from_ini(
            "[a]\nname = x\ncommand = c\nvalid_pattern = (\ninvalid_pattern = y\nunknown_pattern = z\n",
            "."
        )
        .is_err());
    }
}
