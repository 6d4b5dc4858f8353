//! Ranking-quality metrics, theoretical strategies and strategy replay.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use itertools::Itertools;
use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cost::{Answer, CostConfig, ResultsTable, SolverOutcome};
use crate::forest::ForestModel;
use crate::solver::SolverRanking;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("rankings are not permutations of the same {0}-solver roster")]
    RosterMismatch(usize),
    #[error("matrix shapes differ or are ragged")]
    Shape,
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("strategy needs {0}")]
    Missing(&'static str),
}

/// How a solver's position in the ground-truth ranking becomes its relevance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RelevanceMap {
    /// Position `j` (1-based) of `p` gets `p - j + 1`.
    #[default]
    LinearDescending,
    /// Position `j` gets `1 / j`.
    Reciprocal,
}

impl RelevanceMap {
    pub fn relevance(self, position: usize, p: usize) -> f64 {
        match self {
            RelevanceMap::LinearDescending => (p + 1 - position) as f64,
            RelevanceMap::Reciprocal => 1.0 / position as f64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RelevanceMap::LinearDescending => "linear-descending",
            RelevanceMap::Reciprocal => "reciprocal",
        }
    }
}

fn check_pair(ranking: &SolverRanking, truth: &SolverRanking) -> Result<usize, EvalError> {
    let p = truth.len();
    if ranking.len() != p || !ranking.is_permutation_of(p) || !truth.is_permutation_of(p) {
        return Err(EvalError::RosterMismatch(p));
    }
    Ok(p)
}

/// DCG of a ranking given as the 0-based ground-truth position of each
/// solver, in predicted order.
fn dcg_positions(order: impl Iterator<Item = usize>, p: usize, map: RelevanceMap) -> f64 {
    order
        .enumerate()
        .map(|(i, j)| (2f64.powf(map.relevance(j + 1, p)) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

pub fn dcg(ranking: &SolverRanking, truth: &SolverRanking, map: RelevanceMap) -> Result<f64, EvalError> {
    let p = check_pair(ranking, truth)?;
    let pos = truth.positions();
    Ok(dcg_positions(ranking.0.iter().map(|&s| pos[s]), p, map))
}

fn ideal_dcg(p: usize, map: RelevanceMap) -> f64 {
    dcg_positions(0..p, p, map)
}

/// Unnormalised nDCG: DCG divided by the ideal DCG.
pub fn ndcg_raw(ranking: &SolverRanking, truth: &SolverRanking, map: RelevanceMap) -> Result<f64, EvalError> {
    let p = check_pair(ranking, truth)?;
    Ok(dcg(ranking, truth, map)? / ideal_dcg(p, map))
}

/// Largest roster size whose lower bound is found by enumerating permutations.
pub const ENUMERATION_LIMIT: usize = 8;

/// Minimum raw nDCG over all rankings of length `p`.
///
/// For `p <= 8` every permutation is enumerated. Beyond that the reversed
/// ranking is used: gains and discounts are both decreasing, so pairing the
/// largest gain with the smallest discount minimises the sum.
pub fn ndcg_lower_bound(p: usize, map: RelevanceMap) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<(usize, RelevanceMap), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(&v) = cache.lock().unwrap().get(&(p, map)) {
        return v;
    }
    let idcg = ideal_dcg(p, map);
    let v = if p <= ENUMERATION_LIMIT {
        (0..p)
            .permutations(p)
            .map(|perm| dcg_positions(perm.into_iter(), p, map) / idcg)
            .fold(f64::INFINITY, f64::min)
    } else {
        dcg_positions((0..p).rev(), p, map) / idcg
    };
    cache.lock().unwrap().insert((p, map), v);
    v
}

/// nDCG rescaled so the worst achievable ranking scores 0 and the ideal 1.
pub fn ndcg_normalized(ranking: &SolverRanking, truth: &SolverRanking, map: RelevanceMap) -> Result<f64, EvalError> {
    let p = check_pair(ranking, truth)?;
    if p <= 1 {
        return Ok(1.0);
    }
    let raw = ndcg_raw(ranking, truth, map)?;
    let low = ndcg_lower_bound(p, map);
    Ok(((raw - low) / (1.0 - low)).clamp(0.0, 1.0))
}

/// Mean distance between each solver's predicted and true positions.
pub fn mae_rank(ranking: &SolverRanking, truth: &SolverRanking) -> Result<f64, EvalError> {
    let p = check_pair(ranking, truth)?;
    if p == 0 {
        return Ok(0.0);
    }
    let a = ranking.positions();
    let b = truth.positions();
    Ok(a.iter().zip(&b).map(|(&x, &y)| x.abs_diff(y) as f64).sum::<f64>() / p as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct R2Score {
    /// Uniform mean over the columns that were scored.
    pub value: f64,
    /// Zero-variance columns left out of the mean.
    pub excluded: Vec<usize>,
}

fn check_shape(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<usize, EvalError> {
    let m = b.first().map_or(0, |r| r.len());
    if a.len() != b.len() || a.iter().chain(b).any(|r| r.len() != m) {
        return Err(EvalError::Shape);
    }
    Ok(m)
}

/// Coefficient of determination per output column, averaged uniformly.
///
/// Columns with zero variance in the truth are excluded; a warning is logged
/// when their predictions are not exact. If every column is excluded the
/// score is 1 for exact predictions and 0 otherwise.
pub fn r2_score(predicted: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<R2Score, EvalError> {
    let m = check_shape(predicted, truth)?;
    let n = truth.len();
    if n < 2 {
        return Err(EvalError::TooFewRows(n));
    }
    let mut scores = Vec::new();
    let mut excluded = Vec::new();
    let mut all_exact = true;
    for j in 0..m {
        let mean = truth.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let ss_tot: f64 = truth.iter().map(|r| (r[j] - mean).powi(2)).sum();
        let ss_res: f64 = truth.iter().zip(predicted).map(|(y, p)| (y[j] - p[j]).powi(2)).sum();
        if ss_tot == 0.0 {
            if ss_res != 0.0 {
                all_exact = false;
                warn!("R2: output column {j} has zero variance and inexact predictions; excluded");
            }
            excluded.push(j);
        } else {
            scores.push(1.0 - ss_res / ss_tot);
        }
    }
    let value = if scores.is_empty() {
        if all_exact {
            1.0
        } else {
            0.0
        }
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    Ok(R2Score { value, excluded })
}

/// Mean absolute difference over all cells.
pub fn regression_error(predicted: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64, EvalError> {
    let m = check_shape(predicted, truth)?;
    let cells = truth.len() * m;
    if cells == 0 {
        return Ok(0.0);
    }
    let total: f64 = truth
        .iter()
        .zip(predicted)
        .flat_map(|(y, p)| y.iter().zip(p).map(|(a, b)| (a - b).abs()))
        .sum();
    Ok(total / cells as f64)
}

/// Cost vector implied by a ranking: the solver at position `i` is assigned
/// the `i`-th smallest true cost. The ground-truth ranking reproduces the
/// true costs exactly.
pub fn implied_costs(ranking: &SolverRanking, true_costs: &[f64]) -> Vec<f64> {
    let mut sorted = true_costs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = vec![0.0; true_costs.len()];
    for (i, &s) in ranking.0.iter().enumerate() {
        out[s] = sorted[i];
    }
    out
}

#[derive(Debug, Clone)]
pub enum Strategy<'a> {
    Best,
    Random { seed: u64 },
    Worst,
    Fixed(SolverRanking),
    Learned(&'a ForestModel),
}

impl Strategy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Best => "best",
            Strategy::Random { .. } => "random",
            Strategy::Worst => "worst",
            Strategy::Fixed(_) => "fixed",
            Strategy::Learned(_) => "learned",
        }
    }
}

/// Ranking a strategy proposes for task `task` of `t`. `features` is only
/// needed by `Learned`.
pub fn strategy_ranking(
    kind: &Strategy<'_>,
    task: usize,
    t: &ResultsTable,
    cfg: CostConfig,
    features: Option<&[f64]>,
) -> Result<SolverRanking, EvalError> {
    let truth = || SolverRanking::by_ascending(&t.cost_vector(task, cfg));
    Ok(match kind {
        Strategy::Best => truth(),
        Strategy::Worst => truth().reversed(),
        Strategy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(task as u64));
            let mut r: Vec<usize> = (0..t.roster().len()).collect();
            r.shuffle(&mut rng);
            SolverRanking(r)
        }
        Strategy::Fixed(r) => {
            if !r.is_permutation_of(t.roster().len()) {
                return Err(EvalError::RosterMismatch(t.roster().len()));
            }
            r.clone()
        }
        Strategy::Learned(model) => {
            let f = features.ok_or(EvalError::Missing("a feature vector"))?;
            if model.roster != t.roster() {
                return Err(EvalError::RosterMismatch(t.roster().len()));
            }
            model.predict_ranking(f)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    pub answer: Answer,
    pub cumulative_time: f64,
    /// Roster positions in call order.
    pub solvers_called: Vec<usize>,
}

impl StrategyOutcome {
    pub fn as_outcome(&self) -> SolverOutcome {
        SolverOutcome::new(self.answer, self.cumulative_time)
    }
}

/// Calls solvers in ranking order against recorded outcomes until one is
/// conclusive. The answer is the first one of highest utility seen.
pub fn replay(ranking: &SolverRanking, row: &[SolverOutcome]) -> StrategyOutcome {
    let mut out = StrategyOutcome {
        answer: Answer::Failure,
        cumulative_time: 0.0,
        solvers_called: Vec::with_capacity(ranking.len()),
    };
    for (k, &s) in ranking.0.iter().enumerate() {
        let o = row[s];
        out.cumulative_time += o.cpu_time;
        out.solvers_called.push(s);
        if k == 0 || o.answer.utility() > out.answer.utility() {
            out.answer = o.answer;
        }
        if o.answer.is_conclusive() {
            break;
        }
    }
    out
}

pub fn replay_strategy(rankings: &[SolverRanking], t: &ResultsTable) -> Vec<StrategyOutcome> {
    assert_eq!(rankings.len(), t.tasks().len(), "one ranking per task");
    rankings.iter().enumerate().map(|(i, r)| replay(r, t.row(i))).collect()
}

/// Step points `(time, conclusive answers with time <= it)` over the
/// conclusive outcomes, one point per distinct time.
pub fn cumulative_curve(outcomes: &[StrategyOutcome]) -> Vec<(f64, usize)> {
    let mut times: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.answer.is_conclusive())
        .map(|o| o.cumulative_time)
        .collect();
    times.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    for (i, t) in times.into_iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == t => last.1 = i + 1,
            _ => out.push((t, i + 1)),
        }
    }
    out
}

/// One row of the strategy comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRow {
    pub strategy: String,
    /// Mean cumulative replay time over all tasks.
    pub mean_time: f64,
    /// Mean cumulative replay time over tasks that ended conclusively.
    pub mean_time_conclusive: Option<f64>,
    pub ndcg: f64,
    /// Only defined for strategies that predict costs.
    pub r2: Option<f64>,
    pub mae: f64,
    pub reg_error: f64,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Scores per-task rankings against ground truth. When `predicted_costs` is
/// given it feeds R² and regression error; otherwise costs implied by the
/// rankings are used and R² is left undefined.
pub fn evaluate_rankings(
    name: &str,
    rankings: &[SolverRanking],
    predicted_costs: Option<&[Vec<f64>]>,
    t: &ResultsTable,
    cfg: CostConfig,
    map: RelevanceMap,
) -> Result<StrategyRow, EvalError> {
    let n = t.tasks().len();
    if rankings.len() != n || predicted_costs.is_some_and(|p| p.len() != n) {
        return Err(EvalError::Shape);
    }
    let truth_costs: Vec<Vec<f64>> = (0..n).map(|i| t.cost_vector(i, cfg)).collect();
    let truths: Vec<SolverRanking> = truth_costs.iter().map(|c| SolverRanking::by_ascending(c)).collect();
    let outcomes = replay_strategy(rankings, t);
    let mut ndcg = 0.0;
    let mut mae = 0.0;
    for (r, truth) in rankings.iter().zip(&truths) {
        ndcg += ndcg_normalized(r, truth, map)?;
        mae += mae_rank(r, truth)?;
    }
    let (r2, reg_error) = match predicted_costs {
        Some(p) => (
            if n >= 2 { Some(r2_score(p, &truth_costs)?.value) } else { None },
            regression_error(p, &truth_costs)?,
        ),
        None => {
            let implied: Vec<Vec<f64>> = rankings
                .iter()
                .zip(&truth_costs)
                .map(|(r, c)| implied_costs(r, c))
                .collect();
            (None, regression_error(&implied, &truth_costs)?)
        }
    };
    let denom = n.max(1) as f64;
    Ok(StrategyRow {
        strategy: name.to_string(),
        mean_time: mean(outcomes.iter().map(|o| o.cumulative_time)).unwrap_or(0.0),
        mean_time_conclusive: mean(
            outcomes
                .iter()
                .filter(|o| o.answer.is_conclusive())
                .map(|o| o.cumulative_time),
        ),
        ndcg: ndcg / denom,
        r2,
        mae: mae / denom,
        reg_error,
    })
}

/// Permutation count at or below which the random strategy is evaluated by
/// exact enumeration.
pub const RANDOM_EXACT_LIMIT: usize = 50_000;
/// Sample count for the seeded Monte-Carlo estimate above that limit.
pub const RANDOM_SAMPLES: usize = 10_000;

fn factorial(p: usize) -> Option<usize> {
    (1..=p).try_fold(1usize, |acc, k| acc.checked_mul(k))
}

/// The rankings averaged over by the random strategy: every permutation of
/// `0..p` when there are at most [`RANDOM_EXACT_LIMIT`], else a seeded sample.
pub fn random_rankings(p: usize, seed: u64) -> Vec<Vec<usize>> {
    match factorial(p) {
        Some(f) if f <= RANDOM_EXACT_LIMIT => (0..p).permutations(p).collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..RANDOM_SAMPLES)
                .map(|_| {
                    let mut r: Vec<usize> = (0..p).collect();
                    r.shuffle(&mut rng);
                    r
                })
                .collect()
        }
    }
}

/// Expected metrics of a uniformly random ranking per task.
pub fn evaluate_random(t: &ResultsTable, cfg: CostConfig, map: RelevanceMap, seed: u64) -> StrategyRow {
    let p = t.roster().len();
    let perms = random_rankings(p, seed);
    let k = perms.len() as f64;
    let identity = SolverRanking::identity(p);
    // Rank metrics depend only on the permutation of truth positions.
    let (mut ndcg, mut mae) = (0.0, 0.0);
    for perm in &perms {
        let r = SolverRanking(perm.clone());
        ndcg += ndcg_normalized(&r, &identity, map).expect("valid permutation");
        mae += mae_rank(&r, &identity).expect("valid permutation");
    }
    let n = t.tasks().len();
    let mut times = Vec::with_capacity(n);
    let mut conclusive_times = Vec::new();
    let mut reg = 0.0;
    for i in 0..n {
        let row = t.row(i);
        let costs = t.cost_vector(i, cfg);
        let truth = SolverRanking::by_ascending(&costs);
        let mut sorted = costs.clone();
        sorted.sort_by(f64::total_cmp);
        let (mut time, mut err) = (0.0, 0.0);
        let mut conclusive = false;
        for perm in &perms {
            // perm[i] is the truth position of the solver placed at rank i.
            let ranking = SolverRanking(perm.iter().map(|&j| truth.0[j]).collect());
            let o = replay(&ranking, row);
            conclusive |= o.answer.is_conclusive();
            time += o.cumulative_time;
            err += perm
                .iter()
                .enumerate()
                .map(|(pos, &j)| (sorted[pos] - sorted[j]).abs())
                .sum::<f64>()
                / p as f64;
        }
        times.push(time / k);
        if conclusive {
            conclusive_times.push(time / k);
        }
        reg += err / k;
    }
    StrategyRow {
        strategy: "random".into(),
        mean_time: mean(times).unwrap_or(0.0),
        mean_time_conclusive: mean(conclusive_times),
        ndcg: ndcg / k,
        r2: None,
        mae: mae / k,
        reg_error: if n == 0 { 0.0 } else { reg / n as f64 },
    }
}
