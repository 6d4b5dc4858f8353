#![allow(dead_code)]

use std::path::PathBuf;

use portfolio_core::cost::{Answer, ResultsTable, SolverOutcome};
use portfolio_core::forest::{ForestModel, Split, TrainingSet};
use portfolio_core::logic::{parse_document_at, DeclKind, Declaration, Document, Term, Theory};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn corpus() -> Vec<Document> {
    ["arith.lang", "lists.lang", "sets.lang", "bad.lang"]
        .iter()
        .map(|f| {
            let src = std::fs::read_to_string(fixture(&format!("corpus/{f}"))).unwrap();
            parse_document_at(f, &src).unwrap()
        })
        .collect()
}

pub fn replay_table() -> ResultsTable {
    ResultsTable::from_path(fixture("results_t10.csv")).unwrap()
}

pub fn fixture_model() -> ForestModel {
    ForestModel::from_json(&std::fs::read_to_string(fixture("model.json")).unwrap()).unwrap()
}

pub struct ExpectedTrace {
    pub task: String,
    pub answer: Answer,
    pub time: f64,
    /// (solver label, limit, outcome)
    pub calls: Vec<(String, f64, SolverOutcome)>,
}

pub fn expected_traces() -> Vec<ExpectedTrace> {
    let text = std::fs::read_to_string(fixture("expected/prove_traces.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_array()
        .unwrap()
        .iter()
        .map(|e| ExpectedTrace {
            task: e["task"].as_str().unwrap().to_string(),
            answer: e["answer"].as_str().unwrap().parse().unwrap(),
            time: e["time"].as_f64().unwrap(),
            calls: e["calls"]
                .as_array()
                .unwrap()
                .iter()
                .map(|c| {
                    (
                        c[0].as_str().unwrap().to_string(),
                        c[1].as_f64().unwrap(),
                        SolverOutcome::new(c[2].as_str().unwrap().parse().unwrap(), c[3].as_f64().unwrap()),
                    )
                })
                .collect(),
        })
        .collect()
}

// ---- random well-formed documents ----

const VARS: &[&str] = &["x", "y", "z", "w'", "v_1"];
const CONSTS: &[&str] = &["nil", "zero", "c0", "Empty"];
const SYMBOLS: &[&str] = &["f", "g", "mem", "plus'"];

fn gen_term(rng: &mut ChaCha8Rng, depth: u32, scope: &mut Vec<String>) -> Term {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..7) {
            0 if !scope.is_empty() => Term::Var(scope.choose(rng).unwrap().clone()),
            0 | 1 => Term::ConstRef(CONSTS.choose(rng).unwrap().to_string()),
            2 => Term::True,
            3 => Term::False,
            4 => Term::Wildcard,
            5 => Term::Int(rng.gen_range(0..1000u32).to_string()),
            _ => Term::Float(format!("{}.{}", rng.gen_range(0..100u32), rng.gen_range(0..100u32))),
        };
    }
    let d = depth - 1;
    let sub = |rng: &mut ChaCha8Rng, scope: &mut Vec<String>| Box::new(gen_term(rng, d, scope));
    let many = |rng: &mut ChaCha8Rng, scope: &mut Vec<String>, lo: usize| {
        let n = rng.gen_range(lo..lo + 3);
        (0..n).map(|_| gen_term(rng, d, scope)).collect::<Vec<_>>()
    };
    let binders = |rng: &mut ChaCha8Rng| {
        let n = rng.gen_range(1..3);
        let mut v: Vec<String> = VARS.choose_multiple(rng, n).map(|s| s.to_string()).collect();
        v.sort();
        v
    };
    match rng.gen_range(0..13) {
        0 => Term::And(many(rng, scope, 2)),
        1 => Term::Or(many(rng, scope, 2)),
        2 => Term::Not(sub(rng, scope)),
        3 => Term::Imp(sub(rng, scope), sub(rng, scope)),
        4 => Term::Iff(sub(rng, scope), sub(rng, scope)),
        5 => Term::Ite(sub(rng, scope), sub(rng, scope), sub(rng, scope)),
        6 => {
            let name = VARS.choose(rng).unwrap().to_string();
            let value = sub(rng, scope);
            scope.push(name.clone());
            let body = sub(rng, scope);
            scope.pop();
            Term::Let { name, value, body }
        }
        7 => Term::Cast {
            term: sub(rng, scope),
            ty: "int".into(),
        },
        8 => {
            let name = VARS.choose(rng).unwrap().to_string();
            scope.push(name.clone());
            let body = sub(rng, scope);
            scope.pop();
            Term::Eps { name, body }
        }
        9 => {
            let scrutinee = sub(rng, scope);
            let n = rng.gen_range(1..3);
            let branches = (0..n).map(|_| (gen_term(rng, d, scope), gen_term(rng, d, scope))).collect();
            Term::Match { scrutinee, branches }
        }
        10 | 11 => {
            let vars = binders(rng);
            let mark = scope.len();
            scope.extend(vars.iter().cloned());
            let body = sub(rng, scope);
            scope.truncate(mark);
            if rng.gen_bool(0.5) {
                Term::Forall { vars, body }
            } else {
                Term::Exists { vars, body }
            }
        }
        _ => Term::Apply {
            symbol: SYMBOLS.choose(rng).unwrap().to_string(),
            args: many(rng, scope, 1),
        },
    }
}

/// A random document that satisfies `validate`.
pub fn random_document(seed: u64) -> Document {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theories = (0..rng.gen_range(0..4))
        .map(|ti| {
            let decls = (0..rng.gen_range(0..6))
                .map(|di| {
                    let kind = *[
                        DeclKind::Goal,
                        DeclKind::Goal,
                        DeclKind::Lemma,
                        DeclKind::Axiom,
                        DeclKind::Function,
                        DeclKind::Predicate,
                    ]
                    .choose(&mut rng)
                    .unwrap();
                    let depth = rng.gen_range(0..6);
                    let (params, body) = if kind.is_formula() {
                        (Vec::new(), Some(gen_term(&mut rng, depth, &mut Vec::new())))
                    } else {
                        let n = rng.gen_range(0..3);
                        let mut params: Vec<String> =
                            VARS.choose_multiple(&mut rng, n).map(|s| s.to_string()).collect();
                        params.sort();
                        let body = rng.gen_bool(0.6).then(|| gen_term(&mut rng, depth, &mut params.clone()));
                        (params, body)
                    };
                    Declaration {
                        kind,
                        name: format!("d{di}"),
                        params,
                        body,
                    }
                })
                .collect();
            Theory {
                name: format!("T{ti}"),
                decls,
            }
        })
        .collect();
    Document {
        path: format!("gen{seed}.lang"),
        theories,
    }
}

/// Node counts by kind, computed without the library's counter mapping.
#[derive(Debug, Default, PartialEq)]
pub struct Recount {
    pub kinds: std::collections::BTreeMap<&'static str, u64>,
    pub depth: u64,
    pub args: u64,
}

impl Recount {
    pub fn add(&mut self, t: &Term) {
        let d = self.visit(t, 1);
        self.depth = self.depth.max(d);
    }

    fn visit(&mut self, t: &Term, level: u64) -> u64 {
        let (kind, kids): (&'static str, Vec<&Term>) = match t {
            Term::And(ts) => ("and", ts.iter().collect()),
            Term::Or(ts) => ("or", ts.iter().collect()),
            Term::Not(a) => ("not", vec![a]),
            Term::Imp(a, b) => ("imp", vec![a, b]),
            Term::Iff(a, b) => ("iff", vec![a, b]),
            Term::Ite(a, b, c) => ("if", vec![a, b, c]),
            Term::Let { value, body, .. } => ("let", vec![value, body]),
            Term::Cast { term, .. } => ("as", vec![term]),
            Term::Eps { body, .. } => ("eps", vec![body]),
            Term::Match { scrutinee, branches } => {
                let mut v: Vec<&Term> = vec![scrutinee];
                for (p, b) in branches {
                    v.push(p);
                    v.push(b);
                }
                ("case", v)
            }
            Term::Forall { body, .. } => ("forall", vec![body]),
            Term::Exists { body, .. } => ("exists", vec![body]),
            Term::Apply { args, .. } => {
                self.args += args.len() as u64;
                ("func", args.iter().collect())
            }
            Term::Var(_) => ("var", vec![]),
            Term::True => ("true", vec![]),
            Term::False => ("false", vec![]),
            Term::Wildcard => ("wild", vec![]),
            Term::Int(_) => ("int", vec![]),
            Term::Float(_) => ("float", vec![]),
            Term::ConstRef(_) => ("zero_ar", vec![]),
        };
        *self.kinds.entry(kind).or_default() += 1;
        kids.into_iter().map(|k| self.visit(k, level + 1)).max().unwrap_or(level)
    }

    pub fn get(&self, k: &str) -> u64 {
        self.kinds.get(k).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.kinds.values().sum()
    }
}

/// Recount of a goal with the lemmas declared before it in its theory.
pub fn recount_scope(th: &Theory, goal_at: usize) -> Recount {
    let mut r = Recount::default();
    for d in &th.decls[..goal_at] {
        if d.kind == DeclKind::Lemma {
            r.add(d.body.as_ref().unwrap());
        }
    }
    r.add(th.decls[goal_at].body.as_ref().unwrap());
    r
}

// ---- exhaustive split oracle ----

fn two_pass_sse(ts: &TrainingSet, rows: &[usize]) -> f64 {
    let w: f64 = rows.iter().map(|&i| ts.rows[i].weight).sum();
    if w <= 0.0 {
        return 0.0;
    }
    (0..ts.roster.len())
        .map(|k| {
            let mean = rows.iter().map(|&i| ts.rows[i].weight * ts.rows[i].costs[k]).sum::<f64>() / w;
            rows.iter()
                .map(|&i| ts.rows[i].weight * (ts.rows[i].costs[k] - mean).powi(2))
                .sum::<f64>()
        })
        .sum()
}

/// Every (feature, threshold) candidate scored from scratch; ties within
/// `tol` go to the lower feature, then the lower threshold.
pub fn oracle_split(ts: &TrainingSet, rows: &[usize], features: &[usize], min_leaf: usize, tol: f64) -> Option<Split> {
    let mut best: Option<Split> = None;
    for &f in features {
        let mut values: Vec<f64> = rows.iter().map(|&i| ts.rows[i].features[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let threshold = (pair[0] + pair[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| ts.rows[i].features[f] <= pair[0]);
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let impurity = two_pass_sse(ts, &l) + two_pass_sse(ts, &r);
            if best.map_or(true, |b| impurity < b.impurity - tol) {
                best = Some(Split {
                    feature: f,
                    threshold,
                    impurity,
                });
            }
        }
    }
    best
}
