//! Static syntactic features of a proof task.
//!
//! A task is a goal together with the lemmas declared before it in the same
//! theory. Every term node bumps exactly one of twenty counters; `depth` and
//! `avg_arity` describe the shape of the trees, and six aggregates sum groups
//! of counters.

use std::fmt;

use crate::logic::{DeclKind, Declaration, Document, Term};

/// Number of entries in [`FeatureVector::to_array`].
pub const FEATURE_COUNT: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Counter {
    And,
    Or,
    Not,
    Let,
    As,
    Eps,
    Func,
    If,
    Iff,
    Imp,
    Case,
    Var,
    True,
    False,
    Wild,
    ZeroAr,
    Int,
    Float,
    Forall,
    Exists,
}

impl Counter {
    pub const ALL: [Counter; 20] = [
        Counter::And,
        Counter::Or,
        Counter::Not,
        Counter::Let,
        Counter::As,
        Counter::Eps,
        Counter::Func,
        Counter::If,
        Counter::Iff,
        Counter::Imp,
        Counter::Case,
        Counter::Var,
        Counter::True,
        Counter::False,
        Counter::Wild,
        Counter::ZeroAr,
        Counter::Int,
        Counter::Float,
        Counter::Forall,
        Counter::Exists,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        FEATURE_NAMES[self.index()]
    }

    /// The counter a term node increments.
    pub fn of(term: &Term) -> Counter {
        match term {
            Term::And(_) => Counter::And,
            Term::Or(_) => Counter::Or,
            Term::Not(_) => Counter::Not,
            Term::Imp(..) => Counter::Imp,
            Term::Iff(..) => Counter::Iff,
            Term::Ite(..) => Counter::If,
            Term::Let { .. } => Counter::Let,
            Term::Cast { .. } => Counter::As,
            Term::Eps { .. } => Counter::Eps,
            Term::Match { .. } => Counter::Case,
            Term::Forall { .. } => Counter::Forall,
            Term::Exists { .. } => Counter::Exists,
            Term::Apply { .. } => Counter::Func,
            Term::Var(_) => Counter::Var,
            Term::True => Counter::True,
            Term::False => Counter::False,
            Term::Wildcard => Counter::Wild,
            Term::Int(_) => Counter::Int,
            Term::Float(_) => Counter::Float,
            Term::ConstRef(_) => Counter::ZeroAr,
        }
    }
}

/// Column names in canonical order, matching the `extract` CSV header.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "and", "or", "not", "let", "as", "eps", "func", "if", "iff", "imp", "case", "var", "true",
    "false", "wild", "zero_ar", "int", "float", "forall", "exists", "depth", "avg_arity",
    "divisor", "conds", "ops", "leaves", "quants", "size",
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    counts: [u64; 20],
    pub depth: u64,
    pub avg_arity: f64,
}

impl FeatureVector {
    pub fn get(&self, c: Counter) -> u64 {
        self.counts[c.index()]
    }

    fn sum(&self, cs: &[Counter]) -> u64 {
        cs.iter().map(|&c| self.get(c)).sum()
    }

    pub fn divisor(&self) -> u64 {
        use Counter::*;
        self.sum(&[And, Or, Not, Let, As, Eps, Func])
    }

    pub fn conds(&self) -> u64 {
        use Counter::*;
        self.sum(&[If, Iff, Imp, Case])
    }

    pub fn ops(&self) -> u64 {
        self.divisor() + self.conds()
    }

    pub fn leaves(&self) -> u64 {
        use Counter::*;
        self.sum(&[Var, True, False, Wild, ZeroAr, Int, Float])
    }

    pub fn quants(&self) -> u64 {
        self.get(Counter::Forall) + self.get(Counter::Exists)
    }

    pub fn size(&self) -> u64 {
        self.ops() + self.leaves() + self.quants()
    }

    /// Counters, then depth and avg-arity, then the six aggregates.
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        for (o, &c) in out.iter_mut().zip(self.counts.iter()) {
            *o = c as f64;
        }
        out[20] = self.depth as f64;
        out[21] = self.avg_arity;
        out[22] = self.divisor() as f64;
        out[23] = self.conds() as f64;
        out[24] = self.ops() as f64;
        out[25] = self.leaves() as f64;
        out[26] = self.quants() as f64;
        out[27] = self.size() as f64;
        out
    }

    /// Inverse of [`to_array`](Self::to_array). Aggregates are recomputed, so
    /// an array whose aggregate entries disagree with its counters is rejected.
    pub fn from_array(a: &[f64]) -> Result<Self, FeatureArrayError> {
        if a.len() != FEATURE_COUNT {
            return Err(FeatureArrayError::Length(a.len()));
        }
        let whole = |i: usize| -> Result<u64, FeatureArrayError> {
            let x = a[i];
            if x.is_finite() && x >= 0.0 && x.fract() == 0.0 {
                Ok(x as u64)
            } else {
                Err(FeatureArrayError::NotACount(FEATURE_NAMES[i], x))
            }
        };
        let mut v = FeatureVector::default();
        for i in 0..20 {
            v.counts[i] = whole(i)?;
        }
        v.depth = whole(20)?;
        if !(a[21].is_finite() && a[21] >= 0.0) {
            return Err(FeatureArrayError::NotACount("avg_arity", a[21]));
        }
        v.avg_arity = a[21];
        let expected = v.to_array();
        for i in 22..FEATURE_COUNT {
            if whole(i)? as f64 != expected[i] {
                return Err(FeatureArrayError::Aggregate(FEATURE_NAMES[i]));
            }
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureArrayError {
    #[error("expected {FEATURE_COUNT} features, got {0}")]
    Length(usize),
    #[error("feature `{0}` must be a non-negative integer, got {1}")]
    NotACount(&'static str, f64),
    #[error("aggregate `{0}` does not match its counters")]
    Aggregate(&'static str),
}

/// A goal and the lemmas counted alongside it.
#[derive(Debug, Clone, Copy)]
pub struct TaskScope<'a> {
    pub goal: &'a Declaration,
    pub context: &'a [&'a Declaration],
}

#[derive(Default)]
struct Tally {
    counts: [u64; 20],
    depth: u64,
    args: u64,
}

impl Tally {
    fn visit(&mut self, t: &Term, level: u64) {
        self.counts[Counter::of(t).index()] += 1;
        self.depth = self.depth.max(level);
        if let Term::Apply { args, .. } = t {
            self.args += args.len() as u64;
        }
        for c in t.children() {
            self.visit(c, level + 1);
        }
    }
}

pub fn extract_task_features(scope: TaskScope<'_>) -> FeatureVector {
    let mut tally = Tally::default();
    for decl in scope.context.iter().copied().chain(std::iter::once(scope.goal)) {
        if let Some(body) = &decl.body {
            tally.visit(body, 1);
        }
    }
    let funcs = tally.counts[Counter::Func.index()];
    FeatureVector {
        counts: tally.counts,
        depth: tally.depth,
        avg_arity: if funcs == 0 {
            0.0
        } else {
            tally.args as f64 / funcs as f64
        },
    }
}

/// `file:theory:goal`, where `file` is the final component of the document path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId {
    pub file: String,
    pub theory: String,
    pub goal: String,
}

impl TaskId {
    pub fn new(file: impl Into<String>, theory: impl Into<String>, goal: impl Into<String>) -> Self {
        TaskId {
            file: file.into(),
            theory: theory.into(),
            goal: goal.into(),
        }
    }

    /// Splits on the last two colons; theory and goal names never contain one.
    pub fn parse(s: &str) -> Option<TaskId> {
        let mut parts = s.rsplitn(3, ':');
        let goal = parts.next()?;
        let theory = parts.next()?;
        let file = parts.next()?;
        if goal.is_empty() || theory.is_empty() {
            return None;
        }
        Some(TaskId::new(file, theory, goal))
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.theory, self.goal)
    }
}

/// File component used in task ids for a document path.
pub fn file_key(path: &str) -> &str {
    std::path::Path::new(path)
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or(path)
}

/// One entry per goal, in declaration order, with the scope each goal is
/// counted over.
pub fn task_scopes(d: &Document) -> Vec<(TaskId, Declaration, Vec<Declaration>)> {
    let file = file_key(&d.path);
    let mut out = Vec::new();
    for th in &d.theories {
        let mut lemmas: Vec<Declaration> = Vec::new();
        for decl in &th.decls {
            match decl.kind {
                DeclKind::Lemma => lemmas.push(decl.clone()),
                DeclKind::Goal => out.push((
                    TaskId::new(file, th.name.clone(), decl.name.clone()),
                    decl.clone(),
                    lemmas.clone(),
                )),
                _ => {}
            }
        }
    }
    out
}

pub fn extract_document_features(d: &Document) -> Vec<(TaskId, FeatureVector)> {
    let file = file_key(&d.path);
    let mut out = Vec::new();
    for th in &d.theories {
        let mut lemmas: Vec<&Declaration> = Vec::new();
        for decl in &th.decls {
            match decl.kind {
                DeclKind::Lemma => lemmas.push(decl),
                DeclKind::Goal => {
                    let fv = extract_task_features(TaskScope {
                        goal: decl,
                        context: &lemmas,
                    });
                    out.push((TaskId::new(file, th.name.clone(), decl.name.clone()), fv));
                }
                _ => {}
            }
        }
    }
    out
}
