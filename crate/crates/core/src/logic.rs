//! A small S-expression goal language.
//!
//! Documents hold theories, theories hold declarations, and goal/lemma/axiom
//! declarations carry a formula. Each term constructor corresponds to exactly
//! one syntactic counter in [`crate::features`].
//!
//! ```text
//! (theory Lists
//!   (function length (l))
//!   (lemma length_nonneg (forall (l) (ge (length l) 0)))
//!   (goal g (exists (x) (eq (length x) 0))))
//! ```
//!
//! An identifier in term position is a variable when an enclosing binder
//! (`forall`, `exists`, `let`, `eps`, or a function parameter list) introduces
//! it, and a reference to a zero-arity symbol otherwise.

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

/// Words that can never be used as identifiers.
pub const RESERVED: &[&str] = &[
    "theory", "goal", "lemma", "axiom", "function", "predicate", "true", "false", "and", "or",
    "not", "ite", "let", "as", "eps", "match", "forall", "exists",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    pub path: String,
    pub theories: Vec<Theory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theory {
    pub name: String,
    pub decls: Vec<Declaration>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeclKind {
    Goal,
    Lemma,
    Axiom,
    Function,
    Predicate,
}

impl DeclKind {
    pub fn keyword(self) -> &'static str {
        match self {
            DeclKind::Goal => "goal",
            DeclKind::Lemma => "lemma",
            DeclKind::Axiom => "axiom",
            DeclKind::Function => "function",
            DeclKind::Predicate => "predicate",
        }
    }

    fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "goal" => DeclKind::Goal,
            "lemma" => DeclKind::Lemma,
            "axiom" => DeclKind::Axiom,
            "function" => DeclKind::Function,
            "predicate" => DeclKind::Predicate,
            _ => return None,
        })
    }

    /// Goals, lemmas and axioms are formulas; the rest are symbol definitions.
    pub fn is_formula(self) -> bool {
        matches!(self, DeclKind::Goal | DeclKind::Lemma | DeclKind::Axiom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Declaration {
    pub kind: DeclKind,
    pub name: String,
    /// Parameter names of a function or predicate; always empty for formulas.
    pub params: Vec<String>,
    /// Absent only for declared-but-undefined symbols.
    pub body: Option<Term>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    And(Vec<Term>),
    Or(Vec<Term>),
    Not(Box<Term>),
    Imp(Box<Term>, Box<Term>),
    Iff(Box<Term>, Box<Term>),
    Ite(Box<Term>, Box<Term>, Box<Term>),
    Let {
        name: String,
        value: Box<Term>,
        body: Box<Term>,
    },
    Cast {
        term: Box<Term>,
        ty: String,
    },
    Eps {
        name: String,
        body: Box<Term>,
    },
    Match {
        scrutinee: Box<Term>,
        branches: Vec<(Term, Term)>,
    },
    Forall {
        vars: Vec<String>,
        body: Box<Term>,
    },
    Exists {
        vars: Vec<String>,
        body: Box<Term>,
    },
    Apply {
        symbol: String,
        args: Vec<Term>,
    },
    Var(String),
    True,
    False,
    Wildcard,
    Int(String),
    Float(String),
    ConstRef(String),
}

impl Term {
    /// Direct subterms in source order.
    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::And(ts) | Term::Or(ts) => ts.iter().collect(),
            Term::Not(t) => vec![t],
            Term::Imp(a, b) | Term::Iff(a, b) => vec![a, b],
            Term::Ite(c, t, e) => vec![c, t, e],
            Term::Let { value, body, .. } => vec![value, body],
            Term::Cast { term, .. } => vec![term],
            Term::Eps { body, .. } | Term::Forall { body, .. } | Term::Exists { body, .. } => {
                vec![body]
            }
            Term::Match {
                scrutinee,
                branches,
            } => {
                let mut out: Vec<&Term> = vec![scrutinee];
                for (pat, body) in branches {
                    out.push(pat);
                    out.push(body);
                }
                out
            }
            Term::Apply { args, .. } => args.iter().collect(),
            Term::Var(_)
            | Term::True
            | Term::False
            | Term::Wildcard
            | Term::Int(_)
            | Term::Float(_)
            | Term::ConstRef(_) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("invalid token `{0}`")]
    Lexical(String),
    #[error("unexpected end of input")]
    UnexpectedEof,
    #[error("unexpected `)`")]
    UnbalancedClose,
    #[error("expected {expected}, found `{found}`")]
    Unexpected { expected: &'static str, found: String },
    #[error("`{construct}` expects {expected}")]
    Arity {
        construct: &'static str,
        expected: &'static str,
    },
    #[error("bound variable `{0}` cannot be applied as a function symbol")]
    BinderReference(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

/// True when `s` is usable as a theory, declaration, symbol or variable name.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if is_ident_start(c) => {}
        _ => return false,
    }
    s != "_" && chars.all(is_ident_char) && !RESERVED.contains(&s)
}

fn is_int(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn is_float(s: &str) -> bool {
    match s.split_once('.') {
        Some((a, b)) => is_int(a) && is_int(b),
        None => false,
    }
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                chars.next();
                line += 1;
                column = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                column += 1;
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' | ')' => {
                chars.next();
                out.push(Token {
                    tok: if c == '(' { Tok::Open } else { Tok::Close },
                    line,
                    column,
                });
                column += 1;
            }
            _ => {
                let start = column;
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    word.push(c);
                    chars.next();
                    column += 1;
                }
                let ok = word == "_"
                    || word == "->"
                    || word == "<->"
                    || is_int(&word)
                    || is_float(&word)
                    || (word.starts_with(is_ident_start) && word.chars().all(is_ident_char));
                if !ok {
                    return Err(ParseError {
                        line,
                        column: start,
                        kind: ParseErrorKind::Lexical(word),
                    });
                }
                out.push(Token {
                    tok: Tok::Atom(word),
                    line,
                    column: start,
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    eof: (usize, usize),
    bound: Vec<String>,
}

impl Parser {
    fn err_at(&self, tok: &Token, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: tok.line,
            column: tok.column,
            kind,
        }
    }

    fn eof_err(&self) -> ParseError {
        ParseError {
            line: self.eof.0,
            column: self.eof.1,
            kind: ParseErrorKind::UnexpectedEof,
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<Token, ParseError> {
        let t = self.toks.get(self.pos).cloned().ok_or_else(|| self.eof_err())?;
        self.pos += 1;
        Ok(t)
    }

    fn expect_open(&mut self, expected: &'static str) -> Result<Token, ParseError> {
        let t = self.next()?;
        match t.tok {
            Tok::Open => Ok(t),
            _ => Err(self.err_at(
                &t,
                ParseErrorKind::Unexpected {
                    expected,
                    found: describe(&t.tok),
                },
            )),
        }
    }

    fn expect_close(&mut self, construct: &'static str, expected: &'static str) -> Result<(), ParseError> {
        let t = self.next()?;
        match t.tok {
            Tok::Close => Ok(()),
            _ => Err(self.err_at(&t, ParseErrorKind::Arity { construct, expected })),
        }
    }

    fn at_close(&self) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Close, .. }))
    }

    fn ident(&mut self, expected: &'static str) -> Result<(String, Token), ParseError> {
        let t = self.next()?;
        match &t.tok {
            Tok::Atom(a) if is_identifier(a) => Ok((a.clone(), t.clone())),
            other => Err(self.err_at(
                &t,
                ParseErrorKind::Unexpected {
                    expected,
                    found: describe(other),
                },
            )),
        }
    }

    fn document(&mut self, path: &str) -> Result<Document, ParseError> {
        let mut theories: Vec<Theory> = Vec::new();
        while let Some(t) = self.peek().cloned() {
            if t.tok == Tok::Close {
                return Err(self.err_at(&t, ParseErrorKind::UnbalancedClose));
            }
            self.expect_open("`(theory ...)`")?;
            let kw = self.next()?;
            if kw.tok != Tok::Atom("theory".into()) {
                return Err(self.err_at(
                    &kw,
                    ParseErrorKind::Unexpected {
                        expected: "`theory`",
                        found: describe(&kw.tok),
                    },
                ));
            }
            let (name, name_tok) = self.ident("theory name")?;
            if theories.iter().any(|th| th.name == name) {
                return Err(self.err_at(&name_tok, ParseErrorKind::DuplicateName(name)));
            }
            let mut decls: Vec<Declaration> = Vec::new();
            while !self.at_close() {
                let (decl, tok) = self.declaration()?;
                if decls.iter().any(|d| d.name == decl.name) {
                    return Err(self.err_at(&tok, ParseErrorKind::DuplicateName(decl.name)));
                }
                decls.push(decl);
            }
            self.next()?;
            theories.push(Theory { name, decls });
        }
        Ok(Document {
            path: path.to_string(),
            theories,
        })
    }

    fn declaration(&mut self) -> Result<(Declaration, Token), ParseError> {
        self.expect_open("declaration")?;
        let kw = self.next()?;
        let kind = match &kw.tok {
            Tok::Atom(a) => DeclKind::from_keyword(a),
            _ => None,
        }
        .ok_or_else(|| {
            self.err_at(
                &kw,
                ParseErrorKind::Unexpected {
                    expected: "declaration keyword",
                    found: describe(&kw.tok),
                },
            )
        })?;
        let (name, name_tok) = self.ident("declaration name")?;
        let decl = if kind.is_formula() {
            if self.at_close() {
                let t = self.next()?;
                return Err(self.err_at(
                    &t,
                    ParseErrorKind::Arity {
                        construct: kind.keyword(),
                        expected: "a name and one formula",
                    },
                ));
            }
            let body = self.term()?;
            self.expect_close(kind.keyword(), "a name and one formula")?;
            Declaration {
                kind,
                name,
                params: Vec::new(),
                body: Some(body),
            }
        } else {
            self.expect_open("parameter list")?;
            let mut params = Vec::new();
            while !self.at_close() {
                let (p, tok) = self.ident("parameter name")?;
                if params.contains(&p) {
                    return Err(self.err_at(&tok, ParseErrorKind::DuplicateName(p)));
                }
                params.push(p);
            }
            self.next()?;
            let body = if self.at_close() {
                None
            } else {
                let mark = self.bound.len();
                self.bound.extend(params.iter().cloned());
                let body = self.term();
                self.bound.truncate(mark);
                Some(body?)
            };
            self.expect_close(kind.keyword(), "a parameter list and at most one body")?;
            Declaration {
                kind,
                name,
                params,
                body,
            }
        };
        Ok((decl, name_tok))
    }

    fn binder_list(&mut self) -> Result<Vec<String>, ParseError> {
        self.expect_open("binder list")?;
        let mut vars = Vec::new();
        while !self.at_close() {
            let (v, tok) = self.ident("bound variable")?;
            if vars.contains(&v) {
                return Err(self.err_at(&tok, ParseErrorKind::DuplicateName(v)));
            }
            vars.push(v);
        }
        self.next()?;
        Ok(vars)
    }

    fn with_bound<T>(
        &mut self,
        names: &[String],
        f: impl FnOnce(&mut Self) -> Result<T, ParseError>,
    ) -> Result<T, ParseError> {
        let mark = self.bound.len();
        self.bound.extend(names.iter().cloned());
        let r = f(self);
        self.bound.truncate(mark);
        r
    }

    fn terms_until_close(&mut self) -> Result<Vec<Term>, ParseError> {
        let mut out = Vec::new();
        while !self.at_close() {
            if self.peek().is_none() {
                return Err(self.eof_err());
            }
            out.push(self.term()?);
        }
        self.next()?;
        Ok(out)
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let t = self.next()?;
        let atom = match &t.tok {
            Tok::Close => return Err(self.err_at(&t, ParseErrorKind::UnbalancedClose)),
            Tok::Atom(a) => a.clone(),
            Tok::Open => return self.compound(),
        };
        Ok(match atom.as_str() {
            "true" => Term::True,
            "false" => Term::False,
            "_" => Term::Wildcard,
            a if is_int(a) => Term::Int(atom),
            a if is_float(a) => Term::Float(atom),
            a if is_identifier(a) => {
                if self.bound.iter().any(|b| b == a) {
                    Term::Var(atom)
                } else {
                    Term::ConstRef(atom)
                }
            }
            _ => {
                return Err(self.err_at(
                    &t,
                    ParseErrorKind::Unexpected {
                        expected: "term",
                        found: atom,
                    },
                ))
            }
        })
    }

    fn compound(&mut self) -> Result<Term, ParseError> {
        let head = self.next()?;
        let name = match &head.tok {
            Tok::Atom(a) => a.clone(),
            other => {
                return Err(self.err_at(
                    &head,
                    ParseErrorKind::Unexpected {
                        expected: "operator or function symbol",
                        found: describe(other),
                    },
                ))
            }
        };
        let arity = |construct: &'static str, expected: &'static str| ParseErrorKind::Arity {
            construct,
            expected,
        };
        match name.as_str() {
            "and" | "or" => {
                let construct = if name == "and" { "and" } else { "or" };
                let args = self.terms_until_close()?;
                if args.len() < 2 {
                    return Err(self.err_at(&head, arity(construct, "at least 2 operands")));
                }
                Ok(if construct == "and" {
                    Term::And(args)
                } else {
                    Term::Or(args)
                })
            }
            "not" => {
                let args = self.terms_until_close()?;
                let [a]: [Term; 1] = args
                    .try_into()
                    .map_err(|_| self.err_at(&head, arity("not", "exactly 1 operand")))?;
                Ok(Term::Not(Box::new(a)))
            }
            "->" | "<->" => {
                let construct = if name == "->" { "->" } else { "<->" };
                let args = self.terms_until_close()?;
                let [a, b]: [Term; 2] = args
                    .try_into()
                    .map_err(|_| self.err_at(&head, arity(construct, "exactly 2 operands")))?;
                Ok(if construct == "->" {
                    Term::Imp(Box::new(a), Box::new(b))
                } else {
                    Term::Iff(Box::new(a), Box::new(b))
                })
            }
            "ite" => {
                let args = self.terms_until_close()?;
                let [c, t, e]: [Term; 3] = args
                    .try_into()
                    .map_err(|_| self.err_at(&head, arity("ite", "exactly 3 operands")))?;
                Ok(Term::Ite(Box::new(c), Box::new(t), Box::new(e)))
            }
            "let" => {
                let (var, _) = self.ident("let-bound variable")?;
                let value = self.term()?;
                let body = self.with_bound(std::slice::from_ref(&var), |p| p.term())?;
                self.expect_close("let", "a variable, a value and a body")?;
                Ok(Term::Let {
                    name: var,
                    value: Box::new(value),
                    body: Box::new(body),
                })
            }
            "as" => {
                let term = self.term()?;
                let (ty, _) = self.ident("type name")?;
                self.expect_close("as", "a term and a type name")?;
                Ok(Term::Cast {
                    term: Box::new(term),
                    ty,
                })
            }
            "eps" => {
                let (var, _) = self.ident("eps-bound variable")?;
                let body = self.with_bound(std::slice::from_ref(&var), |p| p.term())?;
                self.expect_close("eps", "a variable and a body")?;
                Ok(Term::Eps {
                    name: var,
                    body: Box::new(body),
                })
            }
            "match" => {
                let scrutinee = self.term()?;
                let mut branches = Vec::new();
                while !self.at_close() {
                    self.expect_open("match branch")?;
                    let pat = self.term()?;
                    let body = self.term()?;
                    self.expect_close("match branch", "a pattern and a body")?;
                    branches.push((pat, body));
                }
                self.next()?;
                if branches.is_empty() {
                    return Err(self.err_at(&head, arity("match", "at least 1 branch")));
                }
                Ok(Term::Match {
                    scrutinee: Box::new(scrutinee),
                    branches,
                })
            }
            "forall" | "exists" => {
                let vars = self.binder_list()?;
                if vars.is_empty() {
                    return Err(self.err_at(&head, arity(if name == "forall" { "forall" } else { "exists" }, "at least 1 bound variable")));
                }
                let body = self.with_bound(&vars, |p| p.term())?;
                let construct = if name == "forall" { "forall" } else { "exists" };
                self.expect_close(construct, "a binder list and a body")?;
                let body = Box::new(body);
                Ok(if construct == "forall" {
                    Term::Forall { vars, body }
                } else {
                    Term::Exists { vars, body }
                })
            }
            sym if is_identifier(sym) => {
                if self.bound.iter().any(|b| b == sym) {
                    return Err(self.err_at(&head, ParseErrorKind::BinderReference(name)));
                }
                let args = self.terms_until_close()?;
                if args.is_empty() {
                    return Err(self.err_at(&head, arity("application", "at least 1 argument")));
                }
                Ok(Term::Apply { symbol: name, args })
            }
            _ => Err(self.err_at(
                &head,
                ParseErrorKind::Unexpected {
                    expected: "operator or function symbol",
                    found: name,
                },
            )),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Open => "(".into(),
        Tok::Close => ")".into(),
        Tok::Atom(a) => a.clone(),
    }
}

/// Parses a whole document. `path` is recorded on the result and used to
/// build task identifiers.
pub fn parse_document_at(path: &str, source: &str) -> Result<Document, ParseError> {
    let toks = lex(source)?;
    let eof = source
        .lines()
        .enumerate()
        .last()
        .map(|(i, l)| (i + 1, l.chars().count() + 1))
        .unwrap_or((1, 1));
    let mut p = Parser {
        toks,
        pos: 0,
        eof,
        bound: Vec::new(),
    };
    p.document(path)
}

pub fn parse_document(source: &str) -> Result<Document, ParseError> {
    parse_document_at("", source)
}

/// Prints a document in canonical form. The empty document prints as "".
pub fn print_document(d: &Document) -> String {
    let mut out = String::new();
    for th in &d.theories {
        let _ = writeln!(out, "(theory {}", th.name);
        for decl in &th.decls {
            out.push_str("  (");
            out.push_str(decl.kind.keyword());
            out.push(' ');
            out.push_str(&decl.name);
            if !decl.kind.is_formula() {
                out.push_str(" (");
                out.push_str(&decl.params.join(" "));
                out.push(')');
            }
            if let Some(body) = &decl.body {
                out.push(' ');
                out.push_str(&body.to_string());
            }
            out.push_str(")\n");
        }
        out.push_str(")\n");
    }
    out
}

fn write_list(f: &mut fmt::Formatter<'_>, head: &str, items: &[&Term]) -> fmt::Result {
    write!(f, "({head}")?;
    for t in items {
        write!(f, " {t}")?;
    }
    f.write_str(")")
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::And(ts) => write_list(f, "and", &ts.iter().collect::<Vec<_>>()),
            Term::Or(ts) => write_list(f, "or", &ts.iter().collect::<Vec<_>>()),
            Term::Not(t) => write!(f, "(not {t})"),
            Term::Imp(a, b) => write!(f, "(-> {a} {b})"),
            Term::Iff(a, b) => write!(f, "(<-> {a} {b})"),
            Term::Ite(c, t, e) => write!(f, "(ite {c} {t} {e})"),
            Term::Let { name, value, body } => write!(f, "(let {name} {value} {body})"),
            Term::Cast { term, ty } => write!(f, "(as {term} {ty})"),
            Term::Eps { name, body } => write!(f, "(eps {name} {body})"),
            Term::Match {
                scrutinee,
                branches,
            } => {
                write!(f, "(match {scrutinee}")?;
                for (p, b) in branches {
                    write!(f, " ({p} {b})")?;
                }
                f.write_str(")")
            }
            Term::Forall { vars, body } => write!(f, "(forall ({}) {body})", vars.join(" ")),
            Term::Exists { vars, body } => write!(f, "(exists ({}) {body})", vars.join(" ")),
            Term::Apply { symbol, args } => write_list(f, symbol, &args.iter().collect::<Vec<_>>()),
            Term::Var(s) | Term::ConstRef(s) | Term::Int(s) | Term::Float(s) => f.write_str(s),
            Term::True => f.write_str("true"),
            Term::False => f.write_str("false"),
            Term::Wildcard => f.write_str("_"),
        }
    }
}

/// Checks the structural invariants a hand-built AST must satisfy to survive
/// a print/parse round trip. Returns the first violation found.
pub fn validate(d: &Document) -> Result<(), String> {
    let mut names = HashSet::new();
    for th in &d.theories {
        if !is_identifier(&th.name) {
            return Err(format!("bad theory name `{}`", th.name));
        }
        if !names.insert(th.name.as_str()) {
            return Err(format!("duplicate theory `{}`", th.name));
        }
        let mut decl_names = HashSet::new();
        for decl in &th.decls {
            if !is_identifier(&decl.name) || !decl_names.insert(decl.name.as_str()) {
                return Err(format!("bad or duplicate declaration `{}`", decl.name));
            }
            if decl.kind.is_formula() && (decl.body.is_none() || !decl.params.is_empty()) {
                return Err(format!("formula `{}` needs a body and no parameters", decl.name));
            }
            let mut scope: Vec<String> = decl.params.clone();
            if let Some(body) = &decl.body {
                validate_term(body, &mut scope)?;
            }
        }
    }
    Ok(())
}

fn validate_term(t: &Term, scope: &mut Vec<String>) -> Result<(), String> {
    let bound = |scope: &Vec<String>, s: &str| scope.iter().any(|b| b == s);
    match t {
        Term::And(ts) | Term::Or(ts) if ts.len() < 2 => return Err("and/or arity".into()),
        Term::Match { branches, .. } if branches.is_empty() => return Err("empty match".into()),
        Term::Forall { vars, .. } | Term::Exists { vars, .. } if vars.is_empty() => {
            return Err("empty binder".into())
        }
        Term::Apply { symbol, args } => {
            if args.is_empty() || !is_identifier(symbol) || bound(scope, symbol) {
                return Err(format!("bad application of `{symbol}`"));
            }
        }
        Term::Var(v) if !bound(scope, v) => return Err(format!("unbound variable `{v}`")),
        Term::ConstRef(c) if !is_identifier(c) || bound(scope, c) => {
            return Err(format!("`{c}` is bound or not an identifier"))
        }
        Term::Int(s) if !is_int(s) => return Err(format!("bad int `{s}`")),
        Term::Float(s) if !is_float(s) => return Err(format!("bad float `{s}`")),
        _ => {}
    }
    let introduced: Vec<String> = match t {
        Term::Forall { vars, .. } | Term::Exists { vars, .. } => vars.clone(),
        Term::Eps { name, .. } => vec![name.clone()],
        _ => Vec::new(),
    };
    if let Term::Let { value, body, name } = t {
        validate_term(value, scope)?;
        scope.push(name.clone());
        let r = validate_term(body, scope);
        scope.pop();
        return r;
    }
    let mark = scope.len();
    scope.extend(introduced);
    let r = t.children().into_iter().try_for_each(|c| validate_term(c, scope));
    scope.truncate(mark);
    r
}
