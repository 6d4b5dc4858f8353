use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use portfolio_core::features::{extract_document_features, FeatureVector, TaskId, FEATURE_NAMES};
use portfolio_core::logic::{parse_document_at, Document};
use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::Format;

/// Rows of named cells, written as CSV or as a JSON array of objects.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.headers)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(cell))?;
                }
                Ok(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
            }
            Format::Json => {
                let items: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj: Map<String, Value> = self.headers.iter().cloned().zip(row.iter().cloned()).collect();
                        Value::Object(obj)
                    })
                    .collect();
                let mut out = serde_json::to_vec_pretty(&items)?;
                out.push(b'\n');
                Ok(out)
            }
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        // Plain decimal form, so 3.0 prints as 3.
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.to_string(),
            (None, Some(f)) => f.to_string(),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

/// Seconds rounded to the microsecond, hiding float noise from summed times.
pub fn secs(x: f64) -> Value {
    num((x * 1e6).round() / 1e6)
}

pub fn text(s: impl Into<String>) -> Value {
    Value::String(s.into())
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("writing {}", path.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes to `out`, or to standard output when absent.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn read_document(path: &Path) -> Result<Document> {
    let src = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let name = path.display().to_string();
    parse_document_at(&name, &src).map_err(|e| anyhow::anyhow!("{name}:{e}"))
}

pub fn read_documents(paths: &[PathBuf]) -> Result<Vec<Document>> {
    paths.par_iter().map(|p| read_document(p)).collect()
}

/// Task features of every goal in `docs`, sorted by task id.
pub fn document_features(docs: &[Document]) -> Result<Vec<(TaskId, FeatureVector)>> {
    let mut all: Vec<(TaskId, FeatureVector)> = docs.iter().flat_map(extract_document_features).collect();
    all.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = all.windows(2).find(|w| w[0].0 == w[1].0) {
        bail!("task id {} occurs twice; document file names must be unique", w[0].0);
    }
    Ok(all)
}

pub fn features_table(rows: &[(TaskId, FeatureVector)]) -> Table {
    let mut t = Table::new(std::iter::once("task_id").chain(FEATURE_NAMES));
    for (id, fv) in rows {
        let mut row = vec![text(id.to_string())];
        row.extend(fv.to_array().iter().map(|&x| num(x)));
        t.push(row);
    }
    t
}

/// Reads a features CSV as written by `extract`.
pub fn read_features_csv(path: &Path) -> Result<Vec<(TaskId, FeatureVector)>> {
    let ctx = || format!("reading features {}", path.display());
    let mut rdr = csv::Reader::from_path(path).with_context(ctx)?;
    let header: Vec<String> = rdr.headers().with_context(ctx)?.iter().map(String::from).collect();
    let expected: Vec<&str> = std::iter::once("task_id").chain(FEATURE_NAMES).collect();
    if header != expected {
        bail!("{}: header must be `{}`", path.display(), expected.join(","));
    }
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.with_context(ctx)?;
        let id = TaskId::parse(&rec[0])
            .with_context(|| format!("{}:{line}: bad task id `{}`", path.display(), &rec[0]))?;
        let values: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}:{line}: feature values must be numbers", path.display()))?;
        let fv = FeatureVector::from_array(&values).with_context(|| format!("{}:{line}", path.display()))?;
        out.push((id, fv));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = out.windows(2).find(|w| w[0].0 == w[1].0) {
        bail!("{}: task id {} occurs twice", path.display(), w[0].0);
    }
    Ok(out)
}
