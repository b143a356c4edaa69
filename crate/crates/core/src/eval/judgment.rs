//! Blinded (query, candidate) judgment tasks and precision over rater verdicts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentTask {
    pub task_id: String,
    /// Salted hash of the method name; resolved only through the key file.
    pub method_tag: String,
    pub query_item: String,
    pub candidate_item: String,
    pub category: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Compatible,
    Incompatible,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    Color,
    Print,
    Season,
    Other,
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureMode::Color => "color",
            FailureMode::Print => "print",
            FailureMode::Season => "season",
            FailureMode::Other => "other",
        })
    }
}

impl FromStr for Verdict {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid(format!("invalid verdict {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub task_id: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_mode: Option<FailureMode>,
    pub rater: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

impl JudgmentRecord {
    pub fn validate(&self) -> Result<()> {
        if self.task_id.is_empty() || self.rater.is_empty() {
            return Err(Error::invalid("task_id and rater must be nonempty"));
        }
        if self.failure_mode.is_some() && self.verdict != Verdict::Incompatible {
            return Err(Error::invalid("failure_mode is only allowed with an incompatible verdict"));
        }
        Ok(())
    }
}

/// Produces up to `k` (candidate item, category name) results for a query.
pub trait Recommender {
    fn recommend(&self, query_item: &str, k: usize) -> Result<Vec<(String, String)>>;
}

pub fn method_tag(salt: &str, method: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update([0u8]);
    h.update(method.as_bytes());
    hex::encode(&h.finalize()[..8])
}

fn task_id(tag: &str, query: &str, candidate: &str) -> String {
    let mut h = Sha256::new();
    for part in [tag, query, candidate] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgmentExport {
    pub tasks: Vec<JudgmentTask>,
    /// Blinded tag to method name.
    pub key: BTreeMap<String, String>,
    /// `(method, query, error)` for queries the engine could not answer.
    pub failures: Vec<(String, String, String)>,
}

/// One task per (method, query, candidate), ordered by task id so methods interleave.
pub fn export_judgment_tasks(
    methods: &[(&str, &dyn Recommender)],
    query_items: &[String],
    k: usize,
    salt: &str,
) -> JudgmentExport {
    let mut export = JudgmentExport::default();
    let mut seen = HashSet::new();
    for (name, engine) in methods {
        let tag = method_tag(salt, name);
        export.key.insert(tag.clone(), name.to_string());
        for q in query_items {
            match engine.recommend(q, k) {
                Ok(results) => {
                    for (cand, category) in results {
                        let id = task_id(&tag, q, &cand);
                        if seen.insert(id.clone()) {
                            export.tasks.push(JudgmentTask {
                                task_id: id,
                                method_tag: tag.clone(),
                                query_item: q.clone(),
                                candidate_item: cand,
                                category,
                            });
                        }
                    }
                }
                Err(e) => export.failures.push((name.to_string(), q.clone(), e.to_string())),
            }
        }
    }
    export.tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    export
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, rows: &[T]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(r: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodPrecision {
    pub compatible: usize,
    pub incompatible: usize,
    pub skipped: usize,
    /// Percent; absent when nothing was judged.
    pub precision: Option<f64>,
    pub failure_modes: BTreeMap<FailureMode, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    /// Keyed by method name, or by blinded tag when no key is supplied.
    pub methods: BTreeMap<String, MethodPrecision>,
}

impl PrecisionReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("method\tcompatible\tincompatible\tskipped\tprecision\n");
        for (m, p) in &self.methods {
            let prec = p.precision.map_or("-".to_string(), |v| format!("{v:.1}"));
            out.push_str(&format!("{m}\t{}\t{}\t{}\t{prec}\n", p.compatible, p.incompatible, p.skipped));
        }
        out
    }
}

/// Precision = compatible / (compatible + incompatible) per method; skips excluded.
pub fn compute_precision(
    records: &[JudgmentRecord],
    tasks: &[JudgmentTask],
    key: Option<&BTreeMap<String, String>>,
) -> Result<PrecisionReport> {
    let by_id: HashMap<&str, &JudgmentTask> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let label = |tag: &str| key.and_then(|k| k.get(tag).cloned()).unwrap_or_else(|| tag.to_string());
    let mut methods: BTreeMap<String, MethodPrecision> = BTreeMap::new();
    for t in tasks {
        methods.entry(label(&t.method_tag)).or_default();
    }
    for r in records {
        let task = by_id
            .get(r.task_id.as_str())
            .ok_or_else(|| Error::invalid(format!("record references unknown task {:?}", r.task_id)))?;
        let m = methods.entry(label(&task.method_tag)).or_default();
        match r.verdict {
            Verdict::Compatible => m.compatible += 1,
            Verdict::Incompatible => {
                m.incompatible += 1;
                if let Some(f) = r.failure_mode {
                    *m.failure_modes.entry(f).or_default() += 1;
                }
            }
            Verdict::Skip => m.skipped += 1,
        }
    }
    for m in methods.values_mut() {
        let judged = m.compatible + m.incompatible;
        m.precision = (judged > 0).then(|| 100.0 * m.compatible as f64 / judged as f64);
    }
    Ok(PrecisionReport { methods })
}
