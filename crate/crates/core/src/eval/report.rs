use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EvalConfig, FitbReport, RecallReport};

/// Metrics for one method, all in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub recall_at: Vec<(usize, f64)>,
    pub fitb: f64,
    pub recall_corpora: usize,
    pub recall_skipped: usize,
    pub fitb_questions: usize,
    pub fitb_skipped: usize,
    pub config: EvalConfig,
    pub seed: u64,
}

impl EvalReport {
    pub fn new(method: impl Into<String>, recall: &RecallReport, fitb: &FitbReport, config: &EvalConfig) -> Self {
        Self {
            method: method.into(),
            recall_at: recall.ks.iter().copied().zip(recall.recall.iter().map(|r| r * 100.0)).collect(),
            fitb: fitb.accuracy * 100.0,
            recall_corpora: recall.corpora,
            recall_skipped: recall.skipped,
            fitb_questions: fitb.questions,
            fitb_skipped: fitb.skipped,
            config: config.clone(),
            seed: config.seed,
        }
    }

    /// Recall@K in percent, if K was evaluated.
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recall_at.iter().find(|(kk, _)| *kk == k).map(|r| r.1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub rows: Vec<EvalReport>,
}

impl EvalTable {
    /// Aligned plain-text table with one row per method.
    pub fn to_text(&self) -> String {
        let ks: Vec<usize> = self
            .rows
            .first()
            .map(|r| r.recall_at.iter().map(|x| x.0).collect())
            .unwrap_or_default();
        let mut header = vec!["Method".to_string()];
        header.extend(ks.iter().map(|k| format!("R@{k}")));
        header.push("FITB".into());
        let mut cells = vec![header];
        for r in &self.rows {
            let mut row = vec![r.method.clone()];
            row.extend(ks.iter().map(|&k| r.recall(k).map_or("-".into(), |v| format!("{v:.1}"))));
            row.push(format!("{:.1}", r.fitb));
            cells.push(row);
        }
        let widths: Vec<usize> = (0..cells[0].len())
            .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, v)| {
                    if c == 0 {
                        format!("{v:<w$}", w = widths[c])
                    } else {
                        format!("{v:>w$}", w = widths[c])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}
