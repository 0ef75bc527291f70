//! Evaluation metrics: precision@1, set F1, decomposition sequence
//! accuracy, and dataset-level aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::comptree::{Answer, AnswerSet, ScoredAnswer};
use crate::decomp::{DecompositionProgram, Strategy};

/// One evaluated question.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub question: String,
    pub gold: Vec<Answer>,
    pub predicted: Option<ScoredAnswer>,
    pub predicted_set: Option<AnswerSet>,
    pub gold_program: Option<DecompositionProgram>,
    pub predicted_program: Option<DecompositionProgram>,
    pub comp_type: Option<String>,
    pub strategy: Option<Strategy>,
}

/// 1 iff the prediction's normalized form matches any gold answer.
pub fn p_at_1(pred: &ScoredAnswer, gold: &[Answer]) -> u8 {
    let key = pred.answer.normalized_form();
    gold.iter().any(|g| g.normalized_form() == key) as u8
}

/// Harmonic mean of precision and recall over normalized forms. Both sets
/// empty scores 1; exactly one empty scores 0.
pub fn f1(pred: &AnswerSet, gold: &[Answer]) -> f64 {
    let gold_keys: std::collections::BTreeSet<&str> =
        gold.iter().map(|g| g.normalized_form()).collect();
    if pred.is_empty() && gold_keys.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold_keys.is_empty() {
        return 0.0;
    }
    let hits = pred
        .iter()
        .filter(|sa| gold_keys.contains(sa.answer.normalized_form()))
        .count() as f64;
    if hits == 0.0 {
        return 0.0;
    }
    let precision = hits / pred.len() as f64;
    let recall = hits / gold_keys.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Sequence accuracy between two programs.
///
/// `exact` is 1 iff the operators match and every index matches within
/// `slack`. `token` is the fraction of wire tokens matching within `slack`
/// (0 outright on an operator mismatch).
pub fn seq_accuracy(
    pred: &DecompositionProgram,
    gold: &DecompositionProgram,
    slack: i64,
) -> (u8, f64) {
    if pred.op_name() != gold.op_name() {
        return (0, 0.0);
    }
    let indices = |p: &DecompositionProgram| -> Vec<i64> {
        match *p {
            DecompositionProgram::SimpQa => vec![],
            DecompositionProgram::Comp { i, j } => vec![i as i64, j as i64],
            DecompositionProgram::Conj { i, copy } => {
                vec![i as i64, copy.map(|c| c as i64).unwrap_or(-1)]
            }
        }
    };
    let pi = indices(pred);
    let gi = indices(gold);
    let matches = pi
        .iter()
        .zip(&gi)
        .filter(|(a, b)| (*a - *b).abs() <= slack)
        .count();
    let total_tokens = 1 + gi.len();
    let token = (1 + matches) as f64 / total_tokens as f64;
    let exact = (matches == gi.len()) as u8;
    (exact, token)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub p_at_1: Option<f64>,
    pub f1: Option<f64>,
    pub seq_exact: Option<f64>,
    pub seq_exact_slack1: Option<f64>,
    pub seq_token: Option<f64>,
    pub seq_token_slack1: Option<f64>,
    pub decomposed_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Report {
    pub overall: MetricSummary,
    pub per_type: BTreeMap<String, MetricSummary>,
}

fn summarize(records: &[&EvalRecord]) -> MetricSummary {
    let mut out = MetricSummary {
        n: records.len(),
        ..Default::default()
    };
    if records.is_empty() {
        return out;
    }
    let mean_of = |values: Vec<f64>| -> Option<f64> {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    out.p_at_1 = mean_of(
        records
            .iter()
            .filter_map(|r| r.predicted.as_ref().map(|p| p_at_1(p, &r.gold) as f64))
            .collect(),
    );
    out.f1 = mean_of(
        records
            .iter()
            .filter_map(|r| r.predicted_set.as_ref().map(|p| f1(p, &r.gold)))
            .collect(),
    );
    let seq_pairs: Vec<(&DecompositionProgram, &DecompositionProgram)> = records
        .iter()
        .filter_map(|r| {
            r.predicted_program
                .as_ref()
                .zip(r.gold_program.as_ref())
        })
        .collect();
    if !seq_pairs.is_empty() {
        let mut agg = [0.0f64; 4];
        for (pred, gold) in &seq_pairs {
            let (e0, t0) = seq_accuracy(pred, gold, 0);
            let (e1, t1) = seq_accuracy(pred, gold, 1);
            agg[0] += e0 as f64;
            agg[1] += e1 as f64;
            agg[2] += t0;
            agg[3] += t1;
        }
        let n = seq_pairs.len() as f64;
        out.seq_exact = Some(agg[0] / n);
        out.seq_exact_slack1 = Some(agg[1] / n);
        out.seq_token = Some(agg[2] / n);
        out.seq_token_slack1 = Some(agg[3] / n);
    }
    out.decomposed_fraction = mean_of(
        records
            .iter()
            .filter_map(|r| {
                r.strategy
                    .map(|s| (s == Strategy::Decomposed) as u8 as f64)
            })
            .collect(),
    );
    out
}

/// Aggregate means per metric, overall and per compositionality type.
pub fn report(records: &[EvalRecord]) -> Report {
    let mut per_type: BTreeMap<String, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        if let Some(t) = &r.comp_type {
            per_type.entry(t.clone()).or_default().push(r);
        }
    }
    Report {
        overall: summarize(&records.iter().collect::<Vec<_>>()),
        per_type: per_type
            .into_iter()
            .map(|(t, rs)| (t, summarize(&rs)))
            .collect(),
    }
}

impl Report {
    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>8} {:>8} {:>10} {:>10} {:>10}",
            "group", "n", "p@1", "f1", "seq-exact", "seq-tok", "decomp%"
        );
        let cell = |v: Option<f64>| match v {
            Some(x) => format!("{x:.3}"),
            None => "-".to_string(),
        };
        let mut row = |name: &str, s: &MetricSummary| {
            let _ = writeln!(
                out,
                "{:<10} {:>6} {:>8} {:>8} {:>10} {:>10} {:>10}",
                name,
                if s.n == 0 {
                    "n=0".to_string()
                } else {
                    s.n.to_string()
                },
                cell(s.p_at_1),
                cell(s.f1),
                cell(s.seq_exact),
                cell(s.seq_token),
                cell(s.decomposed_fraction),
            );
        };
        row("all", &self.overall);
        for (t, s) in &self.per_type {
            row(t, s);
        }
        out
    }
}
