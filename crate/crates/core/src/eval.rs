//! Evaluation metrics: Rouge-N/L, BLEU-4, joint goal accuracy, AST call
//! accuracy and relevance detection.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::call::{match_call_sets, CallMatchPolicy};
use crate::model::{ApiCall, DialogueState, FunctionRegistry};
use crate::tokenize::tokenize;
use crate::value::CanonValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RougeVariant {
    L,
    N(usize),
}

impl std::str::FromStr for RougeVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "l" => Ok(RougeVariant::L),
            "1" => Ok(RougeVariant::N(1)),
            "2" => Ok(RougeVariant::N(2)),
            other => Err(format!("unknown rouge variant {other:?} (expected L, 1 or 2)")),
        }
    }
}

fn f1(overlap: f64, pred_len: f64, ref_len: f64) -> f64 {
    if overlap == 0.0 {
        return 0.0;
    }
    let p = overlap / pred_len;
    let r = overlap / ref_len;
    2.0 * p * r / (p + r)
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

fn ngram_counts<'a, 'b>(tokens: &'b [&'a str], n: usize) -> HashMap<&'b [&'a str], usize> {
    let mut m = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for g in tokens.windows(n) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

fn rouge_n_tokens(pred: &[&str], reference: &[&str], n: usize) -> f64 {
    let pc = ngram_counts(pred, n);
    let rc = ngram_counts(reference, n);
    let pt: usize = pc.values().sum();
    let rt: usize = rc.values().sum();
    if pt == 0 && rt == 0 {
        return if !pred.is_empty() && pred == reference { 1.0 } else { 0.0 };
    }
    if pt == 0 || rt == 0 {
        return 0.0;
    }
    let overlap: usize = pc.iter().map(|(g, c)| (*c).min(*rc.get(g).unwrap_or(&0))).sum();
    f1(overlap as f64, pt as f64, rt as f64)
}

/// Rouge F1 (β = 1) over reference-tokenizer tokens.
pub fn rouge(pred: &str, reference: &str, variant: RougeVariant) -> f64 {
    let p = tokenize(pred);
    let r = tokenize(reference);
    match variant {
        RougeVariant::L => {
            if p.is_empty() || r.is_empty() {
                return 0.0;
            }
            f1(lcs_len(&p, &r) as f64, p.len() as f64, r.len() as f64)
        }
        RougeVariant::N(n) => rouge_n_tokens(&p, &r, n),
    }
}

/// Sentence BLEU-4 with uniform weights, brevity penalty and add-one
/// smoothing applied only to orders with zero matches.
pub fn bleu4(pred: &str, reference: &str) -> f64 {
    let p = tokenize(pred);
    let r = tokenize(reference);
    if p.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let pc = ngram_counts(&p, n);
        let rc = ngram_counts(&r, n);
        let total: usize = pc.values().sum();
        let matched: usize = pc.iter().map(|(g, c)| (*c).min(*rc.get(g).unwrap_or(&0))).sum();
        let precision = if matched == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matched as f64 / total as f64
        };
        log_sum += precision.ln() / 4.0;
    }
    let bp = if p.len() >= r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / p.len() as f64).exp()
    };
    bp * log_sum.exp()
}

/// Case-fold, trim and collapse inner whitespace.
pub fn normalize_state_value(v: &str) -> String {
    v.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

pub fn state_matches(gold: &DialogueState, predicted: &DialogueState) -> bool {
    gold.map_values(normalize_state_value) == predicted.map_values(normalize_state_value)
}

/// Fraction of turns whose predicted state equals the gold state after value
/// normalisation. Empty input scores 0.
pub fn jga(turns: &[(DialogueState, DialogueState)]) -> f64 {
    if turns.is_empty() {
        return 0.0;
    }
    let hits = turns.iter().filter(|(g, p)| state_matches(g, p)).count();
    hits as f64 / turns.len() as f64
}

/// Gold or predicted content of one evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payload {
    Calls(Vec<ApiCall>),
    State(DialogueState),
    Text(String),
    Abstain,
}

impl Payload {
    fn kind(&self) -> &'static str {
        match self {
            Payload::Calls(_) => "calls",
            Payload::State(_) => "state",
            Payload::Text(_) => "text",
            Payload::Abstain => "abstain",
        }
    }

    /// True for an abstention or an empty call list.
    pub fn abstains(&self) -> bool {
        match self {
            Payload::Abstain => true,
            Payload::Calls(c) => c.is_empty(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub gold: Payload,
    pub predicted: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_tag: Option<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("record {id}: metric {metric} needs {expected} payloads, got {got}")]
    WrongPayload {
        id: String,
        metric: String,
        expected: &'static str,
        got: &'static str,
    },
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ast,
    Jga,
    Rouge(RougeVariant),
    Bleu4,
    Relevance,
}

impl std::str::FromStr for Metric {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ast" => Metric::Ast,
            "jga" => Metric::Jga,
            "rouge-l" | "rougel" => Metric::Rouge(RougeVariant::L),
            "rouge-1" | "rouge1" => Metric::Rouge(RougeVariant::N(1)),
            "rouge-2" | "rouge2" => Metric::Rouge(RougeVariant::N(2)),
            "bleu" | "bleu4" | "bleu-4" => Metric::Bleu4,
            "relevance" => Metric::Relevance,
            _ => return Err(EvalError::UnknownMetric(s.to_string())),
        })
    }
}

impl Metric {
    pub fn name(self) -> String {
        match self {
            Metric::Ast => "ast".into(),
            Metric::Jga => "jga".into(),
            Metric::Rouge(RougeVariant::L) => "rouge-l".into(),
            Metric::Rouge(RougeVariant::N(n)) => format!("rouge-{n}"),
            Metric::Bleu4 => "bleu4".into(),
            Metric::Relevance => "relevance".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub count: usize,
    /// Mean of per-record scores; 0 when there are no records.
    pub aggregate: f64,
    pub per_level: BTreeMap<String, f64>,
    pub per_record: Vec<RecordScore>,
}

impl MetricReport {
    fn from_scores(metric: String, records: &[EvalRecord], scores: Vec<f64>) -> Self {
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let mut levels: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (r, s) in records.iter().zip(&scores) {
            if let Some(tag) = &r.level_tag {
                levels.entry(tag.clone()).or_default().push(*s);
            }
        }
        MetricReport {
            metric,
            count: scores.len(),
            aggregate: mean(&scores),
            per_level: levels.into_iter().map(|(k, v)| (k, mean(&v))).collect(),
            per_record: records
                .iter()
                .zip(scores)
                .map(|(r, score)| RecordScore { id: r.id.clone(), score })
                .collect(),
        }
    }
}

fn wrong(r: &EvalRecord, metric: &str, expected: &'static str, p: &Payload) -> EvalError {
    EvalError::WrongPayload {
        id: r.id.clone(),
        metric: metric.into(),
        expected,
        got: p.kind(),
    }
}

/// Adds every missing parameter that has a non-null default.
fn fill_defaults(calls: &[ApiCall], reg: &FunctionRegistry) -> Vec<ApiCall> {
    calls
        .iter()
        .map(|c| {
            let mut c = c.clone();
            if let Some(schema) = reg.get(&c.name) {
                for p in &schema.params {
                    if let Some(d) = &p.default {
                        if *d != CanonValue::Null && c.arg(&p.name).is_none() {
                            c.args.push((p.name.clone(), d.clone()));
                        }
                    }
                }
            }
            c
        })
        .collect()
}

/// Per-record exact call-set match. With a registry, omitted arguments that
/// have a non-null default are filled in on both sides first.
pub fn ast_accuracy(
    records: &[EvalRecord],
    policy: &CallMatchPolicy,
    registry: Option<&FunctionRegistry>,
) -> Result<MetricReport, EvalError> {
    let calls = |r: &EvalRecord, p: &Payload| -> Result<Vec<ApiCall>, EvalError> {
        let v = match p {
            Payload::Calls(c) => c.clone(),
            Payload::Abstain => Vec::new(),
            other => return Err(wrong(r, "ast", "calls", other)),
        };
        Ok(match registry {
            Some(reg) => fill_defaults(&v, reg),
            None => v,
        })
    };
    let scores = records
        .iter()
        .map(|r| {
            let g = calls(r, &r.gold)?;
            let p = calls(r, &r.predicted)?;
            Ok(if match_call_sets(&p, &g, policy) { 1.0 } else { 0.0 })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(MetricReport::from_scores("ast".into(), records, scores))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceScores {
    /// Share of records with gold calls where the model produced a call.
    pub relevance: Option<f64>,
    /// Share of records with gold abstention where the model abstained.
    pub irrelevance: Option<f64>,
    pub relevant_count: usize,
    pub irrelevant_count: usize,
}

pub fn relevance_detection(records: &[EvalRecord]) -> Result<RelevanceScores, EvalError> {
    let (mut rel, mut rel_hit, mut irr, mut irr_hit) = (0usize, 0usize, 0usize, 0usize);
    for r in records {
        for p in [&r.gold, &r.predicted] {
            if !matches!(p, Payload::Calls(_) | Payload::Abstain) {
                return Err(wrong(r, "relevance", "calls or abstain", p));
            }
        }
        if r.gold.abstains() {
            irr += 1;
            irr_hit += r.predicted.abstains() as usize;
        } else {
            rel += 1;
            rel_hit += !r.predicted.abstains() as usize;
        }
    }
    let ratio = |h: usize, n: usize| (n > 0).then(|| h as f64 / n as f64);
    Ok(RelevanceScores {
        relevance: ratio(rel_hit, rel),
        irrelevance: ratio(irr_hit, irr),
        relevant_count: rel,
        irrelevant_count: irr,
    })
}

/// Runs a per-record metric over the records. Relevance detection, which is
/// not a per-record mean, is reported through [`relevance_detection`].
pub fn evaluate(
    records: &[EvalRecord],
    metric: Metric,
    policy: &CallMatchPolicy,
    registry: Option<&FunctionRegistry>,
) -> Result<MetricReport, EvalError> {
    let name = metric.name();
    let text_scores = |f: &dyn Fn(&str, &str) -> f64| -> Result<Vec<f64>, EvalError> {
        records
            .iter()
            .map(|r| match (&r.gold, &r.predicted) {
                (Payload::Text(g), Payload::Text(p)) => Ok(f(p, g)),
                (Payload::Text(_), other) | (other, _) => Err(wrong(r, &name, "text", other)),
            })
            .collect()
    };
    let scores = match metric {
        Metric::Ast => return ast_accuracy(records, policy, registry),
        Metric::Relevance => {
            let rs = relevance_detection(records)?;
            let scores = records
                .iter()
                .map(|r| (r.gold.abstains() == r.predicted.abstains()) as u8 as f64)
                .collect();
            let mut rep = MetricReport::from_scores(name, records, scores);
            if let Some(v) = rs.relevance {
                rep.per_level.insert("relevance".into(), v);
            }
            if let Some(v) = rs.irrelevance {
                rep.per_level.insert("irrelevance".into(), v);
            }
            return Ok(rep);
        }
        Metric::Jga => records
            .iter()
            .map(|r| match (&r.gold, &r.predicted) {
                (Payload::State(g), Payload::State(p)) => Ok(state_matches(g, p) as u8 as f64),
                (Payload::State(_), other) | (other, _) => Err(wrong(r, "jga", "state", other)),
            })
            .collect::<Result<Vec<_>, _>>()?,
        Metric::Rouge(v) => text_scores(&|p, g| rouge(p, g, v))?,
        Metric::Bleu4 => text_scores(&|p, g| bleu4(p, g))?,
    };
    Ok(MetricReport::from_scores(name, records, scores))
}
