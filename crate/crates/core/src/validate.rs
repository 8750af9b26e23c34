//! Automated quality checks for generated traces and the review-sampling and
//! error-rate reporting around human scoring.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    validate_call_against_schema, FunctionRegistry, ReactDialogue, ReactTurn, ViolationKind,
};
use crate::prng::Xoshiro256;
use crate::react::render_observation;
use crate::review::HumanScore;
use crate::tokenize::Tokens;
use crate::value::CanonValue;

/// Thoughts shorter than this many whitespace-separated words are flagged.
pub const MIN_THOUGHT_WORDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    UndefinedFunctionCall,
    IncorrectArgumentType,
    ArgumentHallucination,
    LowQualityReasoning,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::UndefinedFunctionCall,
        Dimension::IncorrectArgumentType,
        Dimension::ArgumentHallucination,
        Dimension::LowQualityReasoning,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flag {
    pub dimension: Dimension,
    pub turn_index: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub dialogue_id: String,
    pub flags: Vec<Flag>,
    /// 1 when no flag was raised.
    pub auto_score: u8,
}

impl ValidationReport {
    pub fn new(dialogue_id: impl Into<String>, flags: Vec<Flag>) -> Self {
        let auto_score = u8::from(flags.is_empty());
        ValidationReport {
            dialogue_id: dialogue_id.into(),
            flags,
            auto_score,
        }
    }

    pub fn has(&self, dim: Dimension) -> bool {
        self.flags.iter().any(|f| f.dimension == dim)
    }
}

const NO_API_PHRASES: &[&str] = &[
    "don't need an api",
    "do not need an api",
    "doesn't need an api",
    "does not need an api",
    "no api needed",
    "no api call needed",
    "no api is needed",
    "no need for an api",
    "no need to call an api",
    "don't need to call an api",
    "without an api",
    "not necessary to call an api",
];

fn states_no_api(thought: &str) -> bool {
    let t = thought.to_lowercase().replace('’', "'");
    NO_API_PHRASES.iter().any(|p| t.contains(p))
}

fn fold(s: &str) -> String {
    s.to_lowercase()
}

/// Text the dialogue has exposed before the call in `turn`: all earlier
/// user, system and observation texts, plus the current user text.
fn grounding_text(turns: &[ReactTurn], turn: usize) -> String {
    let mut parts: Vec<String> = Vec::new();
    for t in &turns[..turn] {
        parts.push(t.user.clone());
        if let Some(o) = &t.observation {
            parts.push(render_observation(o));
            collect_strings(o, &mut parts);
        }
        parts.push(t.system.clone());
    }
    parts.push(turns[turn].user.clone());
    fold(&parts.join("\n"))
}

fn collect_strings(v: &CanonValue, out: &mut Vec<String>) {
    match v {
        CanonValue::String(s) => out.push(s.clone()),
        CanonValue::List(items) => items.iter().for_each(|i| collect_strings(i, out)),
        CanonValue::Object(m) => m.values().for_each(|i| collect_strings(i, out)),
        _ => {}
    }
}

/// A string value is grounded when its case-folded form occurs in the prefix,
/// or when every one of its alphanumeric tokens occurs there.
fn is_grounded(value: &str, prefix: &str) -> bool {
    let v = fold(value.trim());
    if v.is_empty() || prefix.contains(&v) {
        return true;
    }
    let prefix_tokens: HashSet<&str> = Tokens::new(prefix).collect();
    let mut words = Tokens::new(&v)
        .filter(|t| t.chars().next().is_some_and(char::is_alphanumeric))
        .peekable();
    words.peek().is_some() && words.all(|w| prefix_tokens.contains(w))
}

/// Runs the four checks over every turn.
pub fn check_dialogue(d: &ReactDialogue, reg: &FunctionRegistry) -> ValidationReport {
    let mut flags = Vec::new();
    let mut flag = |dimension, turn_index, detail: String| {
        flags.push(Flag {
            dimension,
            turn_index,
            detail,
        })
    };
    for (k, turn) in d.turns.iter().enumerate() {
        let thought_words = turn.thought1.as_deref().map_or(0, |t| t.split_whitespace().count());
        if thought_words == 0 {
            flag(Dimension::LowQualityReasoning, k, "missing thought".into());
        } else if thought_words < MIN_THOUGHT_WORDS {
            flag(
                Dimension::LowQualityReasoning,
                k,
                format!("thought has {thought_words} word(s), fewer than {MIN_THOUGHT_WORDS}"),
            );
        }

        let Some(call) = &turn.action else { continue };

        if turn.thought2.as_deref().is_none_or(|t| t.trim().is_empty()) {
            flag(Dimension::LowQualityReasoning, k, "API turn without a second thought".into());
        }
        if turn.thought1.as_deref().is_some_and(states_no_api) {
            flag(
                Dimension::LowQualityReasoning,
                k,
                format!("call to {} although the thought says no API is needed", call.name),
            );
        }
        if k > 0 && d.turns[k - 1].action.as_ref() == Some(call) {
            flag(
                Dimension::LowQualityReasoning,
                k,
                format!("repeated identical call to {} (unnecessary-call heuristic)", call.name),
            );
        }

        for v in validate_call_against_schema(call, reg) {
            let dim = match v.kind() {
                ViolationKind::UnknownFunction | ViolationKind::UnknownArgument => Dimension::UndefinedFunctionCall,
                ViolationKind::WrongType | ViolationKind::MissingRequired => Dimension::IncorrectArgumentType,
            };
            flag(dim, k, v.to_string());
        }

        let prefix = grounding_text(&d.turns, k);
        let schema = reg.get(&call.name);
        for (arg, value) in &call.args {
            let CanonValue::String(s) = value else { continue };
            let is_default = schema
                .and_then(|sc| sc.param(arg))
                .and_then(|p| p.default.as_ref())
                .is_some_and(|def| def == value);
            if !is_default && !is_grounded(s, &prefix) {
                flag(
                    Dimension::ArgumentHallucination,
                    k,
                    format!("{}.{arg}={s:?} does not appear in the dialogue so far", call.name),
                );
            }
        }
    }
    ValidationReport::new(d.id.clone(), flags)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReviewError {
    #[error("asked for {wanted} dialogues but only {available} exist")]
    NotEnough { wanted: usize, available: usize },
    #[error("score references unknown dialogue {0:?}")]
    UnknownId(String),
}

/// Uniform sample of `n` ids without replacement. Ids are sorted first, so the
/// result depends only on the id set, `n` and `seed`.
pub fn sample_for_review(ids: &[String], n: usize, seed: u64) -> Result<Vec<String>, ReviewError> {
    let mut pool: Vec<String> = ids.to_vec();
    pool.sort();
    pool.dedup();
    if n > pool.len() {
        return Err(ReviewError::NotEnough {
            wanted: n,
            available: pool.len(),
        });
    }
    let mut rng = Xoshiro256::seed_from_u64(seed);
    for i in 0..n {
        let j = i + rng.below((pool.len() - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(n);
    Ok(pool)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub dialogue_id: String,
    pub annotator: String,
    pub feedback: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSummary {
    pub dialogues: usize,
    pub auto_flagged: usize,
    pub auto_error_rate: f64,
    /// Dialogues with at least one flag in each dimension.
    pub per_dimension: BTreeMap<Dimension, usize>,
    pub human_scored: usize,
    pub human_errors: usize,
    /// Absent until at least one human score exists.
    pub human_error_rate: Option<f64>,
    pub feedback: Vec<FeedbackEntry>,
}

/// Folds automated reports and human scores into one summary. Only the human
/// rate is authoritative; the automated figures are advisory.
pub fn error_rate_report(auto: &[ValidationReport], human: &[HumanScore]) -> Result<ReviewSummary, ReviewError> {
    let known: HashSet<&str> = auto.iter().map(|r| r.dialogue_id.as_str()).collect();
    if let Some(s) = human.iter().find(|s| !known.contains(s.dialogue_id.as_str())) {
        return Err(ReviewError::UnknownId(s.dialogue_id.clone()));
    }
    let mut per_dimension: BTreeMap<Dimension, usize> = Dimension::ALL.iter().map(|d| (*d, 0)).collect();
    for r in auto {
        for d in Dimension::ALL {
            if r.has(d) {
                *per_dimension.entry(d).or_default() += 1;
            }
        }
    }
    let auto_flagged = auto.iter().filter(|r| r.auto_score == 0).count();
    let human_errors = human.iter().filter(|s| s.score == 0).count();
    Ok(ReviewSummary {
        dialogues: auto.len(),
        auto_flagged,
        auto_error_rate: if auto.is_empty() {
            0.0
        } else {
            auto_flagged as f64 / auto.len() as f64
        },
        per_dimension,
        human_scored: human.len(),
        human_errors,
        human_error_rate: (!human.is_empty()).then(|| human_errors as f64 / human.len() as f64),
        feedback: human
            .iter()
            .filter(|s| s.score == 0)
            .map(|s| FeedbackEntry {
                dialogue_id: s.dialogue_id.clone(),
                annotator: s.annotator.clone(),
                feedback: s.feedback.clone(),
            })
            .collect(),
    })
}
