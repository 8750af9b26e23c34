//! Textual call syntax (`name(arg=value, ...)`), the JSON tool-call list, and
//! structural call equality used by AST accuracy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::literal::{Cursor, LintWarning};
use crate::model::ApiCall;
use crate::value::{to_spaced_json, CanonValue};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CallError {
    #[error("parse error at {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("duplicate argument {0:?}")]
    DuplicateArg(String),
}

impl CallError {
    fn at(position: usize, message: impl Into<String>) -> Self {
        CallError::Parse {
            position,
            message: message.into(),
        }
    }
}

impl From<crate::literal::SyntaxError> for CallError {
    fn from(e: crate::literal::SyntaxError) -> Self {
        CallError::Parse {
            position: e.position,
            message: e.message,
        }
    }
}

/// Parses `name(arg=value, ...)`. Only keyword arguments are accepted.
pub fn parse_call(text: &str) -> Result<ApiCall, CallError> {
    parse_call_with_lints(text).map(|(c, _)| c)
}

/// Like [`parse_call`], also returning lenient-parse warnings such as
/// unquoted multi-word values.
pub fn parse_call_with_lints(text: &str) -> Result<(ApiCall, Vec<LintWarning>), CallError> {
    let mut cur = Cursor::new(text);
    cur.skip_ws();
    let name = cur
        .ident()
        .ok_or_else(|| CallError::from(cur.unexpected("a function name")))?;
    cur.skip_ws();
    cur.expect('(')?;
    let mut args: Vec<(String, CanonValue)> = Vec::new();
    loop {
        cur.skip_ws();
        if cur.eat(')') {
            break;
        }
        if !args.is_empty() {
            cur.expect(',')?;
            cur.skip_ws();
            if cur.eat(')') {
                break;
            }
        }
        let arg_pos = cur.pos;
        let Some(key) = cur.ident() else {
            return Err(match cur.peek() {
                Some('\'' | '"' | '[' | '{' | '-' | '+') => {
                    CallError::at(arg_pos, "positional arguments are not supported")
                }
                _ => cur.unexpected("an argument name or ')'").into(),
            });
        };
        cur.skip_ws();
        if !cur.eat('=') {
            return Err(CallError::at(
                arg_pos,
                format!("expected '=' after {key:?}; positional arguments are not supported"),
            ));
        }
        let value = cur.value()?;
        if args.iter().any(|(k, _)| *k == key) {
            return Err(CallError::DuplicateArg(key));
        }
        args.push((key, value));
    }
    cur.skip_ws();
    if !cur.at_end() {
        return Err(cur.unexpected("end of input").into());
    }
    let lints = std::mem::take(&mut cur.lints);
    let call = ApiCall::new(name, args).map_err(|e| CallError::at(0, e.to_string()))?;
    Ok((call, lints))
}

/// Deterministic text form; strings are single-quoted with backslash escapes.
pub fn render_call(call: &ApiCall) -> String {
    let args: Vec<String> = call
        .args
        .iter()
        .map(|(k, v)| format!("{k}={}", v.render_literal()))
        .collect();
    format!("{}({})", call.name, args.join(", "))
}

/// Parses `[{"name": ..., "arguments": {...}}, ...]`. `[]` is the abstain signal.
pub fn parse_toolcall_json(text: &str) -> Result<Vec<ApiCall>, CallError> {
    let doc: serde_json::Value = serde_json::from_str(text.trim()).map_err(|e| {
        CallError::at(e.column().saturating_sub(1), e.to_string())
    })?;
    let items = doc
        .as_array()
        .ok_or_else(|| CallError::at(0, "tool-call output is not a list"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| ApiCall::from_json(item).map_err(|m| CallError::at(i, format!("call {i}: {m}"))))
        .collect()
}

pub fn render_toolcall_json(calls: &[ApiCall]) -> String {
    let list: Vec<serde_json::Value> = calls.iter().map(ApiCall::to_json).collect();
    to_spaced_json(&list)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CallMatchPolicy {
    pub name_case_sensitive: bool,
    pub string_trim: bool,
    pub order_insensitive_sets: bool,
}

impl Default for CallMatchPolicy {
    fn default() -> Self {
        CallMatchPolicy {
            name_case_sensitive: true,
            string_trim: true,
            order_insensitive_sets: true,
        }
    }
}

/// Value equality after canonicalisation: integers and decimals compare
/// numerically (exactly), strings optionally trimmed, lists positionally and
/// objects key-wise.
pub fn values_equal(a: &CanonValue, b: &CanonValue, string_trim: bool) -> bool {
    use CanonValue::*;
    match (a, b) {
        (Null, Null) => true,
        (Bool(x), Bool(y)) => x == y,
        (Integer(x), Integer(y)) => x == y,
        (Number(x), Number(y)) => x == y,
        (Integer(i), Number(f)) | (Number(f), Integer(i)) => int_equals_float(*i, *f),
        (String(x), String(y)) => {
            if string_trim {
                x.trim() == y.trim()
            } else {
                x == y
            }
        }
        (List(x), List(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| values_equal(p, q, string_trim))
        }
        (Object(x), Object(y)) => {
            x.len() == y.len()
                && x.iter()
                    .all(|(k, v)| y.get(k).is_some_and(|w| values_equal(v, w, string_trim)))
        }
        _ => false,
    }
}

fn int_equals_float(i: i64, f: f64) -> bool {
    // 2^63 is exactly representable; anything at or beyond it is out of i64 range.
    const LIMIT: f64 = 9_223_372_036_854_775_808.0;
    f.fract() == 0.0 && (-LIMIT..LIMIT).contains(&f) && f as i64 == i
}

pub fn ast_equal(a: &ApiCall, b: &ApiCall, policy: &CallMatchPolicy) -> bool {
    let names_match = if policy.name_case_sensitive {
        a.name == b.name
    } else {
        a.name.to_lowercase() == b.name.to_lowercase()
    };
    names_match
        && a.args.len() == b.args.len()
        && a.args.iter().all(|(k, v)| {
            b.arg(k)
                .is_some_and(|w| values_equal(v, w, policy.string_trim))
        })
}

/// True iff predicted and gold can be paired one-to-one under [`ast_equal`]
/// (positionally when the policy is order-sensitive).
pub fn match_call_sets(predicted: &[ApiCall], gold: &[ApiCall], policy: &CallMatchPolicy) -> bool {
    if predicted.len() != gold.len() {
        return false;
    }
    if !policy.order_insensitive_sets {
        return predicted.iter().zip(gold).all(|(p, g)| ast_equal(p, g, policy));
    }
    let n = gold.len();
    let adj: Vec<Vec<usize>> = predicted
        .iter()
        .map(|p| (0..n).filter(|&j| ast_equal(p, &gold[j], policy)).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let mut seen = vec![false; n];
        if !augment(i, &adj, &mut owner, &mut seen) {
            return false;
        }
    }
    true
}

fn augment(i: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &j in &adj[i] {
        if seen[j] {
            continue;
        }
        seen[j] = true;
        if owner[j].is_none_or(|k| augment(k, adj, owner, seen)) {
            owner[j] = Some(i);
            return true;
        }
    }
    false
}
