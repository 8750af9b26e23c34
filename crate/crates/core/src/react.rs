//! ReAct trace parsing and history rendering.
//!
//! Two surface grammars are recognised and normalised into [`ReactTurn`]s:
//!
//! ```text
//! User: ...                 User: ...
//! Thought1: ...             Thought: ...
//! API Name: AddToPlaylist   Action: AddToPlaylist(playlist_name='x')
//! API Input: {'k': 'v'}     Observation: {...}
//! API Result: {...}         Thought: ...
//! Thought2: ...             System: ...
//! System: ...
//! ```
//!
//! Direct turns are `User / Thought / System`. The first thought of a turn goes
//! to `thought1`; a thought after the action goes to `thought2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::call::{parse_call_with_lints, render_call, CallError};
use crate::literal::{parse_literal, LintWarning, SyntaxError};
use crate::model::{ApiCall, ReactDialogue, ReactTurn};
use crate::value::CanonValue;

pub const HISTORY_BEGIN: &str = "[BEGIN OF CONVERSATION HISTORY]";
pub const HISTORY_END: &str = "[END OF CONVERSATION HISTORY]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockLabel {
    User,
    Thought,
    Thought1,
    Thought2,
    ApiName,
    ApiInput,
    ApiResult,
    Action,
    Observation,
    System,
}

impl BlockLabel {
    fn from_prefix(prefix: &str) -> Option<BlockLabel> {
        let norm: String = prefix
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_ascii_lowercase();
        Some(match norm.as_str() {
            "user" => BlockLabel::User,
            "thought" => BlockLabel::Thought,
            "thought1" | "thought 1" => BlockLabel::Thought1,
            "thought2" | "thought 2" => BlockLabel::Thought2,
            "api name" | "api" | "api call" => BlockLabel::ApiName,
            "api input" | "api input arguments" => BlockLabel::ApiInput,
            "api result" | "api output" => BlockLabel::ApiResult,
            "action" => BlockLabel::Action,
            "observation" => BlockLabel::Observation,
            "system" => BlockLabel::System,
            _ => return None,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("trace contains no \"User:\" line")]
    EmptyTrace,
    #[error("turn {turn}: {reason}")]
    TruncatedTurn { turn: usize, reason: String },
    #[error("turn {turn}: {source}")]
    Parse {
        turn: usize,
        #[source]
        source: CallError,
    },
}

impl TraceError {
    pub fn turn(&self) -> Option<usize> {
        match self {
            TraceError::EmptyTrace => None,
            TraceError::TruncatedTurn { turn, .. } | TraceError::Parse { turn, .. } => Some(*turn),
        }
    }
}

/// Turns recovered from a trace together with salvage warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub turns: Vec<ReactTurn>,
    pub lints: Vec<TraceLint>,
}

impl ParsedTrace {
    pub fn into_dialogue(self, id: impl Into<String>, registry_ref: impl Into<String>) -> ReactDialogue {
        ReactDialogue {
            id: id.into(),
            turns: self.turns,
            registry_ref: registry_ref.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLint {
    /// 1-based line number in the parsed text.
    pub line: usize,
    pub message: String,
}

struct Block {
    label: BlockLabel,
    line: usize,
    body: Vec<String>,
}

impl Block {
    fn text(&self) -> String {
        self.body.join("\n").trim().to_string()
    }
}

/// Splits `Label: body` if the prefix names a known label.
fn split_label(line: &str) -> Option<(BlockLabel, &str)> {
    let stripped = line.trim_start().trim_start_matches(['-', '*']).trim_start();
    let (prefix, rest) = stripped.split_once(':')?;
    let label = BlockLabel::from_prefix(prefix.trim_end_matches('*'))?;
    Some((label, rest.trim_start_matches('*')))
}

fn looks_like_label(line: &str) -> bool {
    match line.split_once(':') {
        Some((prefix, _)) => {
            let p = prefix.trim();
            !p.is_empty()
                && p.split_whitespace().count() <= 3
                && p.chars().all(|c| c.is_alphanumeric() || c == ' ' || c == '_')
                && p.chars().next().is_some_and(char::is_alphabetic)
        }
        None => false,
    }
}

fn is_delimiter(line: &str) -> bool {
    let t = line.trim();
    t.starts_with("[BEGIN OF") || t.starts_with("[END OF")
}

/// Parses a ReAct trace into turns; each turn starts at a `User:` line.
pub fn parse_trace(text: &str) -> Result<ParsedTrace, TraceError> {
    let mut lints = Vec::new();
    let mut blocks: Vec<Block> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end();
        if line.trim().is_empty() || is_delimiter(line) {
            continue;
        }
        if let Some((label, rest)) = split_label(line) {
            blocks.push(Block {
                label,
                line: line_no,
                body: vec![rest.trim().to_string()],
            });
            continue;
        }
        match blocks.last_mut() {
            Some(b) => {
                if looks_like_label(line) {
                    lints.push(TraceLint {
                        line: line_no,
                        message: format!("unknown label attached to {:?} block: {}", b.label, line.trim()),
                    });
                }
                b.body.push(line.trim().to_string());
            }
            None => lints.push(TraceLint {
                line: line_no,
                message: "text before the first labelled line ignored".into(),
            }),
        }
    }

    let first_user = blocks
        .iter()
        .position(|b| b.label == BlockLabel::User)
        .ok_or(TraceError::EmptyTrace)?;
    for b in &blocks[..first_user] {
        lints.push(TraceLint {
            line: b.line,
            message: format!("{:?} block before the first User line ignored", b.label),
        });
    }

    let mut groups: Vec<Vec<Block>> = Vec::new();
    for b in blocks.into_iter().skip(first_user) {
        if b.label == BlockLabel::User {
            groups.push(Vec::new());
        }
        groups.last_mut().expect("first block is User").push(b);
    }

    let turns = groups
        .into_iter()
        .enumerate()
        .map(|(index, group)| build_turn(index, group, &mut lints))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ParsedTrace { turns, lints })
}

fn append(slot: &mut Option<String>, text: String) {
    match slot {
        Some(existing) => {
            existing.push('\n');
            existing.push_str(&text);
        }
        None => *slot = Some(text),
    }
}

fn build_turn(turn: usize, group: Vec<Block>, lints: &mut Vec<TraceLint>) -> Result<ReactTurn, TraceError> {
    let mut user = String::new();
    let mut thought1: Option<String> = None;
    let mut thought2: Option<String> = None;
    let mut action: Option<ApiCall> = None;
    let mut api_name: Option<(String, usize)> = None;
    let mut api_input: Option<(String, usize)> = None;
    let mut observation: Option<CanonValue> = None;
    let mut system: Option<String> = None;
    let mut saw_action = false;

    let lint_call = |lints: &mut Vec<TraceLint>, line: usize, ws: Vec<LintWarning>| {
        lints.extend(ws.into_iter().map(|w| TraceLint {
            line,
            message: w.message,
        }));
    };

    for b in group {
        let text = b.text();
        match b.label {
            BlockLabel::User => user = text,
            BlockLabel::Thought | BlockLabel::Thought1 | BlockLabel::Thought2 => {
                if saw_action {
                    if observation.is_none() {
                        lints.push(TraceLint {
                            line: b.line,
                            message: "thought between action and observation".into(),
                        });
                    }
                    append(&mut thought2, text);
                } else {
                    if thought1.is_some() {
                        lints.push(TraceLint {
                            line: b.line,
                            message: "several thoughts before the action merged".into(),
                        });
                    }
                    append(&mut thought1, text);
                }
            }
            BlockLabel::Action => {
                let (call, ws) = parse_call_with_lints(&text).map_err(|source| TraceError::Parse { turn, source })?;
                lint_call(lints, b.line, ws);
                action = Some(call);
                saw_action = true;
            }
            BlockLabel::ApiName => {
                api_name = Some((text, b.line));
                saw_action = true;
            }
            BlockLabel::ApiInput => {
                api_input = Some((text, b.line));
                saw_action = true;
            }
            BlockLabel::ApiResult | BlockLabel::Observation => {
                let (value, ws) = observation_or_text(&text);
                lint_call(lints, b.line, ws);
                observation = Some(value);
            }
            BlockLabel::System => append(&mut system, text),
        }
    }

    if let Some((name, line)) = api_name {
        let call = fuse_api_call(turn, &name, api_input.as_ref().map(|(t, _)| t.as_str()), line, lints)?;
        action = Some(call);
    } else if let Some((_, line)) = api_input {
        lints.push(TraceLint {
            line,
            message: "API Input without API Name ignored".into(),
        });
    }

    let truncated = |reason: &str| TraceError::TruncatedTurn {
        turn,
        reason: reason.to_string(),
    };
    let system = system.ok_or_else(|| truncated("missing System line"))?;
    if action.is_some() {
        if thought1.is_none() {
            return Err(truncated("API turn has no thought before the call"));
        }
        if observation.is_none() {
            return Err(truncated("API turn has no observation"));
        }
        if thought2.is_none() {
            return Err(truncated("API turn has no thought after the observation"));
        }
    } else if observation.is_some() {
        return Err(truncated("observation without an action"));
    } else if thought2.is_some() {
        return Err(truncated("second thought without an action"));
    }
    Ok(ReactTurn {
        user,
        thought1,
        action,
        observation,
        thought2,
        system,
    })
}

fn fuse_api_call(
    turn: usize,
    name_text: &str,
    input: Option<&str>,
    line: usize,
    lints: &mut Vec<TraceLint>,
) -> Result<ApiCall, TraceError> {
    let parse_err = |position: usize, message: String| TraceError::Parse {
        turn,
        source: CallError::Parse { position, message },
    };
    let name_text = name_text.trim();
    let (name, mut args) = if name_text.contains('(') {
        let (call, ws) = parse_call_with_lints(name_text).map_err(|source| TraceError::Parse { turn, source })?;
        lints.extend(ws.into_iter().map(|w| TraceLint { line, message: w.message }));
        (call.name, call.args)
    } else {
        (name_text.to_string(), Vec::new())
    };
    if let Some(input) = input.map(str::trim).filter(|s| !s.is_empty()) {
        let (value, ws) = parse_literal(input, true).map_err(|e| parse_err(e.position, e.message))?;
        lints.extend(ws.into_iter().map(|w| TraceLint {
            line: line + 1,
            message: w.message,
        }));
        match value {
            CanonValue::Object(map) => {
                for (k, v) in map {
                    if let Some(slot) = args.iter_mut().find(|(a, _)| *a == k) {
                        slot.1 = v;
                    } else {
                        args.push((k, v));
                    }
                }
            }
            CanonValue::Null => {}
            other => {
                return Err(parse_err(
                    0,
                    format!("API Input must be an object, found {}", other.type_name()),
                ))
            }
        }
    }
    ApiCall::new(name, args).map_err(|e| parse_err(0, e.to_string()))
}

/// Parses an observation literal such as `{'status': 'success'}`. Keys and
/// strings may use either quote style; unquoted words are read as strings.
pub fn parse_observation_literal(text: &str) -> Result<CanonValue, SyntaxError> {
    parse_literal(text, true).map(|(v, _)| v)
}

/// Observation bodies that are not literals are kept as plain text.
fn observation_or_text(text: &str) -> (CanonValue, Vec<LintWarning>) {
    match parse_literal(text, true) {
        Ok((v, ws)) => (v, ws),
        Err(e) => (
            CanonValue::String(text.to_string()),
            vec![LintWarning {
                position: e.position,
                message: format!("observation kept as text: {}", e.message),
            }],
        ),
    }
}

pub fn render_observation(v: &CanonValue) -> String {
    if let CanonValue::String(s) = v {
        let raw_round_trips = !s.is_empty()
            && s.trim() == s
            && !s.contains('\n')
            && matches!(parse_literal(s, true), Ok((CanonValue::String(ref back), _)) if back == s);
        if raw_round_trips {
            return s.clone();
        }
    }
    v.render_literal()
}

fn push_labelled(out: &mut Vec<String>, label: &str, body: &str) {
    out.push(format!("{label}: {body}"));
}

/// Lines for the user side of a turn: `User:` and its first thought.
pub fn render_turn_opening(turn: &ReactTurn) -> Vec<String> {
    let mut out = Vec::new();
    push_labelled(&mut out, "User", &turn.user);
    if let Some(t) = &turn.thought1 {
        push_labelled(&mut out, "Thought", t);
    }
    out
}

/// Lines for the action side of an API turn: `Action:`, `Observation:` and the second thought.
pub fn render_turn_action(turn: &ReactTurn) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(call) = &turn.action {
        push_labelled(&mut out, "Action", &render_call(call));
        if let Some(obs) = &turn.observation {
            push_labelled(&mut out, "Observation", &render_observation(obs));
        }
        if let Some(t) = &turn.thought2 {
            push_labelled(&mut out, "Thought", t);
        }
    }
    out
}

pub fn render_turn(turn: &ReactTurn) -> Vec<String> {
    let mut out = render_turn_opening(turn);
    out.extend(render_turn_action(turn));
    push_labelled(&mut out, "System", &turn.system);
    out
}

/// Renders turns `0..upto_turn` inside the conversation-history delimiters.
/// With `include_action_of_last`, the turn at `upto_turn` is appended up to
/// its second thought (no `System:` line). Returns an empty string when
/// nothing would be rendered.
///
/// # Panics
///
/// If `upto_turn` is not below the number of turns.
pub fn render_history(d: &ReactDialogue, upto_turn: usize, include_action_of_last: bool) -> String {
    assert!(
        upto_turn < d.turns.len(),
        "upto_turn {upto_turn} out of range for {} turns",
        d.turns.len()
    );
    let mut lines: Vec<String> = d.turns[..upto_turn].iter().flat_map(render_turn).collect();
    if include_action_of_last {
        let current = &d.turns[upto_turn];
        lines.extend(render_turn_opening(current));
        lines.extend(render_turn_action(current));
    }
    wrap_history(&lines)
}

/// Renders complete turns inside the conversation-history delimiters, or an
/// empty string for no turns.
pub fn render_turns_block(turns: &[ReactTurn]) -> String {
    let lines: Vec<String> = turns.iter().flat_map(render_turn).collect();
    wrap_history(&lines)
}

fn wrap_history(lines: &[String]) -> String {
    if lines.is_empty() {
        return String::new();
    }
    format!("{HISTORY_BEGIN}\n{}\n{HISTORY_END}", lines.join("\n"))
}

/// Renders every turn of the dialogue, without delimiters.
pub fn render_trace(d: &ReactDialogue) -> String {
    d.turns
        .iter()
        .flat_map(render_turn)
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_direct_turn() {
        let t = parse_trace("User: hi\nThought: no API needed\nSystem: hello").unwrap();
        assert_eq!(t.turns.len(), 1);
        assert!(!t.turns[0].is_api());
        assert_eq!(t.turns[0].thought1.as_deref(), Some("no API needed"));
        assert_eq!(t.turns[0].system, "hello");
    }

    #[test]
    fn no_user_line() {
        assert_eq!(parse_trace("Thought: x\nSystem: y"), Err(TraceError::EmptyTrace));
        assert_eq!(parse_trace(""), Err(TraceError::EmptyTrace));
    }

    #[test]
    fn api_turn_without_system_is_truncated() {
        let err = parse_trace("User: a\nThought: b c d\nAction: F(x=1)\nObservation: {}\nThought: e").unwrap_err();
        assert!(matches!(err, TraceError::TruncatedTurn { turn: 0, .. }));
    }

    #[test]
    fn bad_action_reports_turn() {
        let err = parse_trace("User: a\nSystem: b\nUser: c\nThought: d\nAction: F(x=\nObservation: {}\nThought: e\nSystem: f")
            .unwrap_err();
        assert!(matches!(err, TraceError::Parse { turn: 1, .. }));
    }

    #[test]
    fn unknown_label_attaches_with_lint() {
        let t = parse_trace("User: hi\nNote: stray\nThought: ok then fine\nSystem: yo").unwrap();
        assert_eq!(t.turns[0].user, "hi\nNote: stray");
        assert_eq!(t.lints.len(), 1);
    }

    #[test]
    fn generation_grammar_fuses_name_and_input() {
        let t = parse_trace(
            "User: play it\nThought1: need api\nAPI Name: PlaySong\nAPI Input: {'track': 'x', 'n': 2}\nAPI Result: {'ok': True}\nThought2: done\nSystem: playing",
        )
        .unwrap();
        let call = t.turns[0].action.as_ref().unwrap();
        assert_eq!(call.name, "PlaySong");
        assert_eq!(call.arg("n"), Some(&CanonValue::Integer(2)));
        assert_eq!(t.turns[0].thought2.as_deref(), Some("done"));
    }

    #[test]
    fn observation_literals() {
        let v = parse_observation_literal(
            "{'status': 'success', 'message': 'You have successfully purchased 2 tickets for the Jazz Festival.'}",
        )
        .unwrap();
        match v {
            CanonValue::Object(m) => {
                assert_eq!(m.len(), 2);
                assert!(m.values().all(|v| matches!(v, CanonValue::String(_))));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(parse_observation_literal("{}").unwrap(), CanonValue::Object(Default::default()));
        let v = parse_observation_literal(
            "{'events': [{'name': 'Jazz Festival', 'date': '2023-10-07', 'location': 'Central Park'}]}",
        )
        .unwrap();
        let CanonValue::Object(m) = v else { panic!() };
        let CanonValue::List(items) = &m["events"] else { panic!() };
        assert_eq!(items.len(), 1);
        assert!(matches!(items[0], CanonValue::Object(_)));
        assert!(parse_observation_literal("{'a': [1}").is_err());
    }

    #[test]
    fn history_counts_users() {
        let turn = ReactTurn::direct("u", Some("t t t".into()), "s");
        let d = ReactDialogue::new("d", vec![turn.clone(), turn.clone(), turn], "r").unwrap();
        let h = render_history(&d, 2, false);
        assert_eq!(h.matches("User:").count(), 2);
        assert_eq!(render_history(&d, 0, false), "");
    }

    #[test]
    fn plain_text_observation_round_trips() {
        let (v, _) = observation_or_text("Booking failed: no seats");
        assert_eq!(v, CanonValue::String("Booking failed: no seats".into()));
        assert_eq!(render_observation(&v), "Booking failed: no seats");
        let numeric_text = CanonValue::String("42".into());
        assert_eq!(render_observation(&numeric_text), "'42'");
    }
}
