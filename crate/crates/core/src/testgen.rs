//! Seeded generators of random but well-formed values, calls, schemas,
//! dialogues and samples, for round-trip and property checks.

use indexmap::IndexMap;

use crate::model::{ApiCall, DomainTag, FunctionSchema, InstructionSample, ParamSpec, ReactDialogue, ReactTurn, ValueType};
use crate::prng::Xoshiro256;
use crate::value::CanonValue;

const WORDS: &[&str] = &[
    "book", "a", "table", "for", "two", "in", "Paris", "tomorrow", "at", "7", "pm", "the", "hotel", "is",
    "near", "station", "I", "need", "an", "API", "call", "don't", "café", "São", "Paulo", "flight", "to",
    "New", "York", "please", "confirm", "tickets", "42", "3.5", "\"quoted\"", "it's", "ok", "yes", "no",
];

const PUNCT: &[&str] = &["", "", "", ".", "!", "?", ","];

const TRICKY_CHARS: &[&str] = &[
    "a", "b", "Z", "0", "9", " ", "'", "\"", "\\", "\n", "\t", "\r", "{", "}", "[", "]", ",", ":", "=", "(", ")",
    "é", "日本", "🙂", "_", ".", "-",
];

fn pick<'a>(rng: &mut Xoshiro256, items: &[&'a str]) -> &'a str {
    items[rng.below(items.len() as u64) as usize]
}

/// An identifier matching the call grammar: a letter or `_`, then letters,
/// digits, `_` or `.` (never ending in `.`).
pub fn identifier(rng: &mut Xoshiro256) -> String {
    const FIRST: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_";
    const REST: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_";
    let len = 1 + rng.below(10) as usize;
    let mut s = String::new();
    s.push(FIRST[rng.below(FIRST.len() as u64) as usize] as char);
    for i in 1..len {
        if i + 1 < len && rng.chance(0.1) {
            s.push('.');
        } else {
            s.push(REST[rng.below(REST.len() as u64) as usize] as char);
        }
    }
    s
}

/// A string mixing quotes, backslashes, control whitespace and non-ASCII text.
pub fn tricky_string(rng: &mut Xoshiro256) -> String {
    let len = rng.below(12) as usize;
    (0..len).map(|_| pick(rng, TRICKY_CHARS)).collect()
}

/// A single-line sentence of 1–12 words.
pub fn sentence(rng: &mut Xoshiro256) -> String {
    let n = 1 + rng.below(12) as usize;
    let mut words: Vec<String> = (0..n).map(|_| pick(rng, WORDS).to_string()).collect();
    let p = pick(rng, PUNCT);
    if let Some(last) = words.last_mut() {
        last.push_str(p);
    }
    words.join(" ")
}

fn finite_f64(rng: &mut Xoshiro256) -> f64 {
    match rng.below(4) {
        0 => (rng.below(2001) as f64 - 1000.0) / 8.0,
        1 => f64::from_bits(rng.next_u64() & 0x3FFF_FFFF_FFFF_FFFF) * if rng.chance(0.5) { -1.0 } else { 1.0 },
        2 => rng.next_f64() * 1e6,
        _ => (rng.below(100) as f64) + 0.5,
    }
}

fn scalar(rng: &mut Xoshiro256) -> CanonValue {
    match rng.below(6) {
        0 => CanonValue::Null,
        1 => CanonValue::Bool(rng.chance(0.5)),
        2 => CanonValue::Integer(match rng.below(3) {
            0 => rng.below(100) as i64,
            1 => rng.next_u64() as i64,
            _ => -(rng.below(1000) as i64),
        }),
        3 => {
            let f = finite_f64(rng);
            if f.is_finite() {
                CanonValue::Number(f)
            } else {
                CanonValue::Number(1.5)
            }
        }
        _ => CanonValue::String(tricky_string(rng)),
    }
}

/// A value of any shape, nested at most `depth` levels.
pub fn value(rng: &mut Xoshiro256, depth: usize) -> CanonValue {
    if depth == 0 || rng.chance(0.5) {
        return scalar(rng);
    }
    if rng.chance(0.5) {
        let n = rng.below(4) as usize;
        CanonValue::List((0..n).map(|_| value(rng, depth - 1)).collect())
    } else {
        CanonValue::Object(object_map(rng, depth - 1))
    }
}

fn object_map(rng: &mut Xoshiro256, depth: usize) -> IndexMap<String, CanonValue> {
    let n = rng.below(4) as usize;
    let mut m = IndexMap::new();
    for _ in 0..n {
        let key = if rng.chance(0.7) { identifier(rng) } else { tricky_string(rng) };
        let v = value(rng, depth);
        m.insert(key, v);
    }
    m
}

/// A call with 0–5 distinct keyword arguments of any shape (depth ≤ 3).
pub fn call(rng: &mut Xoshiro256) -> ApiCall {
    let name = identifier(rng);
    let n = rng.below(6) as usize;
    let mut args: Vec<(String, CanonValue)> = Vec::new();
    for _ in 0..n {
        let k = identifier(rng);
        if args.iter().any(|(a, _)| *a == k) {
            continue;
        }
        let v = value(rng, 3);
        args.push((k, v));
    }
    ApiCall { name, args }
}

const TYPES: [ValueType; 6] = [
    ValueType::String,
    ValueType::Integer,
    ValueType::Number,
    ValueType::Boolean,
    ValueType::List,
    ValueType::Object,
];

fn value_of_type(rng: &mut Xoshiro256, t: ValueType) -> CanonValue {
    match t {
        ValueType::String => CanonValue::String(sentence(rng)),
        ValueType::Integer => CanonValue::Integer(rng.below(100) as i64),
        ValueType::Number => CanonValue::Number(rng.below(100) as f64 + 0.25),
        ValueType::Boolean => CanonValue::Bool(rng.chance(0.5)),
        ValueType::List => CanonValue::List(vec![CanonValue::Integer(1)]),
        ValueType::Object => CanonValue::Object(IndexMap::new()),
    }
}

/// A schema with 0–5 parameters and a call that deviates from it at random:
/// wrong function name, unknown or missing arguments, or wrongly typed values.
pub fn schema_and_call(rng: &mut Xoshiro256) -> (FunctionSchema, ApiCall) {
    let name = format!("fn_{}", identifier(rng));
    let n = rng.below(6) as usize;
    let mut params = Vec::new();
    for i in 0..n {
        let t = TYPES[rng.below(TYPES.len() as u64) as usize];
        let default = rng.chance(0.3).then(|| value_of_type(rng, t));
        params.push(ParamSpec::new(format!("p{i}_{}", identifier(rng)), sentence(rng), t, default).expect("non-empty name"));
    }
    let schema = FunctionSchema::new(name.clone(), sentence(rng), params).expect("distinct params");
    let mut args = Vec::new();
    for p in &schema.params {
        if rng.chance(0.2) {
            continue;
        }
        let t = if rng.chance(0.2) {
            TYPES[rng.below(TYPES.len() as u64) as usize]
        } else {
            p.value_type
        };
        let v = value_of_type(rng, t);
        args.push((p.name.clone(), v));
    }
    if rng.chance(0.2) {
        args.push((format!("extra_{}", identifier(rng)), CanonValue::Integer(1)));
    }
    let call_name = if rng.chance(0.1) { format!("other_{}", identifier(rng)) } else { name };
    (schema, ApiCall { name: call_name, args })
}

fn observation(rng: &mut Xoshiro256) -> CanonValue {
    match rng.below(4) {
        0 => CanonValue::String(sentence(rng)),
        1 => CanonValue::List((0..rng.below(3)).map(|_| value(rng, 2)).collect()),
        _ => CanonValue::Object(object_map(rng, 2)),
    }
}

/// A well-formed dialogue of 1–6 turns, about half of them API turns.
pub fn dialogue(rng: &mut Xoshiro256, id: &str) -> ReactDialogue {
    let n = 1 + rng.below(6) as usize;
    let turns = (0..n)
        .map(|_| {
            if rng.chance(0.5) {
                ReactTurn::api(sentence(rng), sentence(rng), call(rng), observation(rng), sentence(rng), sentence(rng))
            } else {
                let thought = rng.chance(0.8).then(|| sentence(rng));
                ReactTurn::direct(sentence(rng), thought, sentence(rng))
            }
        })
        .collect();
    ReactDialogue::new(id, turns, "generated").expect("generated turns are well-formed")
}

/// A sample with arbitrary (multi-line, quoted, non-ASCII) fields.
pub fn sample(rng: &mut Xoshiro256) -> InstructionSample {
    const TAGS: [DomainTag; 4] = [DomainTag::Tod, DomainTag::La, DomainTag::CraAction, DomainTag::CraResponse];
    InstructionSample {
        instruction: format!("{}\n{}", sentence(rng), tricky_string(rng)),
        input: tricky_string(rng),
        output: sentence(rng),
        domain_tag: TAGS[rng.below(4) as usize],
    }
}

/// Seeded round-trip and commutation suites. Each returns a description of
/// every failing case; an empty list means the suite passed.
pub mod suites {
    use std::path::Path;

    use super::*;
    use crate::call::{parse_call, parse_toolcall_json, render_call, render_toolcall_json};
    use crate::mix::{emit_jsonl, read_jsonl};
    use crate::model::{validate_call_against_schema, FunctionRegistry};
    use crate::react::{parse_trace, render_history, render_turns_block};
    use crate::transform::mask_names;

    /// `parse_call(render_call(c)) == c`.
    pub fn call_round_trip(cases: usize, seed: u64) -> Vec<String> {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let mut failures = Vec::new();
        for i in 0..cases {
            let c = call(&mut rng);
            let text = render_call(&c);
            match parse_call(&text) {
                Ok(back) if back == c => {}
                other => failures.push(format!("case {i}: {text:?} -> {other:?}")),
            }
        }
        failures
    }

    /// `parse_toolcall_json(render_toolcall_json(cs)) == cs`.
    pub fn toolcall_json_round_trip(cases: usize, seed: u64) -> Vec<String> {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let mut failures = Vec::new();
        for i in 0..cases {
            let n = rng.below(4) as usize;
            let calls: Vec<ApiCall> = (0..n).map(|_| call(&mut rng)).collect();
            let text = render_toolcall_json(&calls);
            match parse_toolcall_json(&text) {
                Ok(back) if back == calls => {}
                other => failures.push(format!("case {i}: {text:?} -> {other:?}")),
            }
        }
        failures
    }

    /// `read_jsonl(emit_jsonl(samples)) == samples`, one file per case.
    pub fn jsonl_round_trip(cases: usize, seed: u64, dir: &Path) -> Vec<String> {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let mut failures = Vec::new();
        for i in 0..cases {
            let n = rng.below(5) as usize;
            let samples: Vec<InstructionSample> = (0..n).map(|_| sample(&mut rng)).collect();
            let path = dir.join(format!("case{i}.jsonl"));
            let result = emit_jsonl(&samples, &path).map_err(|e| e.to_string()).and_then(|written| {
                let lines = std::fs::read_to_string(&path).map_err(|e| e.to_string())?.lines().count();
                if written != n || lines != n {
                    return Err(format!("wrote {written} records in {lines} lines, expected {n}"));
                }
                read_jsonl(&path).map_err(|e| e.to_string())
            });
            match result {
                Ok(back) if back == samples => {}
                other => failures.push(format!("case {i}: {other:?}")),
            }
        }
        failures
    }

    /// Parsing a rendered history prefix recovers exactly those turns.
    pub fn trace_round_trip(cases: usize, seed: u64) -> Vec<String> {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let mut failures = Vec::new();
        for i in 0..cases {
            let d = dialogue(&mut rng, &format!("d{i}"));
            let upto = 1 + rng.below(d.turns.len() as u64) as usize;
            let text = if upto == d.turns.len() {
                render_turns_block(&d.turns)
            } else {
                render_history(&d, upto, false)
            };
            match parse_trace(&text) {
                Ok(p) if p.turns == d.turns[..upto] => {}
                other => failures.push(format!("case {i}: {text:?} -> {other:?}")),
            }
        }
        failures
    }

    /// Validation violations of a masked call against masked schemas, mapped
    /// back through the inverse mask, equal those of the original pair.
    pub fn masking_commutes(cases: usize, seed: u64) -> Vec<String> {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let mut failures = Vec::new();
        for i in 0..cases {
            let (schema, c) = schema_and_call(&mut rng);
            let reg = FunctionRegistry::from_schemas([schema.clone()]).expect("single schema");
            let mut before = validate_call_against_schema(&c, &reg);
            let (masked, map) = mask_names(std::slice::from_ref(&schema), rng.next_u64());
            let masked_reg = FunctionRegistry::from_schemas(masked).expect("masked names are unique");
            let inverse = map.inverse();
            let mut after: Vec<_> = validate_call_against_schema(&map.relabel_call(&c), &masked_reg)
                .iter()
                .map(|v| inverse.relabel_violation(v))
                .collect();
            before.sort();
            after.sort();
            if before != after {
                failures.push(format!("case {i}: {before:?} vs {after:?}"));
            }
        }
        failures
    }
}
