//! Deterministic corpus transforms: intent/slot records into state-tracking
//! samples, and tool-calling records into function-calling samples with
//! optional name masking.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::call::render_toolcall_json;
use crate::model::{ApiCall, DialogueState, DomainTag, FunctionSchema, InstructionSample, ModelError, ReactTurn, SchemaViolation};
use crate::prng::Xoshiro256;
use crate::react::render_turns_block;
use crate::templates::{
    FC_FORMAT_BLOCK, FC_TASK_BLOCK, QUERY_BEGIN, QUERY_END, SNIPS_DOMAINS, TOOLS_BEGIN, TOOLS_END,
};
use crate::value::to_spaced_json;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("unknown intent domain {0:?}")]
    BadDomain(String),
    #[error("gold call {0:?} does not name a listed tool")]
    InconsistentGold(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One utterance with its intent domain and slot annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnipsRecord {
    pub utterance: String,
    pub domain: String,
    /// `(slot, value)` pairs in source order.
    #[serde(default)]
    pub slots: Vec<(String, String)>,
}

impl SnipsRecord {
    /// The annotation as a dialogue state; later duplicates of a slot win.
    pub fn state(&self) -> DialogueState {
        self.slots
            .iter()
            .map(|(s, v)| (self.domain.clone(), s.clone(), v.clone()))
            .collect()
    }
}

/// `instruction` = template, `input` = `User: <utterance>`,
/// `output` = `System: {"domain": ..., "slot_values": {...}}`.
pub fn snips_to_dst(rec: &SnipsRecord, instruction_template: &str) -> Result<InstructionSample, TransformError> {
    if !SNIPS_DOMAINS.contains(&rec.domain.as_str()) {
        return Err(TransformError::BadDomain(rec.domain.clone()));
    }
    let mut slot_values: IndexMap<&str, &str> = IndexMap::new();
    for (slot, value) in &rec.slots {
        slot_values.insert(slot, value);
    }
    let mut target = IndexMap::new();
    target.insert("domain", serde_json::Value::from(rec.domain.as_str()));
    target.insert(
        "slot_values",
        serde_json::to_value(&slot_values).expect("string map serializes"),
    );
    Ok(InstructionSample {
        instruction: instruction_template.to_string(),
        input: format!("User: {}", rec.utterance),
        output: format!("System: {}", to_spaced_json(&target)),
        domain_tag: DomainTag::Tod,
    })
}

/// Reads the state back out of a state-tracking target (`System: {...}`).
pub fn parse_dst_output(output: &str) -> Option<DialogueState> {
    let body = output.strip_prefix("System: ").unwrap_or(output);
    let doc: serde_json::Value = serde_json::from_str(body).ok()?;
    let domain = doc.get("domain")?.as_str()?;
    let slots = doc.get("slot_values")?.as_object()?;
    let mut st = DialogueState::new();
    for (k, v) in slots {
        st.insert(domain, k.as_str(), v.as_str()?);
    }
    Some(st)
}

/// Function and parameter renames applied to one sample.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskMap {
    pub fn_renames: IndexMap<String, String>,
    /// Keyed by the original function name.
    pub param_renames: IndexMap<String, IndexMap<String, String>>,
}

impl MaskMap {
    pub fn is_empty(&self) -> bool {
        self.fn_renames.is_empty()
    }

    pub fn apply_schema(&self, schema: &FunctionSchema) -> FunctionSchema {
        let params = self.param_renames.get(&schema.name);
        FunctionSchema {
            name: self.fn_renames.get(&schema.name).cloned().unwrap_or_else(|| schema.name.clone()),
            description: schema.description.clone(),
            params: schema
                .params
                .iter()
                .map(|p| {
                    let mut p = p.clone();
                    if let Some(new) = params.and_then(|m| m.get(&p.name)) {
                        p.name = new.clone();
                    }
                    p
                })
                .collect(),
        }
    }

    /// Renames a call's function and its arguments. Names without a mapping are kept.
    pub fn relabel_call(&self, call: &ApiCall) -> ApiCall {
        let params = self.param_renames.get(&call.name);
        ApiCall {
            name: self.fn_renames.get(&call.name).cloned().unwrap_or_else(|| call.name.clone()),
            args: call
                .args
                .iter()
                .map(|(k, v)| {
                    let k = params.and_then(|m| m.get(k)).cloned().unwrap_or_else(|| k.clone());
                    (k, v.clone())
                })
                .collect(),
        }
    }

    /// Renames the function and argument names a violation refers to.
    pub fn relabel_violation(&self, v: &SchemaViolation) -> SchemaViolation {
        let rename_fn = |f: &str| self.fn_renames.get(f).cloned().unwrap_or_else(|| f.to_string());
        let rename_arg = |f: &str, a: &str| {
            self.param_renames
                .get(f)
                .and_then(|m| m.get(a))
                .cloned()
                .unwrap_or_else(|| a.to_string())
        };
        match v {
            SchemaViolation::UnknownFunction { function } => SchemaViolation::UnknownFunction {
                function: rename_fn(function),
            },
            SchemaViolation::UnknownArgument { function, argument } => SchemaViolation::UnknownArgument {
                function: rename_fn(function),
                argument: rename_arg(function, argument),
            },
            SchemaViolation::WrongType {
                function,
                argument,
                expected,
                found,
            } => SchemaViolation::WrongType {
                function: rename_fn(function),
                argument: rename_arg(function, argument),
                expected: *expected,
                found: found.clone(),
            },
            SchemaViolation::MissingRequired { function, param } => SchemaViolation::MissingRequired {
                function: rename_fn(function),
                param: rename_arg(function, param),
            },
        }
    }

    pub fn inverse(&self) -> MaskMap {
        let fn_renames = self.fn_renames.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
        let param_renames = self
            .param_renames
            .iter()
            .map(|(f, m)| {
                let new_f = self.fn_renames.get(f).cloned().unwrap_or_else(|| f.clone());
                (new_f, m.iter().map(|(a, b)| (b.clone(), a.clone())).collect())
            })
            .collect();
        MaskMap {
            fn_renames,
            param_renames,
        }
    }
}

const MASK_FIRST: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
const MASK_REST: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789._";

/// A mixed-case alphanumeric identifier of length 8 to 12 that may contain
/// `.` and `_` in inner positions.
fn masked_identifier(rng: &mut Xoshiro256) -> String {
    let len = 8 + rng.below(5) as usize;
    let mut out = String::with_capacity(len);
    out.push(MASK_FIRST[rng.below(MASK_FIRST.len() as u64) as usize] as char);
    for i in 1..len {
        let alphabet = if i == len - 1 { &MASK_REST[..62] } else { MASK_REST };
        out.push(alphabet[rng.below(alphabet.len() as u64) as usize] as char);
    }
    out
}

/// Replaces every function and parameter name with a fresh seeded identifier.
/// Descriptions, types and defaults are untouched.
pub fn mask_names(tools: &[FunctionSchema], seed: u64) -> (Vec<FunctionSchema>, MaskMap) {
    let mut rng = Xoshiro256::seed_from_u64(seed);
    let mut taken: std::collections::HashSet<String> = tools.iter().map(|t| t.name.clone()).collect();
    let fresh = |rng: &mut Xoshiro256, taken: &mut std::collections::HashSet<String>| loop {
        let id = masked_identifier(rng);
        if taken.insert(id.clone()) {
            return id;
        }
    };
    let mut map = MaskMap::default();
    for tool in tools {
        if map.fn_renames.contains_key(&tool.name) {
            continue;
        }
        let new_name = fresh(&mut rng, &mut taken);
        map.fn_renames.insert(tool.name.clone(), new_name);
        let mut local: std::collections::HashSet<String> = tool.params.iter().map(|p| p.name.clone()).collect();
        let mut params = IndexMap::new();
        for p in &tool.params {
            params.insert(p.name.clone(), fresh(&mut rng, &mut local));
        }
        map.param_renames.insert(tool.name.clone(), params);
    }
    let masked = tools.iter().map(|t| map.apply_schema(t)).collect();
    (masked, map)
}

/// One tool-calling record: query, offered tools, gold calls and optional
/// prior turns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcRecord {
    pub query: String,
    pub tools: Vec<serde_json::Value>,
    #[serde(default)]
    pub answers: Vec<ApiCall>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<ReactTurn>,
}

impl FcRecord {
    pub fn schemas(&self) -> Result<Vec<FunctionSchema>, ModelError> {
        let reg = crate::model::load_registry(&serde_json::Value::Array(self.tools.clone()))?;
        Ok(reg.iter().cloned().collect())
    }
}

/// Builds a function-calling sample. When `mask` is given it is applied to
/// both the tools and the gold calls.
pub fn build_fc_sample(
    query: &str,
    tools: &[FunctionSchema],
    gold_calls: &[ApiCall],
    mask: Option<&MaskMap>,
    history: Option<&[ReactTurn]>,
) -> Result<InstructionSample, TransformError> {
    let (tools, gold): (Vec<FunctionSchema>, Vec<ApiCall>) = match mask {
        Some(m) => (
            tools.iter().map(|t| m.apply_schema(t)).collect(),
            gold_calls.iter().map(|c| m.relabel_call(c)).collect(),
        ),
        None => (tools.to_vec(), gold_calls.to_vec()),
    };
    if let Some(bad) = gold.iter().find(|c| !tools.iter().any(|t| t.name == c.name)) {
        return Err(TransformError::InconsistentGold(bad.name.clone()));
    }
    let tool_list: Vec<serde_json::Value> = tools.iter().map(FunctionSchema::to_tool_json).collect();
    let mut instruction = format!(
        "{FC_TASK_BLOCK}\n\n{TOOLS_BEGIN}\n{}\n{TOOLS_END}\n\n{FC_FORMAT_BLOCK}",
        to_spaced_json(&tool_list)
    );
    if let Some(turns) = history {
        let block = render_turns_block(turns);
        if !block.is_empty() {
            instruction.push_str("\n\n");
            instruction.push_str(&block);
        }
    }
    Ok(InstructionSample {
        instruction,
        input: format!("{QUERY_BEGIN}\n{query}\n{QUERY_END}"),
        output: render_toolcall_json(&gold),
        domain_tag: DomainTag::La,
    })
}

/// Transforms a tool-calling record. Whether the record is masked is drawn
/// with probability `mask_probability` from a generator seeded with
/// `global_seed ^ index`, so results do not depend on processing order.
pub fn transform_fc_record(
    rec: &FcRecord,
    index: u64,
    global_seed: u64,
    mask_probability: f64,
) -> Result<(InstructionSample, Option<MaskMap>), TransformError> {
    let schemas = rec.schemas()?;
    let mut rng = Xoshiro256::seed_from_u64(global_seed ^ index);
    let mask = if rng.chance(mask_probability) {
        Some(mask_names(&schemas, rng.next_u64()).1)
    } else {
        None
    };
    let history = (!rec.history.is_empty()).then_some(rec.history.as_slice());
    let sample = build_fc_sample(&rec.query, &schemas, &rec.answers, mask.as_ref(), history)?;
    Ok((sample, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::call::parse_toolcall_json;
    use crate::model::{ParamSpec, ValueType};
    use crate::templates::DST_INSTRUCTION;
    use crate::value::CanonValue;

    fn forecast_tool() -> FunctionSchema {
        FunctionSchema::new(
            "get_hourly_forecast",
            "Gets hourly weather forecast information.",
            vec![
                ParamSpec::new("lat", "The latitude.", ValueType::Integer, None).unwrap(),
                ParamSpec::new("lon", "The longitude.", ValueType::Integer, Some(CanonValue::Integer(3))).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_slot_record() {
        let rec = SnipsRecord {
            utterance: "rate this".into(),
            domain: "RateBook".into(),
            slots: vec![],
        };
        let s = snips_to_dst(&rec, DST_INSTRUCTION).unwrap();
        assert_eq!(s.output, r#"System: {"domain": "RateBook", "slot_values": {}}"#);
        assert_eq!(s.domain_tag, DomainTag::Tod);
    }

    #[test]
    fn bad_domain() {
        let rec = SnipsRecord {
            utterance: "x".into(),
            domain: "OrderPizza".into(),
            slots: vec![],
        };
        assert_eq!(
            snips_to_dst(&rec, DST_INSTRUCTION),
            Err(TransformError::BadDomain("OrderPizza".into()))
        );
    }

    #[test]
    fn quoted_slot_value_round_trips() {
        let rec = SnipsRecord {
            utterance: "play \"Hey\" now".into(),
            domain: "PlayMusic".into(),
            slots: vec![("track".into(), "\"Hey\"".into())],
        };
        let s = snips_to_dst(&rec, DST_INSTRUCTION).unwrap();
        assert!(s.output.contains(r#"\"Hey\""#));
        assert_eq!(parse_dst_output(&s.output), Some(rec.state()));
    }

    #[test]
    fn masking_shapes_and_determinism() {
        let tools = vec![forecast_tool()];
        let (masked, map) = mask_names(&tools, 7);
        let (again, map2) = mask_names(&tools, 7);
        assert_eq!(masked, again);
        assert_eq!(map, map2);
        for name in std::iter::once(&masked[0].name).chain(masked[0].params.iter().map(|p| &p.name)) {
            assert!((8..=12).contains(&name.len()), "{name}");
            assert!(name.chars().all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_'));
        }
        assert_ne!(masked[0].name, "get_hourly_forecast");
        assert_eq!(masked[0].description, tools[0].description);
        assert_eq!(masked[0].params[1].default, Some(CanonValue::Integer(3)));
        let restored: Vec<FunctionSchema> = masked.iter().map(|t| map.inverse().apply_schema(t)).collect();
        assert_eq!(restored, tools);
    }

    #[test]
    fn masking_empty() {
        let (masked, map) = mask_names(&[], 1);
        assert!(masked.is_empty());
        assert!(map.is_empty());
    }

    #[test]
    fn fc_sample_outputs() {
        let tool = forecast_tool();
        let gold = ApiCall::new("get_hourly_forecast", vec![("lat".into(), CanonValue::Integer(5))]).unwrap();
        let s = build_fc_sample("q", std::slice::from_ref(&tool), &[gold.clone(), gold.clone()], None, None).unwrap();
        assert_eq!(parse_toolcall_json(&s.output).unwrap(), vec![gold.clone(), gold.clone()]);
        assert_eq!(s.input, "[BEGIN OF QUERY]\nq\n[END OF QUERY]");
        let empty = build_fc_sample("irrelevant", std::slice::from_ref(&tool), &[], None, None).unwrap();
        assert_eq!(empty.output, "[]");
        let other = ApiCall::new("nope", vec![]).unwrap();
        assert_eq!(
            build_fc_sample("q", &[tool], &[other], None, None),
            Err(TransformError::InconsistentGold("nope".into()))
        );
    }

    #[test]
    fn masked_sample_relabels_gold() {
        let tool = forecast_tool();
        let gold = ApiCall::new("get_hourly_forecast", vec![("lat".into(), CanonValue::Integer(5))]).unwrap();
        let (_, map) = mask_names(std::slice::from_ref(&tool), 3);
        let s = build_fc_sample("q", &[tool], std::slice::from_ref(&gold), Some(&map), None).unwrap();
        let out = parse_toolcall_json(&s.output).unwrap();
        assert_eq!(out, vec![map.relabel_call(&gold)]);
        assert!(!s.instruction.contains("get_hourly_forecast"));
    }
}
