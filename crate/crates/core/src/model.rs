//! Shared domain types: tool schemas, calls, dialogue state, ReAct turns and
//! instruction samples, plus schema-level call validation.

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::value::{to_spaced_json, CanonValue};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("duplicate function name {0:?}")]
    DuplicateFunction(String),
    #[error("function {function:?} parameter {param:?}: unknown type {token:?}")]
    BadType {
        function: String,
        param: String,
        token: String,
    },
    #[error("function {function:?} declares parameter {param:?} twice")]
    DuplicateParam { function: String, param: String },
    #[error("duplicate argument {0:?}")]
    DuplicateArg(String),
    #[error("parameter {0:?} is required but carries a default")]
    RequiredWithDefault(String),
    #[error("empty identifier")]
    EmptyName,
    #[error("malformed registry document: {0}")]
    Malformed(String),
    #[error("invalid turn {index}: {reason}")]
    BadTurn { index: usize, reason: String },
    #[error("dialogue has no turns")]
    NoTurns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    String,
    Integer,
    Number,
    Boolean,
    List,
    Object,
}

impl ValueType {
    /// Maps a source-corpus type token. Unknown tokens are rejected.
    pub fn from_token(token: &str) -> Option<ValueType> {
        Some(match token.trim().to_ascii_lowercase().as_str() {
            "str" | "string" => ValueType::String,
            "int" | "integer" => ValueType::Integer,
            "float" | "number" | "double" => ValueType::Number,
            "bool" | "boolean" => ValueType::Boolean,
            "list" | "array" => ValueType::List,
            "dict" | "object" => ValueType::Object,
            _ => return None,
        })
    }

    /// The short token used in tool blocks (`str`, `int`, ...).
    pub fn token(self) -> &'static str {
        match self {
            ValueType::String => "str",
            ValueType::Integer => "int",
            ValueType::Number => "float",
            ValueType::Boolean => "bool",
            ValueType::List => "list",
            ValueType::Object => "dict",
        }
    }

    /// Integers conform to `number`; nothing else is widened.
    pub fn accepts(self, v: &CanonValue) -> bool {
        matches!(
            (self, v),
            (ValueType::String, CanonValue::String(_))
                | (ValueType::Integer, CanonValue::Integer(_))
                | (ValueType::Number, CanonValue::Integer(_) | CanonValue::Number(_))
                | (ValueType::Boolean, CanonValue::Bool(_))
                | (ValueType::List, CanonValue::List(_))
                | (ValueType::Object, CanonValue::Object(_))
        )
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueType::String => "string",
            ValueType::Integer => "integer",
            ValueType::Number => "number",
            ValueType::Boolean => "boolean",
            ValueType::List => "list",
            ValueType::Object => "object",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub description: String,
    pub value_type: ValueType,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<CanonValue>,
}

impl ParamSpec {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        value_type: ValueType,
        default: Option<CanonValue>,
    ) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::EmptyName);
        }
        Ok(ParamSpec {
            name,
            description: description.into(),
            value_type,
            required: default.is_none(),
            default,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSchema {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
}

impl FunctionSchema {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        params: Vec<ParamSpec>,
    ) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::EmptyName);
        }
        for (i, p) in params.iter().enumerate() {
            if p.required && p.default.is_some() {
                return Err(ModelError::RequiredWithDefault(p.name.clone()));
            }
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(ModelError::DuplicateParam {
                    function: name,
                    param: p.name.clone(),
                });
            }
        }
        Ok(FunctionSchema {
            name,
            description: description.into(),
            params,
        })
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    /// `Name(a, b, c)`, the compact form used in numbered tool lists.
    pub fn signature(&self) -> String {
        let names: Vec<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
        format!("{}({})", self.name, names.join(", "))
    }

    /// The tool-block record: `{"name", "description", "parameters": {p: {"description", "type", "default"?}}}`.
    pub fn to_tool_json(&self) -> serde_json::Value {
        let mut params = serde_json::Map::new();
        for p in &self.params {
            let mut rec = serde_json::Map::new();
            rec.insert("description".into(), p.description.clone().into());
            rec.insert("type".into(), p.value_type.token().into());
            if let Some(d) = &p.default {
                rec.insert("default".into(), d.to_json());
            }
            params.insert(p.name.clone(), rec.into());
        }
        let mut obj = serde_json::Map::new();
        obj.insert("name".into(), self.name.clone().into());
        obj.insert("description".into(), self.description.clone().into());
        obj.insert("parameters".into(), params.into());
        obj.into()
    }

    fn from_tool_json(v: &serde_json::Value) -> Result<Self, ModelError> {
        let obj = v
            .as_object()
            .ok_or_else(|| ModelError::Malformed("function record is not an object".into()))?;
        let name = obj
            .get("name")
            .and_then(|n| n.as_str())
            .ok_or_else(|| ModelError::Malformed("function record without a string name".into()))?;
        let description = obj.get("description").and_then(|d| d.as_str()).unwrap_or("");
        let mut params = Vec::new();
        match obj.get("parameters") {
            None | Some(serde_json::Value::Null) => {}
            Some(serde_json::Value::Object(map)) => {
                for (pname, rec) in map {
                    let rec = rec.as_object().ok_or_else(|| {
                        ModelError::Malformed(format!("{name}.{pname}: parameter record is not an object"))
                    })?;
                    let token = rec.get("type").and_then(|t| t.as_str()).unwrap_or("");
                    let value_type = ValueType::from_token(token).ok_or_else(|| ModelError::BadType {
                        function: name.to_string(),
                        param: pname.clone(),
                        token: token.to_string(),
                    })?;
                    let pdesc = rec.get("description").and_then(|d| d.as_str()).unwrap_or("");
                    let default = rec.get("default").map(CanonValue::from_json);
                    params.push(ParamSpec::new(pname.clone(), pdesc, value_type, default)?);
                }
            }
            Some(_) => {
                return Err(ModelError::Malformed(format!("{name}: parameters is not an object")));
            }
        }
        FunctionSchema::new(name, description, params)
    }
}

/// The set of declared tools, keyed by exact name, in declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FunctionRegistry {
    schemas: IndexMap<String, FunctionSchema>,
}

impl FunctionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_schemas(schemas: impl IntoIterator<Item = FunctionSchema>) -> Result<Self, ModelError> {
        let mut reg = FunctionRegistry::new();
        for s in schemas {
            reg.insert(s)?;
        }
        Ok(reg)
    }

    pub fn insert(&mut self, schema: FunctionSchema) -> Result<(), ModelError> {
        if self.schemas.contains_key(&schema.name) {
            return Err(ModelError::DuplicateFunction(schema.name));
        }
        self.schemas.insert(schema.name.clone(), schema);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&FunctionSchema> {
        self.schemas.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.schemas.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FunctionSchema> {
        self.schemas.values()
    }

    /// Tool-block JSON list in declaration order.
    pub fn to_tool_json(&self) -> String {
        let list: Vec<serde_json::Value> = self.iter().map(FunctionSchema::to_tool_json).collect();
        to_spaced_json(&list)
    }

    /// `1. Name(a, b)` lines, one per function.
    pub fn numbered_signatures(&self) -> String {
        self.iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {}", i + 1, s.signature()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Builds a registry from a list of tool records.
pub fn load_registry(doc: &serde_json::Value) -> Result<FunctionRegistry, ModelError> {
    let items = doc
        .as_array()
        .ok_or_else(|| ModelError::Malformed("registry document is not a list".into()))?;
    let mut reg = FunctionRegistry::new();
    for item in items {
        reg.insert(FunctionSchema::from_tool_json(item)?)?;
    }
    Ok(reg)
}

pub fn load_registry_str(text: &str) -> Result<FunctionRegistry, ModelError> {
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
    load_registry(&doc)
}

/// Reads compact signature lines such as `2. ReserveCar(pickup_location, pickup_date)`.
/// Parameters carry no type information there; they load as required strings.
/// Blank lines and lines without a parenthesised signature (such as `.`) are skipped.
pub fn parse_compact_registry(text: &str) -> Result<FunctionRegistry, ModelError> {
    let mut reg = FunctionRegistry::new();
    for line in text.lines() {
        let line = line.trim();
        let body = match line.split_once(". ") {
            Some((num, rest)) if num.chars().all(|c| c.is_ascii_digit()) && !num.is_empty() => rest,
            _ => line,
        };
        let (Some(open), Some(close)) = (body.find('('), body.rfind(')')) else {
            continue;
        };
        if close < open {
            continue;
        }
        let name = body[..open].trim();
        let mut params = Vec::new();
        for p in body[open + 1..close].split(',').map(str::trim).filter(|p| !p.is_empty()) {
            params.push(ParamSpec::new(p, "", ValueType::String, None)?);
        }
        reg.insert(FunctionSchema::new(name, "", params)?)?;
    }
    Ok(reg)
}

/// A parsed function invocation with keyword arguments in source order.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiCall {
    pub name: String,
    pub args: Vec<(String, CanonValue)>,
}

impl ApiCall {
    pub fn new(name: impl Into<String>, args: Vec<(String, CanonValue)>) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::EmptyName);
        }
        for (i, (k, _)) in args.iter().enumerate() {
            if args[..i].iter().any(|(j, _)| j == k) {
                return Err(ModelError::DuplicateArg(k.clone()));
            }
        }
        Ok(ApiCall { name, args })
    }

    pub fn arg(&self, name: &str) -> Option<&CanonValue> {
        self.args.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let args: serde_json::Map<String, serde_json::Value> =
            self.args.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
        serde_json::json!({ "name": self.name, "arguments": args })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, String> {
        let obj = v.as_object().ok_or("call is not an object")?;
        let name = obj
            .get("name")
            .and_then(|n| n.as_str())
            .ok_or("call without a string \"name\"")?;
        let args = match obj.get("arguments") {
            None | Some(serde_json::Value::Null) => Vec::new(),
            Some(serde_json::Value::Object(m)) => {
                m.iter().map(|(k, v)| (k.clone(), CanonValue::from_json(v))).collect()
            }
            Some(_) => return Err("\"arguments\" is not an object".into()),
        };
        ApiCall::new(name, args).map_err(|e| e.to_string())
    }
}

impl Serialize for ApiCall {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ApiCall {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(deserializer)?;
        ApiCall::from_json(&v).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    UnknownFunction,
    UnknownArgument,
    WrongType,
    MissingRequired,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SchemaViolation {
    UnknownFunction { function: String },
    UnknownArgument { function: String, argument: String },
    WrongType {
        function: String,
        argument: String,
        expected: ValueType,
        found: String,
    },
    MissingRequired { function: String, param: String },
}

impl SchemaViolation {
    pub fn kind(&self) -> ViolationKind {
        match self {
            SchemaViolation::UnknownFunction { .. } => ViolationKind::UnknownFunction,
            SchemaViolation::UnknownArgument { .. } => ViolationKind::UnknownArgument,
            SchemaViolation::WrongType { .. } => ViolationKind::WrongType,
            SchemaViolation::MissingRequired { .. } => ViolationKind::MissingRequired,
        }
    }
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaViolation::UnknownFunction { function } => write!(f, "unknown function {function}"),
            SchemaViolation::UnknownArgument { function, argument } => {
                write!(f, "{function} has no parameter {argument}")
            }
            SchemaViolation::WrongType {
                function,
                argument,
                expected,
                found,
            } => write!(f, "{function}.{argument}: expected {expected}, found {found}"),
            SchemaViolation::MissingRequired { function, param } => {
                write!(f, "{function} is missing required parameter {param}")
            }
        }
    }
}

/// Checks a call against the registry. Violations are returned as data; an
/// empty list means the call conforms. The result does not depend on argument
/// order: argument-level findings are sorted by name, missing parameters follow
/// schema order.
pub fn validate_call_against_schema(call: &ApiCall, reg: &FunctionRegistry) -> Vec<SchemaViolation> {
    let Some(schema) = reg.get(&call.name) else {
        return vec![SchemaViolation::UnknownFunction {
            function: call.name.clone(),
        }];
    };
    let mut out = Vec::new();
    let mut args: Vec<&(String, CanonValue)> = call.args.iter().collect();
    args.sort_by(|a, b| a.0.cmp(&b.0));
    for (name, value) in args {
        match schema.param(name) {
            None => out.push(SchemaViolation::UnknownArgument {
                function: call.name.clone(),
                argument: name.clone(),
            }),
            Some(p) if !p.value_type.accepts(value) => out.push(SchemaViolation::WrongType {
                function: call.name.clone(),
                argument: name.clone(),
                expected: p.value_type,
                found: value.type_name().to_string(),
            }),
            Some(_) => {}
        }
    }
    for p in schema.params.iter().filter(|p| p.required) {
        if call.arg(&p.name).is_none() {
            out.push(SchemaViolation::MissingRequired {
                function: call.name.clone(),
                param: p.name.clone(),
            });
        }
    }
    out
}

/// Per-turn dialogue state: at most one value per (domain, slot).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DialogueState {
    triples: BTreeMap<(String, String), String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateTriple {
    pub domain: String,
    pub slot: String,
    pub value: String,
}

impl DialogueState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the value for (domain, slot), returning the one it replaced.
    pub fn insert(
        &mut self,
        domain: impl Into<String>,
        slot: impl Into<String>,
        value: impl Into<String>,
    ) -> Option<String> {
        self.triples.insert((domain.into(), slot.into()), value.into())
    }

    pub fn get(&self, domain: &str, slot: &str) -> Option<&str> {
        self.triples
            .get(&(domain.to_string(), slot.to_string()))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.triples
            .iter()
            .map(|((d, s), v)| (d.as_str(), s.as_str(), v.as_str()))
    }

    /// Applies `f` to every value.
    pub fn map_values(&self, f: impl Fn(&str) -> String) -> DialogueState {
        DialogueState {
            triples: self
                .triples
                .iter()
                .map(|(k, v)| (k.clone(), f(v)))
                .collect(),
        }
    }
}

impl FromIterator<(String, String, String)> for DialogueState {
    fn from_iter<I: IntoIterator<Item = (String, String, String)>>(iter: I) -> Self {
        let mut st = DialogueState::new();
        for (d, s, v) in iter {
            st.insert(d, s, v);
        }
        st
    }
}

impl Serialize for DialogueState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let list: Vec<StateTriple> = self
            .triples()
            .map(|(d, s, v)| StateTriple {
                domain: d.into(),
                slot: s.into(),
                value: v.into(),
            })
            .collect();
        list.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DialogueState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let list = Vec::<StateTriple>::deserialize(deserializer)?;
        Ok(list.into_iter().map(|t| (t.domain, t.slot, t.value)).collect())
    }
}

/// One turn of a ReAct-style dialogue. An API turn carries `thought1`,
/// `action`, `observation` and `thought2`; a direct turn carries at most one
/// thought (in `thought1`) and no action data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactTurn {
    pub user: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ApiCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<CanonValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought2: Option<String>,
    pub system: String,
}

impl ReactTurn {
    pub fn direct(user: impl Into<String>, thought: Option<String>, system: impl Into<String>) -> Self {
        ReactTurn {
            user: user.into(),
            thought1: thought,
            action: None,
            observation: None,
            thought2: None,
            system: system.into(),
        }
    }

    pub fn api(
        user: impl Into<String>,
        thought1: impl Into<String>,
        action: ApiCall,
        observation: CanonValue,
        thought2: impl Into<String>,
        system: impl Into<String>,
    ) -> Self {
        ReactTurn {
            user: user.into(),
            thought1: Some(thought1.into()),
            action: Some(action),
            observation: Some(observation),
            thought2: Some(thought2.into()),
            system: system.into(),
        }
    }

    pub fn is_api(&self) -> bool {
        self.action.is_some()
    }

    /// Returns the reason the turn breaks the API-path/direct-path shape.
    pub fn shape_error(&self) -> Option<&'static str> {
        if self.action.is_some() {
            if self.thought1.is_none() {
                return Some("API turn without a first thought");
            }
            if self.observation.is_none() {
                return Some("API turn without an observation");
            }
            if self.thought2.is_none() {
                return Some("API turn without a second thought");
            }
        } else {
            if self.observation.is_some() {
                return Some("observation without an action");
            }
            if self.thought2.is_some() {
                return Some("second thought without an action");
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactDialogue {
    pub id: String,
    pub turns: Vec<ReactTurn>,
    #[serde(default)]
    pub registry_ref: String,
}

impl ReactDialogue {
    pub fn new(
        id: impl Into<String>,
        turns: Vec<ReactTurn>,
        registry_ref: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let d = ReactDialogue {
            id: id.into(),
            turns,
            registry_ref: registry_ref.into(),
        };
        d.check()?;
        Ok(d)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.turns.is_empty() {
            return Err(ModelError::NoTurns);
        }
        for (index, t) in self.turns.iter().enumerate() {
            if let Some(reason) = t.shape_error() {
                return Err(ModelError::BadTurn {
                    index,
                    reason: reason.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn api_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.is_api()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DomainTag {
    #[serde(rename = "TOD")]
    Tod,
    #[serde(rename = "LA")]
    La,
    #[serde(rename = "CRA_action")]
    CraAction,
    #[serde(rename = "CRA_response")]
    CraResponse,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::Tod => "TOD",
            DomainTag::La => "LA",
            DomainTag::CraAction => "CRA_action",
            DomainTag::CraResponse => "CRA_response",
        }
    }

    pub fn parse(s: &str) -> Option<DomainTag> {
        match s {
            "TOD" => Some(DomainTag::Tod),
            "LA" => Some(DomainTag::La),
            "CRA_action" => Some(DomainTag::CraAction),
            "CRA_response" => Some(DomainTag::CraResponse),
            _ => None,
        }
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An instruction/input/output training record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InstructionSample {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub domain_tag: DomainTag,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn s(v: &str) -> CanonValue {
        CanonValue::String(v.into())
    }

    fn weather_registry() -> FunctionRegistry {
        let p = ParamSpec::new("city", "city name", ValueType::String, None).unwrap();
        FunctionRegistry::from_schemas([FunctionSchema::new("GetWeather", "", vec![p]).unwrap()]).unwrap()
    }

    #[test]
    fn empty_list_gives_empty_registry() {
        assert!(load_registry(&json!([])).unwrap().is_empty());
    }

    #[test]
    fn duplicate_function_rejected() {
        let doc = json!([
            {"name": "GetWeather", "description": "", "parameters": {}},
            {"name": "GetWeather", "description": "", "parameters": {}}
        ]);
        assert_eq!(
            load_registry(&doc),
            Err(ModelError::DuplicateFunction("GetWeather".into()))
        );
    }

    #[test]
    fn unknown_type_token_rejected() {
        let doc = json!([{"name": "F", "description": "", "parameters": {"x": {"description": "", "type": "tuple"}}}]);
        assert!(matches!(load_registry(&doc), Err(ModelError::BadType { .. })));
    }

    #[test]
    fn required_follows_default_absence() {
        let doc = json!([{"name": "F", "description": "d", "parameters": {
            "a": {"description": "", "type": "str"},
            "b": {"description": "", "type": "int", "default": 3}
        }}]);
        let reg = load_registry(&doc).unwrap();
        let f = reg.get("F").unwrap();
        assert!(f.param("a").unwrap().required);
        assert!(!f.param("b").unwrap().required);
        assert_eq!(f.param("b").unwrap().default, Some(CanonValue::Integer(3)));
    }

    #[test]
    fn conforming_call_has_no_violations() {
        let call = ApiCall::new("GetWeather", vec![("city".into(), s("Paris"))]).unwrap();
        assert!(validate_call_against_schema(&call, &weather_registry()).is_empty());
    }

    #[test]
    fn unknown_function() {
        let call = ApiCall::new("UnknownAPI", vec![("x".into(), CanonValue::Integer(1))]).unwrap();
        let v = validate_call_against_schema(&call, &weather_registry());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind(), ViolationKind::UnknownFunction);
    }

    #[test]
    fn missing_required_from_compact_signature() {
        let reg = parse_compact_registry("1. FindBus(from_location, to_location, leaving_date)").unwrap();
        let call = ApiCall::new("FindBus", vec![("from_location".into(), s("A"))]).unwrap();
        let v = validate_call_against_schema(&call, &reg);
        assert_eq!(
            v,
            vec![
                SchemaViolation::MissingRequired {
                    function: "FindBus".into(),
                    param: "to_location".into()
                },
                SchemaViolation::MissingRequired {
                    function: "FindBus".into(),
                    param: "leaving_date".into()
                },
            ]
        );
    }

    #[test]
    fn integer_widens_to_number_but_not_back() {
        assert!(ValueType::Number.accepts(&CanonValue::Integer(2)));
        assert!(!ValueType::Integer.accepts(&CanonValue::Number(2.5)));
    }

    #[test]
    fn compact_registry_skips_ellipsis_lines() {
        let reg = parse_compact_registry("1. A(x)\n.\n.\n50. B(y, z)\n").unwrap();
        assert_eq!(reg.len(), 2);
        assert_eq!(reg.numbered_signatures(), "1. A(x)\n2. B(y, z)");
    }

    #[test]
    fn duplicate_arg_rejected() {
        let err = ApiCall::new("F", vec![("a".into(), s("1")), ("a".into(), s("2"))]);
        assert_eq!(err, Err(ModelError::DuplicateArg("a".into())));
    }

    #[test]
    fn state_insert_is_idempotent() {
        let mut st = DialogueState::new();
        st.insert("hotel", "area", "north");
        let before = st.clone();
        st.insert("hotel", "area", "north");
        assert_eq!(st, before);
        assert_eq!(st.len(), 1);
    }

    #[test]
    fn turn_shape() {
        let call = ApiCall::new("F", vec![]).unwrap();
        let mut t = ReactTurn::api("u", "t1", call, CanonValue::Null, "t2", "s");
        assert!(t.shape_error().is_none());
        t.thought2 = None;
        assert!(t.shape_error().is_some());
        assert!(ReactDialogue::new("d", vec![], "r").is_err());
    }
}
