//! Canonical argument values shared by calls, observations and schemas.

use std::fmt::Write as _;
use std::io;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A JSON-like value where integers and decimals are distinct tags.
#[derive(Debug, Clone, PartialEq)]
pub enum CanonValue {
    Null,
    Bool(bool),
    Integer(i64),
    Number(f64),
    String(String),
    List(Vec<CanonValue>),
    Object(IndexMap<String, CanonValue>),
}

impl CanonValue {
    pub fn from_json(v: &serde_json::Value) -> CanonValue {
        use serde_json::Value;
        match v {
            Value::Null => CanonValue::Null,
            Value::Bool(b) => CanonValue::Bool(*b),
            Value::Number(n) => match n.as_i64() {
                Some(i) => CanonValue::Integer(i),
                None => CanonValue::Number(n.as_f64().unwrap_or(f64::NAN)),
            },
            Value::String(s) => CanonValue::String(s.clone()),
            Value::Array(items) => CanonValue::List(items.iter().map(CanonValue::from_json).collect()),
            Value::Object(map) => CanonValue::Object(
                map.iter()
                    .map(|(k, v)| (k.clone(), CanonValue::from_json(v)))
                    .collect(),
            ),
        }
    }

    /// Non-finite numbers have no JSON form and become `null`.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value;
        match self {
            CanonValue::Null => Value::Null,
            CanonValue::Bool(b) => Value::Bool(*b),
            CanonValue::Integer(i) => Value::from(*i),
            CanonValue::Number(f) => serde_json::Number::from_f64(*f)
                .map(Value::Number)
                .unwrap_or(Value::Null),
            CanonValue::String(s) => Value::String(s.clone()),
            CanonValue::List(items) => Value::Array(items.iter().map(CanonValue::to_json).collect()),
            CanonValue::Object(map) => Value::Object(
                map.iter().map(|(k, v)| (k.clone(), v.to_json())).collect(),
            ),
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            CanonValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            CanonValue::Null => "null",
            CanonValue::Bool(_) => "boolean",
            CanonValue::Integer(_) => "integer",
            CanonValue::Number(_) => "number",
            CanonValue::String(_) => "string",
            CanonValue::List(_) => "list",
            CanonValue::Object(_) => "object",
        }
    }

    /// Renders in the call-literal syntax: single-quoted strings with
    /// backslash escapes, `[a, b]` lists and `{'k': v}` objects.
    pub fn render_literal(&self) -> String {
        let mut out = String::new();
        self.write_literal(&mut out);
        out
    }

    fn write_literal(&self, out: &mut String) {
        match self {
            CanonValue::Null => out.push_str("null"),
            CanonValue::Bool(true) => out.push_str("true"),
            CanonValue::Bool(false) => out.push_str("false"),
            CanonValue::Integer(i) => {
                let _ = write!(out, "{i}");
            }
            CanonValue::Number(f) => out.push_str(&format_decimal(*f)),
            CanonValue::String(s) => write_quoted(out, s),
            CanonValue::List(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    item.write_literal(out);
                }
                out.push(']');
            }
            CanonValue::Object(map) => {
                out.push('{');
                for (i, (k, v)) in map.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_quoted(out, k);
                    out.push_str(": ");
                    v.write_literal(out);
                }
                out.push('}');
            }
        }
    }
}

/// Decimal rendering that always keeps a fractional part or exponent, so the
/// value re-parses as a number rather than an integer.
pub fn format_decimal(f: f64) -> String {
    if f.is_nan() {
        return "nan".to_string();
    }
    if f.is_infinite() {
        return if f > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{f:?}")
}

fn write_quoted(out: &mut String, s: &str) {
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('\'');
}

impl Serialize for CanonValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CanonValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(deserializer)?;
        Ok(CanonValue::from_json(&v))
    }
}

/// JSON formatter producing `", "` and `": "` separators, the layout used by
/// the tool blocks and targets in the training samples.
#[derive(Debug, Default, Clone, Copy)]
pub struct SpacedFormatter;

impl serde_json::ser::Formatter for SpacedFormatter {
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        writer.write_all(b": ")
    }
}

/// Serializes with [`SpacedFormatter`].
pub fn to_spaced_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SpacedFormatter);
    value
        .serialize(&mut ser)
        .expect("serializing to an in-memory buffer cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_keep_a_fraction() {
        assert_eq!(format_decimal(1.0), "1.0");
        assert_eq!(format_decimal(2.5), "2.5");
        assert_eq!(format_decimal(46.95828), "46.95828");
    }

    #[test]
    fn spaced_json_layout() {
        let v: serde_json::Value = serde_json::from_str(r#"[{"name":"a","arguments":{"x":1,"y":[1,2]}}]"#).unwrap();
        assert_eq!(
            to_spaced_json(&v),
            r#"[{"name": "a", "arguments": {"x": 1, "y": [1, 2]}}]"#
        );
    }

    #[test]
    fn json_integer_and_decimal_tags_survive() {
        let v: CanonValue = serde_json::from_str("[2, 2.0, -3]").unwrap();
        assert_eq!(
            v,
            CanonValue::List(vec![
                CanonValue::Integer(2),
                CanonValue::Number(2.0),
                CanonValue::Integer(-3)
            ])
        );
        assert_eq!(serde_json::to_string(&v).unwrap(), "[2,2.0,-3]");
    }

    #[test]
    fn literal_escapes_quotes() {
        let v = CanonValue::String("don't".into());
        assert_eq!(v.render_literal(), r"'don\'t'");
    }
}
