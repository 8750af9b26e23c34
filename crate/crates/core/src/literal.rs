//! Lenient literal grammar shared by call arguments and observations.
//!
//! Accepts single- or double-quoted strings, integers, decimals (with optional
//! exponent), `true`/`false`/`null` and their Python spellings, bracketed lists
//! and brace-delimited objects. An unquoted run of plain words up to the next
//! delimiter is read as a string and reported through a [`LintWarning`].

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::value::CanonValue;

const MAX_DEPTH: usize = 128;

/// Non-fatal irregularity noticed while parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintWarning {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    /// Character offset into the parsed text.
    pub position: usize,
    pub message: String,
}

impl SyntaxError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        SyntaxError {
            position,
            message: message.into(),
        }
    }
}

pub(crate) struct Cursor {
    chars: Vec<char>,
    pub pos: usize,
    pub lints: Vec<LintWarning>,
    bare_keys: bool,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '.'
}

fn is_bare_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, ' ' | '\t' | '_' | '.' | '-' | '/' | ':' | '@' | '#' | '&' | '+' | '!' | '?' | '%' | '$' | '\'')
}

impl Cursor {
    pub fn new(text: &str) -> Self {
        Cursor {
            chars: text.chars().collect(),
            pos: 0,
            lints: Vec::new(),
            bare_keys: false,
        }
    }

    pub fn with_bare_keys(mut self) -> Self {
        self.bare_keys = true;
        self
    }

    pub fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    pub fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    pub fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, c: char) -> Result<(), SyntaxError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{c}'")))
        }
    }

    pub fn unexpected(&self, wanted: &str) -> SyntaxError {
        match self.peek() {
            Some(c) => SyntaxError::new(self.pos, format!("expected {wanted}, found '{c}'")),
            None => SyntaxError::new(self.pos, format!("expected {wanted}, found end of input")),
        }
    }

    pub fn ident(&mut self) -> Option<String> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if is_ident_char(c)) {
            self.pos += 1;
        }
        (self.pos > start).then(|| self.chars[start..self.pos].iter().collect())
    }

    pub fn value(&mut self) -> Result<CanonValue, SyntaxError> {
        self.value_at(0)
    }

    fn value_at(&mut self, depth: usize) -> Result<CanonValue, SyntaxError> {
        if depth > MAX_DEPTH {
            return Err(SyntaxError::new(self.pos, "nesting too deep"));
        }
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.unexpected("a value")),
            Some('\'') | Some('"') => self.string().map(CanonValue::String),
            Some('[') => self.list(depth),
            Some('{') => self.object(depth),
            Some(c) if c == '-' || c == '+' || c.is_ascii_digit() => match self.number() {
                Some(v) if self.at_delimiter() => Ok(v),
                _ => {
                    self.pos = start;
                    self.bare(start)
                }
            },
            Some(c) if c.is_alphanumeric() || c == '_' => {
                let word = self.ident().unwrap_or_default();
                if self.at_delimiter() {
                    match word.as_str() {
                        "true" | "True" => return Ok(CanonValue::Bool(true)),
                        "false" | "False" => return Ok(CanonValue::Bool(false)),
                        "null" | "None" => return Ok(CanonValue::Null),
                        _ => {}
                    }
                }
                self.pos = start;
                self.bare(start)
            }
            Some(_) => Err(self.unexpected("a value")),
        }
    }

    /// True when the next non-space character ends a value.
    fn at_delimiter(&self) -> bool {
        let mut p = self.pos;
        while let Some(c) = self.chars.get(p) {
            if c.is_whitespace() {
                p += 1;
                continue;
            }
            return matches!(c, ',' | ')' | ']' | '}');
        }
        true
    }

    fn number(&mut self) -> Option<CanonValue> {
        let start = self.pos;
        if matches!(self.peek(), Some('-') | Some('+')) {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return None;
        }
        let mut decimal = false;
        if self.peek() == Some('.') {
            decimal = true;
            self.pos += 1;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('-') | Some('+')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos == exp_start {
                self.pos = save;
            } else {
                decimal = true;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        if !decimal {
            if let Ok(i) = text.parse::<i64>() {
                return Some(CanonValue::Integer(i));
            }
        }
        text.parse::<f64>().ok().map(CanonValue::Number)
    }

    fn bare(&mut self, start: usize) -> Result<CanonValue, SyntaxError> {
        while matches!(self.peek(), Some(c) if is_bare_char(c)) {
            self.pos += 1;
        }
        if !self.at_delimiter() {
            return Err(self.unexpected("a quoted string or literal"));
        }
        let raw: String = self.chars[start..self.pos].iter().collect();
        let text = raw.trim_end().to_string();
        if text.is_empty() {
            return Err(SyntaxError::new(start, "expected a value"));
        }
        self.lints.push(LintWarning {
            position: start,
            message: format!("unquoted value {text:?} read as a string"),
        });
        Ok(CanonValue::String(text))
    }

    pub fn string(&mut self) -> Result<String, SyntaxError> {
        let open = self.pos;
        let quote = match self.peek() {
            Some(q @ ('\'' | '"')) => q,
            _ => return Err(self.unexpected("a quoted string")),
        };
        self.pos += 1;
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(SyntaxError::new(open, "unterminated string"));
            };
            self.pos += 1;
            if c == quote {
                return Ok(out);
            }
            if c != '\\' {
                out.push(c);
                continue;
            }
            let Some(e) = self.peek() else {
                return Err(SyntaxError::new(open, "unterminated string"));
            };
            self.pos += 1;
            match e {
                'n' => out.push('\n'),
                'r' => out.push('\r'),
                't' => out.push('\t'),
                '0' => out.push('\0'),
                '\\' | '\'' | '"' | '/' => out.push(e),
                'u' => {
                    let hex: String = self.chars.iter().skip(self.pos).take(4).collect();
                    match u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                        Some(ch) if hex.len() == 4 => {
                            out.push(ch);
                            self.pos += 4;
                        }
                        _ => return Err(SyntaxError::new(self.pos - 2, "bad \\u escape")),
                    }
                }
                other => {
                    out.push('\\');
                    out.push(other);
                }
            }
        }
    }

    fn list(&mut self, depth: usize) -> Result<CanonValue, SyntaxError> {
        self.expect('[')?;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.eat(']') {
                return Ok(CanonValue::List(items));
            }
            if !items.is_empty() {
                self.expect(',')?;
                self.skip_ws();
                if self.eat(']') {
                    return Ok(CanonValue::List(items));
                }
            }
            if self.at_end() {
                return Err(self.unexpected("']'"));
            }
            items.push(self.value_at(depth + 1)?);
        }
    }

    fn object(&mut self, depth: usize) -> Result<CanonValue, SyntaxError> {
        self.expect('{')?;
        let mut map = IndexMap::new();
        loop {
            self.skip_ws();
            if self.eat('}') {
                return Ok(CanonValue::Object(map));
            }
            if !map.is_empty() {
                self.expect(',')?;
                self.skip_ws();
                if self.eat('}') {
                    return Ok(CanonValue::Object(map));
                }
            }
            let key_pos = self.pos;
            let key = match self.peek() {
                Some('\'') | Some('"') => self.string()?,
                Some(c) if self.bare_keys && is_ident_char(c) => {
                    let k = self.ident().unwrap_or_default();
                    self.lints.push(LintWarning {
                        position: key_pos,
                        message: format!("unquoted key {k:?}"),
                    });
                    k
                }
                _ => return Err(self.unexpected("a quoted key or '}'")),
            };
            self.skip_ws();
            self.expect(':')?;
            let v = self.value_at(depth + 1)?;
            if map.contains_key(&key) {
                return Err(SyntaxError::new(key_pos, format!("duplicate key {key:?}")));
            }
            map.insert(key, v);
        }
    }
}

/// Parses a whole text as one literal value.
pub fn parse_literal(text: &str, bare_keys: bool) -> Result<(CanonValue, Vec<LintWarning>), SyntaxError> {
    let mut cur = Cursor::new(text);
    if bare_keys {
        cur = cur.with_bare_keys();
    }
    let v = cur.value()?;
    cur.skip_ws();
    if !cur.at_end() {
        return Err(cur.unexpected("end of input"));
    }
    Ok((v, cur.lints))
}
