//! Reference tokenizer: each maximal run of letters and digits is one token,
//! every other non-whitespace character is a token of its own.

/// Pluggable token counter for dataset statistics.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;
    fn count(&self, text: &str) -> usize;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceTokenizer;

impl Tokenizer for ReferenceTokenizer {
    fn name(&self) -> &str {
        "reference (alphanumeric runs + single punctuation)"
    }

    fn count(&self, text: &str) -> usize {
        Tokens::new(text).count()
    }
}

/// Iterator over the reference tokens of a string.
pub struct Tokens<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Tokens<'a> {
    pub fn new(text: &'a str) -> Self {
        Tokens { text, pos: 0 }
    }
}

impl<'a> Iterator for Tokens<'a> {
    type Item = &'a str;

    fn next(&mut self) -> Option<&'a str> {
        let rest = &self.text[self.pos..];
        let (start, first) = rest.char_indices().find(|(_, c)| !c.is_whitespace())?;
        let begin = self.pos + start;
        let end = if first.is_alphanumeric() {
            rest[start..]
                .char_indices()
                .find(|(_, c)| !c.is_alphanumeric())
                .map_or(self.text.len(), |(i, _)| begin + i)
        } else {
            begin + first.len_utf8()
        };
        self.pos = end;
        Some(&self.text[begin..end])
    }
}

pub fn tokenize(text: &str) -> Vec<&str> {
    Tokens::new(text).collect()
}
