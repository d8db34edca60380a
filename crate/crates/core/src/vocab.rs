//! Word-level vocabulary over the shared metric tokenizer.

use std::collections::HashMap;

use celm_metrics::tokenize;

use crate::error::{CoreError, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOT: usize = 3;

pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eot>"];

pub const DEFAULT_VOCAB_CAP: usize = 8192;

/// Largest tolerated fraction of unknown tokens in fused text.
pub const MAX_UNKNOWN_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Most frequent words first (ties alphabetical), capped at `cap`
    /// entries including the special tokens.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, cap: usize) -> Result<Self> {
        if cap <= SPECIALS.len() {
            return Err(CoreError::Config(format!("vocabulary cap {cap} leaves no room for words")));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for w in tokenize(t) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> =
            counts.into_iter().filter(|(w, _)| !SPECIALS.contains(&w.as_str())).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        words.truncate(cap - SPECIALS.len());
        Self::from_tokens(SPECIALS.iter().map(|s| s.to_string()).chain(words.into_iter().map(|(w, _)| w)).collect())
    }

    /// Vocabulary from an explicit list whose first entries are [`SPECIALS`].
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(CoreError::Config("vocabulary must start with the special tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(CoreError::Config(format!("duplicate vocabulary entry `{t}`")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(SPECIALS[UNK])
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|w| self.id(w)).collect()
    }

    /// Encodes and rejects text whose unknown-token rate exceeds `limit`.
    pub fn encode_checked(&self, text: &str, what: &'static str, limit: f64) -> Result<Vec<usize>> {
        let ids = self.encode(text);
        if !ids.is_empty() {
            let rate = ids.iter().filter(|&&i| i == UNK).count() as f64 / ids.len() as f64;
            if rate > limit {
                return Err(CoreError::UnknownTokens { what, rate, limit });
            }
        }
        Ok(ids)
    }

    /// Space-joined words; stops at the first end-of-text and drops padding.
    pub fn decode(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        for &i in ids {
            if i == EOT {
                break;
            }
            if i == PAD || i == BOS {
                continue;
            }
            let w = self.token(i);
            let attach = matches!(w, "." | "," | ";" | ":" | ")" | "?" | "!");
            if !out.is_empty() && !attach {
                out.push(' ');
            }
            out.push_str(w);
        }
        out
    }

    /// One token per line.
    pub fn render(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_order_and_specials() {
        let v = Vocab::build(["b a a", "c a b"], 100).unwrap();
        assert_eq!(&v.tokens()[4..], &["a", "b", "c"]);
        assert_eq!(v.id("zzz"), UNK);
    }

    #[test]
    fn cap_keeps_most_frequent() {
        let v = Vocab::build(["x x x y y z"], 6).unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("z"), UNK);
    }

    #[test]
    fn decode_tokenizes_back() {
        let v = Vocab::build(["Focal slowing, left temporal. No spikes."], 100).unwrap();
        let ids = v.encode("focal slowing, left temporal. no spikes.");
        let text = v.decode(&ids);
        assert_eq!(text, "focal slowing, left temporal. no spikes.");
        assert_eq!(v.encode(&text), ids);
    }

    #[test]
    fn decode_stops_at_end_of_text() {
        let v = Vocab::build(["a b"], 100).unwrap();
        assert_eq!(v.decode(&[4, EOT, 5]), "a");
    }

    #[test]
    fn unknown_rate_limit() {
        let v = Vocab::build(["a b c"], 100).unwrap();
        assert!(v.encode_checked("a b q", "prompt", MAX_UNKNOWN_RATE).is_err());
        assert!(v.encode_checked("", "prompt", MAX_UNKNOWN_RATE).unwrap().is_empty());
    }

    #[test]
    fn render_parse_round_trip() {
        let v = Vocab::build(["a b c"], 100).unwrap();
        assert_eq!(Vocab::parse(&v.render()).unwrap(), v);
    }
}
