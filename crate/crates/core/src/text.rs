//! Word tokenizer and vocabulary.
//!
//! Text is lowercased, split on whitespace, and punctuation characters become
//! their own tokens. Apostrophes inside a word are kept (`don't` stays whole).

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let lower = text.to_lowercase();
    let mut chars = lower.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_alphanumeric() || (c == '\'' && !word.is_empty() && chars.peek().is_some_and(|n| n.is_alphanumeric())) {
            word.push(c);
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Reserved vocabulary entries that never come out of [`tokenize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Special {
    Pad,
    Unk,
    /// End of utterance.
    Eou,
    User,
    Agent,
    Pos(u8),
    Neg(u8),
}

pub const PREFIX_BUCKETS: u8 = 11;

impl Special {
    pub fn all() -> Vec<Special> {
        let mut v = vec![Special::Pad, Special::Unk, Special::Eou, Special::User, Special::Agent];
        v.extend((0..PREFIX_BUCKETS).map(Special::Pos));
        v.extend((0..PREFIX_BUCKETS).map(Special::Neg));
        v
    }

    /// Fixed id; specials occupy the first ids of every vocabulary.
    pub fn id(self) -> usize {
        match self {
            Special::Pad => 0,
            Special::Unk => 1,
            Special::Eou => 2,
            Special::User => 3,
            Special::Agent => 4,
            Special::Pos(b) => 5 + b as usize,
            Special::Neg(b) => 5 + PREFIX_BUCKETS as usize + b as usize,
        }
    }

    pub fn symbol(self) -> String {
        match self {
            Special::Pad => "<pad>".into(),
            Special::Unk => "<unk>".into(),
            Special::Eou => "<eou>".into(),
            Special::User => "<usr>".into(),
            Special::Agent => "<agt>".into(),
            Special::Pos(b) => format!("<POS_{b}>"),
            Special::Neg(b) => format!("<NEG_{b}>"),
        }
    }
}

pub const NUM_SPECIALS: usize = 5 + 2 * PREFIX_BUCKETS as usize;

/// Dense id ↔ token mapping. Ids `0..NUM_SPECIALS` are the reserved specials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from words; specials are prepended, duplicates and
    /// words colliding with special symbols are dropped, first occurrence wins.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tokens: Vec<String> = Special::all().into_iter().map(Special::symbol).collect();
        let mut index: HashMap<String, usize> = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        for w in words {
            let w = w.as_ref().to_lowercase();
            if w.is_empty() || index.contains_key(&w) {
                continue;
            }
            index.insert(w.clone(), tokens.len());
            tokens.push(w);
        }
        Vocab { tokens, index }
    }

    /// One token per line; the file lists the full vocabulary including specials.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if lines.is_empty() {
            return Err(Error::EmptyVocab);
        }
        let specials = Special::all();
        let has_specials = lines.len() >= NUM_SPECIALS
            && specials.iter().zip(&lines).all(|(s, l)| s.symbol() == *l);
        let words = if has_specials { &lines[NUM_SPECIALS..] } else { &lines[..] };
        Ok(Self::from_words(words.iter().copied()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(Special::Unk.id())
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id_or_unk(t)).collect()
    }

    pub fn is_word(&self, id: usize) -> bool {
        id >= NUM_SPECIALS && id < self.tokens.len()
    }

    /// Joins word tokens with single spaces; specials are skipped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| self.is_word(i))
            .map(|&i| self.tokens[i].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}
