//! Dialog data: types, JSON-lines I/O, synthesis, filtering and training
//! example preparation.

pub mod examples;
pub mod filter;
pub mod stats;
pub mod synth;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::PolarityDistribution;
use crate::error::{Error, Result};
use crate::text::tokenize;

pub use examples::{prepare_general_examples, prepare_training_examples, TrainingExample};
pub use filter::{filter_dialogs, FilterOutcome, FilterRules, Rule};
pub use stats::{corpus_stats, CorpusStats};
pub use synth::{synthesize_corpus, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Agent,
}

impl Speaker {
    pub fn other(self) -> Speaker {
        match self {
            Speaker::User => Speaker::Agent,
            Speaker::Agent => Speaker::User,
        }
    }

    /// Speaker of the 0-based utterance position in an alternating dialog.
    pub fn at(index: usize) -> Speaker {
        if index.is_multiple_of(2) {
            Speaker::User
        } else {
            Speaker::Agent
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    pub tokens: Vec<String>,
    pub polarity: Option<PolarityDistribution>,
}

impl Utterance {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Utterance { speaker, text, tokens, polarity: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dialog {
    pub source_id: String,
    pub utterances: Vec<Utterance>,
}

impl Dialog {
    /// Checks the alternation invariant: user first, speakers alternate and
    /// every utterance has at least one token.
    pub fn new(source_id: impl Into<String>, utterances: Vec<Utterance>) -> Result<Self> {
        let d = Dialog { source_id: source_id.into(), utterances };
        d.validate()?;
        Ok(d)
    }

    /// Alternating speakers starting with the user.
    pub fn from_texts<S: AsRef<str>>(source_id: impl Into<String>, texts: &[S]) -> Result<Self> {
        let utterances = texts.iter().enumerate().map(|(i, t)| Utterance::new(Speaker::at(i), t.as_ref())).collect();
        Self::new(source_id, utterances)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, u) in self.utterances.iter().enumerate() {
            if u.speaker != Speaker::at(i) {
                return Err(Error::InvalidConfig(format!(
                    "dialog {}: utterance {} spoken by {:?}; speakers must alternate starting with the user",
                    self.source_id,
                    i + 1,
                    u.speaker
                )));
            }
            if u.tokens.is_empty() {
                return Err(Error::InvalidConfig(format!("dialog {}: utterance {} is empty", self.source_id, i + 1)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn first(&self) -> Option<&Utterance> {
        self.utterances.first()
    }

    pub fn last(&self) -> Option<&Utterance> {
        self.utterances.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtteranceRecord {
    speaker: Speaker,
    text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DialogRecord {
    source_id: String,
    utterances: Vec<UtteranceRecord>,
}

/// Provenance written as the first line of every JSON-lines output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileMeta {
    pub config_hash: String,
    pub seed: u64,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MetaLine {
    meta: FileMeta,
}

pub fn dialog_to_json(d: &Dialog) -> String {
    let rec = DialogRecord {
        source_id: d.source_id.clone(),
        utterances: d.utterances.iter().map(|u| UtteranceRecord { speaker: u.speaker, text: u.text.clone() }).collect(),
    };
    serde_json::to_string(&rec).expect("dialog serializes")
}

/// Serializes dialogs one per line, preceded by a metadata line when given.
pub fn to_jsonl(dialogs: &[Dialog], meta: Option<&FileMeta>) -> String {
    let mut out = String::new();
    if let Some(m) = meta {
        out.push_str(&serde_json::to_string(&MetaLine { meta: m.clone() }).expect("meta serializes"));
        out.push('\n');
    }
    for d in dialogs {
        out.push_str(&dialog_to_json(d));
        out.push('\n');
    }
    out
}

/// Parses JSON-lines dialogs. A leading `{"meta": ...}` line is returned
/// separately; blank lines are ignored.
pub fn parse_jsonl(text: &str) -> Result<(Option<FileMeta>, Vec<Dialog>)> {
    let mut meta = None;
    let mut dialogs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if dialogs.is_empty() && meta.is_none() && line.trim_start().starts_with("{\"meta\"") {
            let m: MetaLine = serde_json::from_str(line)
                .map_err(|e| Error::Json { context: format!("line {}", i + 1), source: e })?;
            meta = Some(m.meta);
            continue;
        }
        let rec: DialogRecord =
            serde_json::from_str(line).map_err(|e| Error::Json { context: format!("line {}", i + 1), source: e })?;
        let utterances = rec.utterances.into_iter().map(|u| Utterance::new(u.speaker, u.text)).collect();
        dialogs.push(Dialog::new(rec.source_id, utterances)?);
    }
    Ok((meta, dialogs))
}

pub fn read_jsonl(path: &Path) -> Result<(Option<FileMeta>, Vec<Dialog>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text)
}

pub fn write_jsonl(path: &Path, dialogs: &[Dialog], meta: Option<&FileMeta>) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_jsonl(dialogs, meta).as_bytes()).map_err(|e| Error::io(path, e))
}
