//! The six dialog filtering rules, applied in order. A dialog is dropped at
//! the first rule it fails and the drop is attributed to that rule.
//!
//! 1. at least three utterances, and the first and last are both the user's
//! 2. the most probable polarity of the first utterance is above `first_utt_threshold`
//! 3. `p_pos` of the last utterance is above `last_utt_pos_threshold`
//! 4. no topic blocklist keyword
//! 5. no entity pattern match
//! 6. no offensive blocklist keyword

use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::{Dialog, Speaker};
use crate::classifier::PolarityModel;
use crate::error::{Error, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "rule1")]
    Structure,
    #[serde(rename = "rule2")]
    FirstUtteranceConfidence,
    #[serde(rename = "rule3")]
    LastUtterancePositive,
    #[serde(rename = "rule4")]
    Topic,
    #[serde(rename = "rule5")]
    Entity,
    #[serde(rename = "rule6")]
    Offensive,
}

impl Rule {
    pub const ALL: [Rule; 6] = [
        Rule::Structure,
        Rule::FirstUtteranceConfidence,
        Rule::LastUtterancePositive,
        Rule::Topic,
        Rule::Entity,
        Rule::Offensive,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn key(self) -> &'static str {
        ["rule1", "rule2", "rule3", "rule4", "rule5", "rule6"][self.index()]
    }
}

#[derive(Debug, Clone)]
pub struct FilterRules {
    pub first_utt_threshold: f64,
    pub last_utt_pos_threshold: f64,
    topic_blocklist: Vec<Vec<String>>,
    entity_patterns: Vec<Regex>,
    offensive_blocklist: Vec<Vec<String>>,
}

pub const DEFAULT_TOPICS: &str = include_str!("../../data/topic_blocklist.txt");
pub const DEFAULT_ENTITIES: &str = include_str!("../../data/entity_patterns.txt");
pub const DEFAULT_OFFENSIVE: &str = include_str!("../../data/offensive_blocklist.txt");

/// Non-empty, non-comment lines of a list file.
pub fn list_entries(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn read_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(list_entries(&text))
}

impl FilterRules {
    pub fn new<S: AsRef<str>>(
        first_utt_threshold: f64,
        last_utt_pos_threshold: f64,
        topic_blocklist: &[S],
        entity_patterns: &[S],
        offensive_blocklist: &[S],
    ) -> Result<Self> {
        for (name, t) in [("first_utt_threshold", first_utt_threshold), ("last_utt_pos_threshold", last_utt_pos_threshold)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must be in (0, 1), got {t}")));
            }
        }
        let phrases = |list: &[S]| -> Vec<Vec<String>> {
            list.iter().map(|k| tokenize(k.as_ref())).filter(|t| !t.is_empty()).collect()
        };
        let entity_patterns = entity_patterns
            .iter()
            .map(|p| {
                RegexBuilder::new(p.as_ref())
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| Error::InvalidConfig(format!("entity pattern {:?}: {e}", p.as_ref())))
            })
            .collect::<Result<_>>()?;
        Ok(FilterRules {
            first_utt_threshold,
            last_utt_pos_threshold,
            topic_blocklist: phrases(topic_blocklist),
            entity_patterns,
            offensive_blocklist: phrases(offensive_blocklist),
        })
    }

    /// Thresholds 0.5 / 0.9 with the bundled keyword and pattern lists.
    pub fn with_default_lists() -> Self {
        Self::new(0.5, 0.9, &list_entries(DEFAULT_TOPICS), &list_entries(DEFAULT_ENTITIES), &list_entries(DEFAULT_OFFENSIVE))
            .expect("bundled lists are valid")
    }

    /// The first rule `dialog` fails, or `None` if it is retained.
    pub fn first_failure(&self, dialog: &Dialog, classifier: &dyn PolarityModel) -> Result<Option<Rule>> {
        let (Some(first), Some(last)) = (dialog.first(), dialog.last()) else {
            return Ok(Some(Rule::Structure));
        };
        if dialog.len() < 3 || first.speaker != Speaker::User || last.speaker != Speaker::User {
            return Ok(Some(Rule::Structure));
        }
        if classifier.classify(&first.tokens)?.max_prob() <= self.first_utt_threshold {
            return Ok(Some(Rule::FirstUtteranceConfidence));
        }
        if classifier.classify(&last.tokens)?.p_pos <= self.last_utt_pos_threshold {
            return Ok(Some(Rule::LastUtterancePositive));
        }
        let tokens = || dialog.utterances.iter().map(|u| u.tokens.as_slice());
        if tokens().any(|t| contains_any(t, &self.topic_blocklist)) {
            return Ok(Some(Rule::Topic));
        }
        if dialog.utterances.iter().any(|u| self.entity_patterns.iter().any(|p| p.is_match(&u.text))) {
            return Ok(Some(Rule::Entity));
        }
        if tokens().any(|t| contains_any(t, &self.offensive_blocklist)) {
            return Ok(Some(Rule::Offensive));
        }
        Ok(None)
    }
}

fn contains_any(tokens: &[String], phrases: &[Vec<String>]) -> bool {
    phrases.iter().any(|p| tokens.windows(p.len()).any(|w| w == p.as_slice()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCounts {
    pub rule1: usize,
    pub rule2: usize,
    pub rule3: usize,
    pub rule4: usize,
    pub rule5: usize,
    pub rule6: usize,
}

impl RuleCounts {
    pub fn get(&self, rule: Rule) -> usize {
        self.as_array()[rule.index()]
    }

    fn bump(&mut self, rule: Rule) {
        let slot = match rule {
            Rule::Structure => &mut self.rule1,
            Rule::FirstUtteranceConfidence => &mut self.rule2,
            Rule::LastUtterancePositive => &mut self.rule3,
            Rule::Topic => &mut self.rule4,
            Rule::Entity => &mut self.rule5,
            Rule::Offensive => &mut self.rule6,
        };
        *slot += 1;
    }

    pub fn as_array(&self) -> [usize; 6] {
        [self.rule1, self.rule2, self.rule3, self.rule4, self.rule5, self.rule6]
    }

    pub fn total(&self) -> usize {
        self.as_array().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub retained: Vec<Dialog>,
    pub rejections: RuleCounts,
    /// `(source_id, rule)` for every dropped dialog, in input order.
    pub rejected: Vec<(String, Rule)>,
}

pub fn filter_dialogs(raw: &[Dialog], classifier: &dyn PolarityModel, rules: &FilterRules) -> Result<FilterOutcome> {
    let mut retained = Vec::new();
    let mut rejections = RuleCounts::default();
    let mut rejected = Vec::new();
    for d in raw {
        match rules.first_failure(d, classifier)? {
            None => retained.push(d.clone()),
            Some(rule) => {
                rejections.bump(rule);
                rejected.push((d.source_id.clone(), rule));
            }
        }
    }
    Ok(FilterOutcome { retained, rejections, rejected })
}
