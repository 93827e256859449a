//! Word → Valence/Arousal/Dominance lexicon.
//!
//! Lookup is total: tokens without an entry get the lexicon's default vector
//! (the cube midpoint unless configured otherwise). A [`VadMatrix`] stacks one
//! vector per vocabulary id so expected VAD under a token distribution is a
//! single weighted sum.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::TokenDistribution;
use crate::text::Vocab;

/// A point in the unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadVector {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

impl VadVector {
    pub const NEUTRAL: VadVector = VadVector { valence: 0.5, arousal: 0.5, dominance: 0.5 };

    /// Checked constructor; every component must be finite and in `[0, 1]`.
    pub fn new(valence: f64, arousal: f64, dominance: f64) -> Result<Self> {
        Self::checked(valence, arousal, dominance, 0)
    }

    fn checked(valence: f64, arousal: f64, dominance: f64, row: usize) -> Result<Self> {
        for (name, value) in [("valence", valence), ("arousal", arousal), ("dominance", dominance)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::ComponentOutOfRange { row, name, value });
            }
        }
        Ok(VadVector { valence, arousal, dominance })
    }

    pub fn splat(x: f64) -> Self {
        VadVector { valence: x, arousal: x, dominance: x }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.valence, self.arousal, self.dominance]
    }

    /// Unchecked; callers building means of valid vectors stay inside the cube.
    pub fn from_array(a: [f64; 3]) -> Self {
        VadVector { valence: a[0], arousal: a[1], dominance: a[2] }
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|c| (0.0..=1.0).contains(c))
    }
}

/// Listed vs defaulted tokens for one vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub listed: usize,
    pub defaulted: usize,
}

impl Coverage {
    pub fn total(&self) -> usize {
        self.listed + self.defaulted
    }

    pub fn defaulted_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.defaulted as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VadLexicon {
    entries: HashMap<String, VadVector>,
    default: VadVector,
    collisions: usize,
}

impl VadLexicon {
    /// Builds a lexicon from `(token, valence, arousal, dominance)` records.
    /// Tokens are lowercased; later duplicates overwrite earlier ones.
    pub fn from_records<I, S>(records: I, default: VadVector) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64, f64, f64)>,
        S: AsRef<str>,
    {
        if !default.is_valid() {
            return Err(Error::ComponentOutOfRange { row: 0, name: "default", value: default.valence });
        }
        let mut entries = HashMap::new();
        let mut collisions = 0;
        let mut rows = 0;
        for (i, (token, v, a, d)) in records.into_iter().enumerate() {
            let row = i + 1;
            let token = token.as_ref().trim();
            if token.is_empty() {
                return Err(Error::MalformedRow { row, reason: "empty token".into() });
            }
            let vad = VadVector::checked(v, a, d, row)?;
            if entries.insert(token.to_lowercase(), vad).is_some() {
                collisions += 1;
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::EmptyLexicon);
        }
        if collisions > 0 {
            log::warn!("lexicon: {collisions} duplicate entries resolved last-wins");
        }
        Ok(VadLexicon { entries, default, collisions })
    }

    /// Parses the tab-separated lexicon format. `#` lines and blank lines are
    /// skipped; row numbers in errors are 1-based file line numbers.
    pub fn parse_tsv(text: &str, default: VadVector) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let row = i + 1;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::MalformedRow { row, reason: format!("expected 4 tab-separated fields, got {}", fields.len()) });
            }
            let token = fields[0].trim();
            if token.is_empty() {
                return Err(Error::MalformedRow { row, reason: "empty token".into() });
            }
            let mut vals = [0.0; 3];
            for (slot, field) in vals.iter_mut().zip(&fields[1..]) {
                *slot = field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::MalformedRow { row, reason: format!("unparseable number {field:?}") })?;
            }
            VadVector::checked(vals[0], vals[1], vals[2], row)?;
            records.push((token.to_string(), vals[0], vals[1], vals[2]));
        }
        Self::from_records(records, default)
    }

    pub fn load(path: &Path, default: VadVector) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, default)
    }

    pub fn lookup(&self, token: &str) -> VadVector {
        self.get(token).unwrap_or(self.default)
    }

    /// The listed entry, if any. Accepts tokens in any case.
    pub fn get(&self, token: &str) -> Option<VadVector> {
        match self.entries.get(token) {
            Some(v) => Some(*v),
            None if token.chars().any(char::is_uppercase) => self.entries.get(&token.to_lowercase()).copied(),
            None => None,
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.get(token).is_some()
    }

    pub fn default_vector(&self) -> VadVector {
        self.default
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn collisions(&self) -> usize {
        self.collisions
    }

    pub fn coverage<S: AsRef<str>>(&self, vocab: &[S]) -> Coverage {
        let listed = vocab.iter().filter(|t| self.contains(t.as_ref())).count();
        Coverage { listed, defaulted: vocab.len() - listed }
    }

    /// Entries sorted by token, for deterministic export.
    pub fn sorted_entries(&self) -> Vec<(&str, VadVector)> {
        let mut v: Vec<_> = self.entries.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    /// Component-wise mean over the utterance's tokens.
    pub fn utterance_mean_vad<S: AsRef<str>>(&self, utterance: &[S]) -> Result<VadVector> {
        if utterance.is_empty() {
            return Err(Error::EmptyUtterance);
        }
        let mut acc = [0.0; 3];
        for t in utterance {
            let v = self.lookup(t.as_ref()).to_array();
            for c in 0..3 {
                acc[c] += v[c];
            }
        }
        let n = utterance.len() as f64;
        Ok(VadVector::from_array(acc.map(|x| clamp_unit(x / n))))
    }

    /// Stacks lookups for every vocabulary entry, in id order.
    pub fn align_vocab<S: AsRef<str>>(&self, vocab: &[S]) -> Result<VadMatrix> {
        if vocab.is_empty() {
            return Err(Error::EmptyVocab);
        }
        let rows = vocab.iter().map(|t| self.lookup(t.as_ref())).collect();
        Ok(VadMatrix { rows, coverage: self.coverage(vocab) })
    }

    pub fn align(&self, vocab: &Vocab) -> Result<VadMatrix> {
        self.align_vocab(vocab.tokens())
    }
}

// Rounding in a mean can overshoot the cube by one ulp.
fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// One VAD row per vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct VadMatrix {
    rows: Vec<VadVector>,
    coverage: Coverage,
}

impl VadMatrix {
    pub fn from_rows(rows: Vec<VadVector>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyVocab);
        }
        if let Some(i) = rows.iter().position(|r| !r.is_valid()) {
            return Err(Error::ComponentOutOfRange { row: i + 1, name: "row", value: rows[i].valence });
        }
        let coverage = Coverage { listed: rows.len(), defaulted: 0 };
        Ok(VadMatrix { rows, coverage })
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[VadVector] {
        &self.rows
    }

    pub fn row(&self, id: usize) -> VadVector {
        self.rows[id]
    }

    pub fn coverage(&self) -> Coverage {
        self.coverage
    }

    /// Σ_i probs[i]·row_i without validation.
    pub fn weighted_sum(&self, probs: &[f64]) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for (p, r) in probs.iter().zip(&self.rows) {
            acc[0] += p * r.valence;
            acc[1] += p * r.arousal;
            acc[2] += p * r.dominance;
        }
        acc
    }

    /// Probability-weighted average of rows.
    pub fn expected_vad(&self, dist: &TokenDistribution) -> Result<VadVector> {
        if dist.len() != self.vocab_size() {
            return Err(Error::DimensionMismatch(format!(
                "distribution over {} tokens, matrix has {} rows",
                dist.len(),
                self.vocab_size()
            )));
        }
        Ok(VadVector::from_array(self.weighted_sum(dist.probs()).map(clamp_unit)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> VadLexicon {
        VadLexicon::from_records([("good", 0.9, 0.6, 0.7), ("bad", 0.1, 0.5, 0.3)], VadVector::NEUTRAL).unwrap()
    }

    fn close(a: VadVector, b: [f64; 3], tol: f64) -> bool {
        a.to_array().iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn lookup_listed_and_default() {
        let l = lex();
        assert_eq!(l.lookup("good"), VadVector::new(0.9, 0.6, 0.7).unwrap());
        assert_eq!(l.lookup("GOOD"), l.lookup("good"));
        assert_eq!(l.lookup("zxq"), VadVector::NEUTRAL);
    }

    #[test]
    fn rejects_out_of_range_component() {
        let err = VadLexicon::from_records([("x", 1.2, 0.5, 0.5)], VadVector::NEUTRAL).unwrap_err();
        assert!(err.to_string().contains("component out of range"), "{err}");
        let err = VadLexicon::from_records([("x", f64::NAN, 0.5, 0.5)], VadVector::NEUTRAL).unwrap_err();
        assert!(matches!(err, Error::ComponentOutOfRange { row: 1, .. }));
    }

    #[test]
    fn empty_source_is_an_error() {
        let none: Vec<(String, f64, f64, f64)> = vec![];
        assert!(matches!(VadLexicon::from_records(none, VadVector::NEUTRAL), Err(Error::EmptyLexicon)));
        assert!(matches!(VadLexicon::parse_tsv("# only a comment\n\n", VadVector::NEUTRAL), Err(Error::EmptyLexicon)));
    }

    #[test]
    fn tsv_reports_row_numbers() {
        let text = "# header\ngood\t0.9\t0.6\t0.7\nbad\t0.1\tzero\t0.3\n";
        match VadLexicon::parse_tsv(text, VadVector::NEUTRAL) {
            Err(Error::MalformedRow { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
        match VadLexicon::parse_tsv("good\t0.9\t0.6\n", VadVector::NEUTRAL) {
            Err(Error::MalformedRow { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
        match VadLexicon::parse_tsv("a\t0.5\t0.5\t0.5\nb\t0.5\t1.5\t0.5\n", VadVector::NEUTRAL) {
            Err(Error::ComponentOutOfRange { row, name, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(name, "arousal");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_resolve_last_wins_case_insensitively() {
        let text = "Happy\t0.8\t0.5\t0.5\nhappy\t0.9\t0.6\t0.7\nsad\t0.1\t0.2\t0.3\n";
        let l = VadLexicon::parse_tsv(text, VadVector::NEUTRAL).unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l.collisions(), 1);
        assert_eq!(l.lookup("happy"), VadVector::new(0.9, 0.6, 0.7).unwrap());
    }

    #[test]
    fn utterance_mean_examples() {
        let l = VadLexicon::from_records(
            [("p", 0.2, 0.4, 0.6), ("q", 0.4, 0.6, 0.8), ("r", 0.9, 0.1, 0.2)],
            VadVector::NEUTRAL,
        )
        .unwrap();
        assert!(close(l.utterance_mean_vad(&["p", "q"]).unwrap(), [0.3, 0.5, 0.7], 1e-12));
        assert_eq!(l.utterance_mean_vad(&["r"]).unwrap(), VadVector::new(0.9, 0.1, 0.2).unwrap());
        assert_eq!(l.utterance_mean_vad(&["u", "v", "w"]).unwrap(), VadVector::NEUTRAL);
        let empty: [&str; 0] = [];
        assert!(matches!(l.utterance_mean_vad(&empty), Err(Error::EmptyUtterance)));
    }

    #[test]
    fn align_vocab_examples() {
        let l = lex();
        let m = l.align_vocab(&["good", "zxq"]).unwrap();
        assert_eq!(m.rows(), &[VadVector::new(0.9, 0.6, 0.7).unwrap(), VadVector::NEUTRAL]);
        assert_eq!(m.coverage(), Coverage { listed: 1, defaulted: 1 });
        assert_eq!(m.coverage().defaulted_fraction(), 0.5);

        let empty: [&str; 0] = [];
        assert!(matches!(l.align_vocab(&empty), Err(Error::EmptyVocab)));

        let words: Vec<String> = (0..8).map(|i| format!("w{i}")).collect();
        let m = l.align_vocab(&words).unwrap();
        assert_eq!(m.vocab_size(), 8);
        for (i, w) in words.iter().enumerate() {
            assert_eq!(m.row(i), l.lookup(w));
        }
    }

    #[test]
    fn expected_vad_examples() {
        let m = VadMatrix::from_rows(vec![VadVector::new(0.6, 0.3, 0.4).unwrap(), VadVector::NEUTRAL]).unwrap();
        let point = TokenDistribution::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(m.expected_vad(&point).unwrap(), VadVector::new(0.6, 0.3, 0.4).unwrap());

        let m = VadMatrix::from_rows(vec![VadVector::splat(0.2), VadVector::splat(0.8)]).unwrap();
        let uniform = TokenDistribution::new(vec![0.5, 0.5]).unwrap();
        assert!(close(m.expected_vad(&uniform).unwrap(), [0.5; 3], 1e-12));

        // 0.25·0 + 0.75·1 per component.
        let m = VadMatrix::from_rows(vec![VadVector::splat(0.0), VadVector::splat(1.0)]).unwrap();
        let d = TokenDistribution::new(vec![0.25, 0.75]).unwrap();
        assert!(close(m.expected_vad(&d).unwrap(), [0.75; 3], 1e-12));

        let wrong = TokenDistribution::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(m.expected_vad(&wrong), Err(Error::DimensionMismatch(_))));
    }
}
