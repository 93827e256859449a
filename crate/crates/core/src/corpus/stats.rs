use serde::{Deserialize, Serialize};

use super::Dialog;
use crate::classifier::{polarity_label, Polarity, PolarityModel};
use crate::error::Result;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub sessions: usize,
    pub utterances: usize,
}

/// Session and utterance counts bucketed by the first-utterance label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub negative: BucketCounts,
    pub neutral: BucketCounts,
    pub positive: BucketCounts,
    pub total: BucketCounts,
}

impl CorpusStats {
    pub fn bucket(&self, p: Polarity) -> BucketCounts {
        match p {
            Polarity::Negative => self.negative,
            Polarity::Neutral => self.neutral,
            Polarity::Positive => self.positive,
        }
    }
}

pub fn corpus_stats(corpus: &[Dialog], classifier: &dyn PolarityModel) -> Result<CorpusStats> {
    let mut s = CorpusStats::default();
    for d in corpus {
        let Some(u1) = d.first() else { continue };
        let b = match polarity_label(&classifier.classify(&u1.tokens)?) {
            Polarity::Negative => &mut s.negative,
            Polarity::Neutral => &mut s.neutral,
            Polarity::Positive => &mut s.positive,
        };
        b.sessions += 1;
        b.utterances += d.len();
    }
    s.total = BucketCounts {
        sessions: s.negative.sessions + s.neutral.sessions + s.positive.sessions,
        utterances: s.negative.utterances + s.neutral.utterances + s.positive.utterances,
    };
    Ok(s)
}
