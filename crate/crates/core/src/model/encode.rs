//! Token-id layout of a training example:
//!
//! ```text
//! <POS_b> <NEG_b> <usr> u1 … <eou> <agt> u2 … <eou> … <agt> r … <eou>
//! ```
//!
//! The model input is everything but the final `<eou>`; the loss covers the
//! positions predicting `r … <eou>`. Over-long examples drop whole middle
//! utterances oldest first, keeping the prefix and `u_1`.

use std::ops::Range;

use crate::corpus::{Speaker, TrainingExample};
use crate::error::{Error, Result};
use crate::objective::EmotionTarget;
use crate::text::{Special, Vocab};

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub input: Vec<usize>,
    /// Next-token targets for positions `rows()`, ending with `<eou>`.
    pub target: Vec<usize>,
    pub emotion: EmotionTarget,
}

impl EncodedExample {
    pub fn rows(&self) -> Range<usize> {
        self.input.len() - self.target.len()..self.input.len()
    }
}

pub fn marker(speaker: Speaker) -> usize {
    match speaker {
        Speaker::User => Special::User.id(),
        Speaker::Agent => Special::Agent.id(),
    }
}

/// `<spk> ids … <eou>`.
pub fn segment(speaker: Speaker, ids: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(ids.len() + 2);
    s.push(marker(speaker));
    s.extend_from_slice(ids);
    s.push(Special::Eou.id());
    s
}

/// Concatenates head, the newest middle segments that fit, and tail.
fn assemble(head: Vec<usize>, middle: &[Vec<usize>], tail: &[usize], budget: usize) -> Option<Vec<usize>> {
    let fixed = head.len() + tail.len();
    if fixed > budget {
        return None;
    }
    let mut room = budget - fixed;
    let mut keep = middle.len();
    while keep > 0 && middle[keep - 1].len() <= room {
        room -= middle[keep - 1].len();
        keep -= 1;
    }
    let mut out = head;
    for s in &middle[keep..] {
        out.extend_from_slice(s);
    }
    out.extend_from_slice(tail);
    Some(out)
}

pub fn encode_example(ex: &TrainingExample, vocab: &Vocab, window: usize) -> Result<EncodedExample> {
    let Some((u1, rest)) = ex.context.split_first() else {
        return Err(Error::DimensionMismatch("training example has an empty context".into()));
    };
    let mut head = vec![ex.prefix[0].id(), ex.prefix[1].id()];
    head.extend(segment(u1.speaker, &vocab.encode(&u1.tokens)));
    let middle: Vec<Vec<usize>> = rest.iter().map(|u| segment(u.speaker, &vocab.encode(&u.tokens))).collect();
    let target_ids = vocab.encode(&ex.target.tokens);
    let mut tail = vec![marker(ex.target.speaker)];
    tail.extend_from_slice(&target_ids);

    let needed = head.len() + tail.len();
    let input = assemble(head, &middle, &tail, window).ok_or(Error::OverLength { len: needed, window })?;
    let mut target = target_ids;
    target.push(Special::Eou.id());
    Ok(EncodedExample {
        input,
        target,
        emotion: EmotionTarget {
            u1_mean: ex.u1_mean_vad,
            polarity: ex.u1_polarity,
            context_turns: ex.context_turns as u32,
        },
    })
}

/// Generation context ending with the next speaker's marker, fitted to
/// `budget` tokens. Falls back to plain left truncation when even the prefix
/// and first utterance do not fit.
pub fn encode_context(prefix: [Special; 2], utterances: &[(Speaker, Vec<usize>)], next: Speaker, budget: usize) -> Vec<usize> {
    let mut head = vec![prefix[0].id(), prefix[1].id()];
    let middle: Vec<Vec<usize>> = match utterances.split_first() {
        Some(((s, ids), rest)) => {
            head.extend(segment(*s, ids));
            rest.iter().map(|(s, ids)| segment(*s, ids)).collect()
        }
        None => Vec::new(),
    };
    let tail = [marker(next)];
    match assemble(head.clone(), &middle, &tail, budget) {
        Some(out) => out,
        None => {
            let mut all = head;
            all.extend(middle.concat());
            all.extend_from_slice(&tail);
            let start = all.len().saturating_sub(budget);
            all.split_off(start)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ClassifierParams, LexiconClassifier};
    use crate::corpus::{prepare_training_examples, Dialog};
    use crate::lexicon::{VadLexicon, VadVector};

    fn setup() -> (Vocab, Vec<TrainingExample>) {
        let lex = VadLexicon::from_records([("sad", 0.1, 0.3, 0.2)], VadVector::NEUTRAL).unwrap();
        let clf = LexiconClassifier::new(&lex, ClassifierParams::default());
        let d = Dialog::from_texts("d", &["i am sad", "oh no", "so sad", "cheer up", "ok"]).unwrap();
        let vocab = Vocab::from_words(["i", "am", "sad", "oh", "no", "so", "cheer", "up", "ok"]);
        (vocab, prepare_training_examples(&d, &clf, &lex).unwrap())
    }

    #[test]
    fn layout_and_rows() {
        let (vocab, ex) = setup();
        let e = encode_example(&ex[0], &vocab, 64).unwrap();
        let [p, n] = ex[0].prefix;
        let id = |w: &str| vocab.id(w).unwrap();
        let eou = Special::Eou.id();
        assert_eq!(
            e.input,
            vec![p.id(), n.id(), Special::User.id(), id("i"), id("am"), id("sad"), eou, Special::Agent.id(), id("oh"), id("no")]
        );
        assert_eq!(e.target, vec![id("oh"), id("no"), eou]);
        assert_eq!(e.rows(), 7..10);
        assert_eq!(e.emotion.context_turns, 1);
    }

    #[test]
    fn truncation_keeps_prefix_and_first_utterance() {
        let (vocab, ex) = setup();
        let full = encode_example(&ex[1], &vocab, 64).unwrap();
        assert_eq!(full.input.len(), 2 + 5 + 4 + 4 + 3);
        let cut = encode_example(&ex[1], &vocab, 15).unwrap();
        assert_eq!(cut.input.len(), 2 + 5 + 4 + 3);
        assert_eq!(cut.input[..7], full.input[..7]);
        assert_eq!(cut.input[7..], full.input[11..]);
        assert_eq!(cut.target, full.target);
        assert_eq!(cut.emotion.context_turns, 3);
        assert!(matches!(encode_example(&ex[1], &vocab, 9), Err(Error::OverLength { .. })));
    }

    #[test]
    fn context_encoding_fits_budget() {
        let prefix = [Special::Pos(1), Special::Neg(8)];
        let utts = vec![(Speaker::User, vec![30, 31]), (Speaker::Agent, vec![32]), (Speaker::User, vec![33, 34])];
        let full = encode_context(prefix, &utts, Speaker::Agent, 100);
        assert_eq!(full.len(), 2 + 4 + 3 + 4 + 1);
        assert_eq!(*full.last().unwrap(), Special::Agent.id());
        let cut = encode_context(prefix, &utts, Speaker::Agent, 11);
        assert_eq!(cut[..6], full[..6]);
        assert_eq!(cut[6..], full[9..]);
        assert_eq!(encode_context(prefix, &utts, Speaker::Agent, 3).len(), 3);
    }
}
