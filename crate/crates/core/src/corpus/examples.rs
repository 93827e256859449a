use super::{Dialog, Speaker, Utterance};
use crate::classifier::{PolarityDistribution, PolarityModel};
use crate::error::{Error, Result};
use crate::lexicon::{VadLexicon, VadVector};
use crate::model::prefix::encode_emotion_prefix;
use crate::text::Special;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub prefix: [Special; 2],
    /// Utterances `u_1..u_k` preceding the target.
    pub context: Vec<Utterance>,
    pub target: Utterance,
    pub context_turns: usize,
    pub u1_polarity: PolarityDistribution,
    pub u1_mean_vad: VadVector,
}

struct FirstUtterance {
    polarity: PolarityDistribution,
    mean_vad: VadVector,
}

fn first_utterance(dialog: &Dialog, classifier: &dyn PolarityModel, lexicon: &VadLexicon) -> Result<FirstUtterance> {
    let u1 = dialog.first().ok_or_else(|| Error::NoAgentUtterance(dialog.source_id.clone()))?;
    Ok(FirstUtterance { polarity: classifier.classify(&u1.tokens)?, mean_vad: lexicon.utterance_mean_vad(&u1.tokens)? })
}

fn example(dialog: &Dialog, at: usize, u1: &FirstUtterance) -> TrainingExample {
    TrainingExample {
        prefix: encode_emotion_prefix(&u1.polarity),
        context: dialog.utterances[..at].to_vec(),
        target: dialog.utterances[at].clone(),
        context_turns: at,
        u1_polarity: u1.polarity,
        u1_mean_vad: u1.mean_vad,
    }
}

/// One example per agent turn. A trailing user utterance is dropped first;
/// the first utterance is classified once per dialog.
pub fn prepare_training_examples(
    dialog: &Dialog,
    classifier: &dyn PolarityModel,
    lexicon: &VadLexicon,
) -> Result<Vec<TrainingExample>> {
    let mut end = dialog.len();
    if dialog.last().is_some_and(|u| u.speaker == Speaker::User) {
        end -= 1;
    }
    let agent_turns: Vec<usize> = (0..end).filter(|&i| dialog.utterances[i].speaker == Speaker::Agent).collect();
    if agent_turns.is_empty() {
        return Err(Error::NoAgentUtterance(dialog.source_id.clone()));
    }
    let u1 = first_utterance(dialog, classifier, lexicon)?;
    Ok(agent_turns.into_iter().map(|i| example(dialog, i, &u1)).collect())
}

/// One example per utterance after the first, for either speaker. Used to
/// train the plain "user" model for self-chat.
pub fn prepare_general_examples(
    dialog: &Dialog,
    classifier: &dyn PolarityModel,
    lexicon: &VadLexicon,
) -> Result<Vec<TrainingExample>> {
    if dialog.len() < 2 {
        return Ok(Vec::new());
    }
    let u1 = first_utterance(dialog, classifier, lexicon)?;
    Ok((1..dialog.len()).map(|i| example(dialog, i, &u1)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ClassifierParams, LexiconClassifier};

    fn lex() -> VadLexicon {
        VadLexicon::from_records([("sad", 0.1, 0.3, 0.2), ("happy", 0.9, 0.7, 0.8)], VadVector::NEUTRAL).unwrap()
    }

    #[test]
    fn five_utterances_give_two_examples() {
        let lex = lex();
        let clf = LexiconClassifier::new(&lex, ClassifierParams::default());
        let d = Dialog::from_texts("d", &["i am sad", "oh no", "still sad", "cheer up", "happy now"]).unwrap();
        let ex = prepare_training_examples(&d, &clf, &lex).unwrap();
        assert_eq!(ex.iter().map(|e| e.context_turns).collect::<Vec<_>>(), vec![1, 3]);
        assert!(ex.iter().all(|e| e.target.speaker == Speaker::Agent));
        assert_eq!(ex[0].u1_polarity, ex[1].u1_polarity);
        assert_eq!(ex[1].context.len(), 3);
        assert_eq!(ex[1].target.text, "cheer up");
    }

    #[test]
    fn three_utterances_give_one_example() {
        let lex = lex();
        let clf = LexiconClassifier::new(&lex, ClassifierParams::default());
        let d = Dialog::from_texts("d", &["sad", "there there", "happy"]).unwrap();
        let ex = prepare_training_examples(&d, &clf, &lex).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].target.text, "there there");
        assert_eq!(ex[0].u1_mean_vad, VadVector::new(0.1, 0.3, 0.2).unwrap());
    }

    #[test]
    fn no_agent_turn_is_an_error() {
        let lex = lex();
        let clf = LexiconClassifier::new(&lex, ClassifierParams::default());
        let d = Dialog::from_texts("d", &["sad"]).unwrap();
        assert!(matches!(prepare_training_examples(&d, &clf, &lex), Err(Error::NoAgentUtterance(_))));
    }

    #[test]
    fn general_examples_cover_both_roles() {
        let lex = lex();
        let clf = LexiconClassifier::new(&lex, ClassifierParams::default());
        let d = Dialog::from_texts("d", &["sad", "there there", "happy"]).unwrap();
        let ex = prepare_general_examples(&d, &clf, &lex).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[1].target.speaker, Speaker::User);
        assert_eq!(ex[1].context_turns, 2);
    }
}
