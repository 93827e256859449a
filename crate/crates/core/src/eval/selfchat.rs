use rayon::prelude::*;

use crate::classifier::PolarityModel;
use crate::corpus::synth::SeedUtterance;
use crate::corpus::{Dialog, Speaker, Utterance};
use crate::error::{Error, Result};
use crate::model::decode::{generate, DecodeConfig};
use crate::model::encode::encode_context;
use crate::model::prefix::encode_emotion_prefix;
use crate::model::Model;
use crate::text::{tokenize, Vocab};

#[derive(Debug, Clone, PartialEq)]
pub struct SelfChatConfig {
    pub seeds: Vec<SeedUtterance>,
    /// Dialogs run to `2 · turns` utterances, the seed included.
    pub turns: usize,
    pub decode: DecodeConfig,
    pub rng_seed: u64,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Decoding seed of one utterance, independent of execution order.
pub fn utterance_seed(rng_seed: u64, dialog: usize, position: usize) -> u64 {
    splitmix(splitmix(splitmix(rng_seed) ^ dialog as u64) ^ position as u64)
}

fn chat_one(
    index: usize,
    seed: &SeedUtterance,
    agent: &Model,
    user: &Model,
    vocab: &Vocab,
    classifier: &dyn PolarityModel,
    config: &SelfChatConfig,
) -> Result<Dialog> {
    let u1_tokens = tokenize(&seed.text);
    let prefix = encode_emotion_prefix(&classifier.classify(&u1_tokens)?);
    let mut ids = vec![(Speaker::User, vocab.encode(&u1_tokens))];
    let mut utterances = vec![Utterance::new(Speaker::User, seed.text.clone())];
    while utterances.len() < 2 * config.turns {
        let pos = utterances.len();
        let speaker = Speaker::at(pos);
        let model = if speaker == Speaker::Agent { agent } else { user };
        // At least one token, so every utterance is non-empty.
        let decode = DecodeConfig {
            seed: utterance_seed(config.rng_seed, index, pos),
            min_tokens: config.decode.min_tokens.max(1),
            ..config.decode
        };
        let budget = model.config().context_window.saturating_sub(decode.max_tokens.max(1));
        let context = encode_context(prefix, &ids, speaker, budget.max(1));
        let out = generate(model, &context, &decode)?;
        utterances.push(Utterance::new(speaker, vocab.decode(&out)));
        ids.push((speaker, out));
    }
    Dialog::new(format!("selfchat-{index:03}-{}", seed.polarity.as_str()), utterances)
}

/// One dialog per seed utterance, alternating the user and agent models.
/// Every utterance decodes from its own derived seed, so the parallel and
/// sequential runs agree.
pub fn self_chat(
    agent: &Model,
    user: &Model,
    vocab: &Vocab,
    classifier: &(dyn PolarityModel + Sync),
    config: &SelfChatConfig,
    parallel: bool,
) -> Result<Vec<Dialog>> {
    if config.turns == 0 {
        return Err(Error::InvalidConfig("turns must be >= 1".into()));
    }
    if agent.vocab_size() != user.vocab_size() || agent.vocab_size() != vocab.len() {
        return Err(Error::VocabMismatch { agent: agent.vocab_size(), user: user.vocab_size() });
    }
    let run = |(i, s): (usize, &SeedUtterance)| chat_one(i, s, agent, user, vocab, classifier, config);
    if parallel {
        config.seeds.par_iter().enumerate().map(run).collect()
    } else {
        config.seeds.iter().enumerate().map(run).collect()
    }
}
