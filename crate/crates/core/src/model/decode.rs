use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::math::Real;
use super::Model;
use crate::error::Result;
use crate::text::{Special, NUM_SPECIALS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    Greedy,
    TopK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    #[serde(default)]
    pub mode: DecodeMode,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    /// End-of-utterance is masked until this many tokens have been emitted.
    #[serde(default)]
    pub min_tokens: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    10
}
fn default_temperature() -> f64 {
    1.0
}
fn default_max_tokens() -> usize {
    12
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            mode: DecodeMode::Greedy,
            k: default_k(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            min_tokens: 0,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn greedy(max_tokens: usize) -> Self {
        DecodeConfig { max_tokens, ..Default::default() }
    }

    pub fn top_k(k: usize, temperature: f64, max_tokens: usize, seed: u64) -> Self {
        DecodeConfig { mode: DecodeMode::TopK, k, temperature, max_tokens, min_tokens: 0, seed }
    }
}

/// Candidate ids: vocabulary words plus end-of-utterance when allowed.
fn candidates(logits: &[f64], allow_eou: bool) -> Vec<(usize, f64)> {
    let mut c: Vec<(usize, f64)> = logits.iter().copied().enumerate().skip(NUM_SPECIALS).collect();
    if allow_eou {
        c.push((Special::Eou.id(), logits[Special::Eou.id()]));
    }
    c
}

fn argmax(c: &[(usize, f64)]) -> usize {
    let mut best = c[0];
    for &(id, l) in &c[1..] {
        if l > best.1 || (l == best.1 && id < best.0) {
            best = (id, l);
        }
    }
    best.0
}

fn sample_top_k(mut c: Vec<(usize, f64)>, k: usize, temperature: f64, rng: &mut ChaCha8Rng) -> usize {
    c.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    c.truncate(k.max(1));
    if temperature <= 0.0 {
        return c[0].0;
    }
    let top = c[0].1;
    let weights: Vec<f64> = c.iter().map(|(_, l)| ((l - top) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for ((id, _), w) in c.iter().zip(&weights) {
        if u < *w {
            return *id;
        }
        u -= w;
    }
    c[0].0
}

/// Autoregressive decoding until end-of-utterance or `max_tokens`. The
/// returned ids exclude the end-of-utterance token. Over-long contexts are
/// truncated from the left to leave room for `max_tokens`.
pub fn generate<F: Real>(model: &Model<F>, context: &[usize], decode: &DecodeConfig) -> Result<Vec<usize>> {
    if decode.max_tokens == 0 {
        return Ok(Vec::new());
    }
    let window = model.config().context_window;
    let max_tokens = decode.max_tokens.min(window.saturating_sub(1));
    let budget = window - max_tokens;
    let start = context.len().saturating_sub(budget);
    let eou = [Special::Eou.id()];
    let context = if context.is_empty() { &eou[..] } else { &context[start..] };

    let mut rng = ChaCha8Rng::seed_from_u64(decode.seed);
    let mut state = model.start_decode();
    let mut logits = Vec::new();
    for &tok in context {
        logits = model.feed(&mut state, tok)?;
    }
    let mut out = Vec::new();
    while out.len() < max_tokens {
        let c = candidates(&logits, out.len() >= decode.min_tokens);
        let next = match decode.mode {
            DecodeMode::Greedy => argmax(&c),
            DecodeMode::TopK => sample_top_k(c, decode.k, decode.temperature, &mut rng),
        };
        if next == Special::Eou.id() {
            break;
        }
        out.push(next);
        if out.len() == max_tokens {
            break;
        }
        logits = model.feed(&mut state, next)?;
    }
    Ok(out)
}
