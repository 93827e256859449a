//! The PEGE training objective and its exact gradient with respect to logits.
//!
//! For one response of `T` tokens with per-step logits `h_t` and
//! `s_t = softmax(h_t)`:
//!
//! ```text
//! e_t   = Σ_i s_t,i · o_i                       expected VAD at step t
//! ED_t  = ‖ū₁ − e_t‖₂                            emotional distance
//! f     = cos(π · min(|C|, max_turn) / max_turn) dialog progress
//! peg   = Σ_t [p_pos·ED_t + (1 − p_pos)·f·ED_t]
//! ner   = Σ_t p_neg·‖e_t‖₂
//! nll   = −Σ_t log s_t[r_t]
//! total = nll + α·peg − β·ner
//! ```
//!
//! All math here is `f64`. Norm gradients use `sqrt(x² + 1e-12)` in the
//! denominator so they vanish at the exact zero.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::classifier::PolarityDistribution;
use crate::error::{Error, Result};
use crate::lexicon::{VadMatrix, VadVector};

const NORM_GUARD: f64 = 1e-12;
const SUM_TOL: f64 = 1e-9;

/// A normalized probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::DimensionMismatch("empty distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::NonFinite("distribution has a negative or non-finite entry".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::NotNormalized(sum));
        }
        Ok(TokenDistribution { probs })
    }

    pub fn softmax(logits: &[f64]) -> Self {
        TokenDistribution { probs: softmax(logits) }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `T × |V|` row-major logits, one row per generated-token step.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsSequence {
    steps: usize,
    vocab: usize,
    data: Vec<f64>,
}

impl LogitsSequence {
    pub fn new(steps: usize, vocab: usize, data: Vec<f64>) -> Result<Self> {
        if steps == 0 || vocab == 0 {
            return Err(Error::DimensionMismatch("logits need at least one step and one token".into()));
        }
        if data.len() != steps * vocab {
            return Err(Error::DimensionMismatch(format!("{} values for {steps}×{vocab} logits", data.len())));
        }
        Ok(LogitsSequence { steps, vocab, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let vocab = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != vocab) {
            return Err(Error::DimensionMismatch("ragged logits rows".into()));
        }
        Self::new(rows.len(), vocab, rows.concat())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.vocab..(t + 1) * self.vocab]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PegeConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_max_turn")]
    pub max_turn: u32,
    /// Metric baseline subtracted from user VAD in PEG-Score; not used by the loss.
    #[serde(default = "default_baseline")]
    pub peg_baseline: VadVector,
}

fn default_alpha() -> f64 {
    5.0
}
fn default_beta() -> f64 {
    2.0
}
fn default_max_turn() -> u32 {
    7
}
fn default_baseline() -> VadVector {
    VadVector::NEUTRAL
}

impl Default for PegeConfig {
    fn default() -> Self {
        PegeConfig {
            alpha: default_alpha(),
            beta: default_beta(),
            max_turn: default_max_turn(),
            peg_baseline: default_baseline(),
        }
    }
}

impl PegeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidConfig(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.max_turn == 0 {
            return Err(Error::InvalidConfig("max_turn must be >= 1".into()));
        }
        if !self.peg_baseline.is_valid() {
            return Err(Error::InvalidConfig("peg_baseline must lie in the unit cube".into()));
        }
        Ok(())
    }

    pub fn with_weights(self, alpha: f64, beta: f64) -> Self {
        PegeConfig { alpha, beta, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub nll: f64,
    pub peg: f64,
    pub ner: f64,
    pub total: f64,
    /// `T × |V|` row-major gradient of `total` w.r.t. the logits.
    pub grad_logits: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn check_matrix(vocab: usize, matrix: &VadMatrix) -> Result<()> {
    if vocab != matrix.vocab_size() {
        return Err(Error::DimensionMismatch(format!(
            "{vocab} token probabilities, VAD matrix has {} rows",
            matrix.vocab_size()
        )));
    }
    Ok(())
}

/// ‖ū₁ − E_dist[VAD]‖₂, always within `[0, √3]`.
pub fn emotional_distance(u1_mean: VadVector, dist: &TokenDistribution, matrix: &VadMatrix) -> Result<f64> {
    check_matrix(dist.len(), matrix)?;
    Ok(norm3(sub3(u1_mean.to_array(), matrix.weighted_sum(dist.probs()))))
}

/// `cos(π · min(context_turns, max_turn) / max_turn)`.
pub fn dialog_progress(context_turns: u32, max_turn: u32) -> f64 {
    let max_turn = max_turn.max(1);
    let c = context_turns.min(max_turn);
    if c == max_turn {
        return -1.0;
    }
    (PI * c as f64 / max_turn as f64).cos()
}

pub fn peg_loss(p_pos: f64, eds: &[f64], progress: f64) -> f64 {
    eds.iter().map(|ed| p_pos * ed + (1.0 - p_pos) * progress * ed).sum()
}

pub fn ner_loss(p_neg: f64, dists: &[TokenDistribution], matrix: &VadMatrix) -> Result<f64> {
    let mut total = 0.0;
    for d in dists {
        check_matrix(d.len(), matrix)?;
        total += p_neg * norm3(matrix.weighted_sum(d.probs()));
    }
    Ok(total)
}

fn check_targets(logits: &LogitsSequence, target: &[usize]) -> Result<()> {
    if target.len() != logits.steps() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {} logits steps",
            target.len(),
            logits.steps()
        )));
    }
    if let Some(&id) = target.iter().find(|&&id| id >= logits.vocab_size()) {
        return Err(Error::IdOutOfRange { id, vocab_size: logits.vocab_size() });
    }
    Ok(())
}

/// −Σ_t log softmax(h_t)[target_t].
pub fn nll_loss(logits: &LogitsSequence, target: &[usize]) -> Result<f64> {
    check_targets(logits, target)?;
    Ok((0..logits.steps())
        .map(|t| {
            let row = logits.row(t);
            log_sum_exp(row) - row[target[t]]
        })
        .sum())
}

/// Per-example inputs of the composite loss that do not depend on logits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionTarget {
    pub u1_mean: VadVector,
    pub polarity: PolarityDistribution,
    pub context_turns: u32,
}

/// Composite loss and its analytic gradient.
pub fn pege_loss(
    logits: &LogitsSequence,
    target: &[usize],
    u1_mean: VadVector,
    polarity: PolarityDistribution,
    context_turns: u32,
    matrix: &VadMatrix,
    config: &PegeConfig,
) -> Result<LossBreakdown> {
    check_targets(logits, target)?;
    check_matrix(logits.vocab_size(), matrix)?;
    if !logits.is_finite() {
        return Err(Error::NonFinite("logits".into()));
    }
    let vocab = logits.vocab_size();
    let u = u1_mean.to_array();
    let progress = dialog_progress(context_turns, config.max_turn);
    let p_pos = polarity.p_pos;
    let p_neg = polarity.p_neg;
    // d(peg)/d(ED_t) is the same for every step.
    let peg_weight = p_pos + (1.0 - p_pos) * progress;

    let rows = matrix.rows();
    let mut grad = vec![0.0; logits.steps() * vocab];
    let mut eds = Vec::with_capacity(logits.steps());
    let mut nll = 0.0;
    let mut ner = 0.0;

    for t in 0..logits.steps() {
        let h = logits.row(t);
        let s = softmax(h);
        nll += log_sum_exp(h) - h[target[t]];

        let e = matrix.weighted_sum(&s);
        let diff = sub3(e, u);
        let ed = norm3(diff);
        let norm = norm3(e);
        eds.push(ed);
        ner += p_neg * norm;

        let ed_den = (ed * ed + NORM_GUARD).sqrt();
        let norm_den = (norm * norm + NORM_GUARD).sqrt();
        let mut g_e = [0.0; 3];
        for c in 0..3 {
            g_e[c] = config.alpha * peg_weight * diff[c] / ed_den - config.beta * p_neg * e[c] / norm_den;
        }

        // dL/ds_i = ⟨row_i, g_e⟩, then through the softmax Jacobian.
        let g_s: Vec<f64> = rows
            .iter()
            .map(|r| r.valence * g_e[0] + r.arousal * g_e[1] + r.dominance * g_e[2])
            .collect();
        let mean_gs: f64 = s.iter().zip(&g_s).map(|(p, g)| p * g).sum();
        let out = &mut grad[t * vocab..(t + 1) * vocab];
        for i in 0..vocab {
            out[i] = s[i] + s[i] * (g_s[i] - mean_gs);
        }
        out[target[t]] -= 1.0;
    }

    let peg = peg_loss(p_pos, &eds, progress);
    let total = nll + config.alpha * peg - config.beta * ner;
    Ok(LossBreakdown { nll, peg, ner, total, grad_logits: grad })
}

/// [`pege_loss`] taking the per-example emotion inputs as one value.
pub fn pege_loss_for(
    logits: &LogitsSequence,
    target: &[usize],
    emotion: &EmotionTarget,
    matrix: &VadMatrix,
    config: &PegeConfig,
) -> Result<LossBreakdown> {
    pege_loss(logits, target, emotion.u1_mean, emotion.polarity, emotion.context_turns, matrix, config)
}
