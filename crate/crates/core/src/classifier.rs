//! Utterance polarity from mean lexicon valence.
//!
//! Pseudo-logits `z_pos = (v̄ − ½)/τ`, `z_neg = (½ − v̄)/τ`, `z_neu = κ` go
//! through a softmax. Consumers only ever see the probability triple, so any
//! classifier implementing [`PolarityModel`] can replace this one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::VadLexicon;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarityDistribution {
    pub p_pos: f64,
    pub p_neg: f64,
    pub p_neu: f64,
}

impl PolarityDistribution {
    pub fn new(p_pos: f64, p_neg: f64, p_neu: f64) -> Result<Self> {
        let d = PolarityDistribution { p_pos, p_neg, p_neu };
        if [p_pos, p_neg, p_neu].iter().any(|p| !p.is_finite() || *p < 0.0) || ((p_pos + p_neg + p_neu) - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidConfig(format!("not a polarity distribution: {d:?}")));
        }
        Ok(d)
    }

    pub fn max_prob(&self) -> f64 {
        self.p_pos.max(self.p_neg).max(self.p_neu)
    }

    pub fn label(&self) -> Polarity {
        polarity_label(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Negative, Polarity::Neutral, Polarity::Positive];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
            Polarity::Positive => "positive",
        }
    }
}

impl std::str::FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negative" => Ok(Polarity::Negative),
            "neutral" => Ok(Polarity::Neutral),
            "positive" => Ok(Polarity::Positive),
            other => Err(Error::InvalidConfig(format!("unknown polarity {other:?}"))),
        }
    }
}

/// Argmax, ties broken neutral > positive > negative.
pub fn polarity_label(dist: &PolarityDistribution) -> Polarity {
    let max = dist.max_prob();
    if dist.p_neu == max {
        Polarity::Neutral
    } else if dist.p_pos == max {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierParams {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub neutral_bias: f64,
}

fn default_temperature() -> f64 {
    0.1
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams { temperature: default_temperature(), neutral_bias: 0.0 }
    }
}

impl ClassifierParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!("temperature must be > 0, got {}", self.temperature)));
        }
        if !self.neutral_bias.is_finite() {
            return Err(Error::InvalidConfig("neutral_bias must be finite".into()));
        }
        Ok(())
    }
}

/// Anything that maps a tokenized utterance to a polarity triple.
pub trait PolarityModel {
    fn classify(&self, tokens: &[String]) -> Result<PolarityDistribution>;
}

pub fn classify_polarity<S: AsRef<str>>(
    lexicon: &VadLexicon,
    utterance: &[S],
    params: &ClassifierParams,
) -> Result<PolarityDistribution> {
    let valence = lexicon.utterance_mean_vad(utterance)?.valence;
    Ok(polarity_from_valence(valence, params))
}

pub fn polarity_from_valence(mean_valence: f64, params: &ClassifierParams) -> PolarityDistribution {
    let z_pos = (mean_valence - 0.5) / params.temperature;
    let z_neg = (0.5 - mean_valence) / params.temperature;
    let z_neu = params.neutral_bias;
    let max = z_pos.max(z_neg).max(z_neu);
    let (e_pos, e_neg, e_neu) = ((z_pos - max).exp(), (z_neg - max).exp(), (z_neu - max).exp());
    let sum = e_pos + e_neg + e_neu;
    PolarityDistribution { p_pos: e_pos / sum, p_neg: e_neg / sum, p_neu: e_neu / sum }
}

#[derive(Debug, Clone, Copy)]
pub struct LexiconClassifier<'a> {
    pub lexicon: &'a VadLexicon,
    pub params: ClassifierParams,
}

impl<'a> LexiconClassifier<'a> {
    pub fn new(lexicon: &'a VadLexicon, params: ClassifierParams) -> Self {
        LexiconClassifier { lexicon, params }
    }
}

impl PolarityModel for LexiconClassifier<'_> {
    fn classify(&self, tokens: &[String]) -> Result<PolarityDistribution> {
        classify_polarity(self.lexicon, tokens, &self.params)
    }
}
