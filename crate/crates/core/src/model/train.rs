use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encode::EncodedExample;
use super::math::Real;
use super::{Adam, AdamParams, Gradients, Model};
use crate::error::{Error, Result};
use crate::lexicon::VadMatrix;
use crate::objective::{nll_loss, pege_loss_for, LogitsSequence, LossBreakdown, PegeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    NllOnly,
    NerOnlyComposite,
    PegOnlyComposite,
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::NllOnly, Ablation::NerOnlyComposite, Ablation::PegOnlyComposite, Ablation::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::NllOnly => "nll_only",
            Ablation::NerOnlyComposite => "ner_only_composite",
            Ablation::PegOnlyComposite => "peg_only_composite",
            Ablation::Full => "full",
        }
    }

    /// Zeroes the weights the ablation leaves out.
    pub fn apply(self, config: &PegeConfig) -> PegeConfig {
        let (a, b) = (config.alpha, config.beta);
        match self {
            Ablation::NllOnly => config.with_weights(0.0, 0.0),
            Ablation::NerOnlyComposite => config.with_weights(0.0, b),
            Ablation::PegOnlyComposite => config.with_weights(a, 0.0),
            Ablation::Full => config.with_weights(a, b),
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown ablation {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_steps")]
    pub max_steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub adam: AdamParams,
    /// Global gradient-norm clip; zero disables it.
    #[serde(default)]
    pub clip_norm: f64,
    /// Seeds the example shuffle.
    #[serde(default)]
    pub seed: u64,
}

fn default_steps() -> usize {
    2000
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-3
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_steps: default_steps(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            adam: AdamParams::default(),
            clip_norm: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm >= 0.0) {
            return Err(Error::InvalidConfig("clip_norm must be >= 0".into()));
        }
        Ok(())
    }
}

/// Batch-mean loss components of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub nll: f64,
    pub peg: f64,
    pub ner: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model<f32>,
    pub log: Vec<StepLog>,
}

/// Loss and parameter gradient of a single example.
pub fn example_gradients<F: Real>(
    model: &Model<F>,
    ex: &EncodedExample,
    matrix: &VadMatrix,
    pege: &PegeConfig,
) -> Result<(LossBreakdown, Gradients<F>)> {
    let trace = model.trace(&ex.input)?;
    let rows = ex.rows();
    let raw = model.logits_rows(&trace, rows.clone());
    let logits = LogitsSequence::new(rows.len(), model.vocab_size(), raw.into_iter().map(Real::f64).collect())?;
    let loss = pege_loss_for(&logits, &ex.target, &ex.emotion, matrix, pege)?;
    let d_logits: Vec<F> = loss.grad_logits.iter().map(|&g| F::of(g)).collect();
    let mut grads = model.zero_grads();
    model.backward(&trace, rows, &d_logits, &mut grads);
    Ok((loss, grads))
}

/// Mean loss and gradient over `batch`. Per-example results are reduced in
/// batch order, so the outcome does not depend on the thread count.
pub fn batch_gradients<F: Real>(
    model: &Model<F>,
    batch: &[&EncodedExample],
    matrix: &VadMatrix,
    pege: &PegeConfig,
    parallel: bool,
) -> Result<(StepLog, Gradients<F>)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let per: Vec<Result<(LossBreakdown, Gradients<F>)>> = if parallel {
        batch.par_iter().map(|ex| example_gradients(model, ex, matrix, pege)).collect()
    } else {
        batch.iter().map(|ex| example_gradients(model, ex, matrix, pege)).collect()
    };
    let mut grads = model.zero_grads();
    let mut log = StepLog { step: 0, nll: 0.0, peg: 0.0, ner: 0.0, total: 0.0 };
    for r in per {
        let (loss, g) = r?;
        grads.add_assign(&g);
        log.nll += loss.nll;
        log.peg += loss.peg;
        log.ner += loss.ner;
        log.total += loss.total;
    }
    let n = batch.len() as f64;
    grads.scale(F::of(1.0 / n));
    log.nll /= n;
    log.peg /= n;
    log.ner /= n;
    log.total /= n;
    Ok((log, grads))
}

/// Endless epoch-shuffled index stream.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Batcher { order, pos: 0, rng }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Runs `max_steps` Adam updates on the ablated objective. With `threads`
/// above one, per-example work runs on a rayon pool of that size.
pub fn train(
    model: Model<f32>,
    examples: &[EncodedExample],
    matrix: &VadMatrix,
    pege: &PegeConfig,
    ablation: Ablation,
    config: &TrainConfig,
    threads: usize,
) -> Result<TrainOutput> {
    if examples.is_empty() {
        return Err(Error::InvalidConfig("no training examples".into()));
    }
    config.validate()?;
    pege.validate()?;
    if matrix.vocab_size() != model.vocab_size() {
        return Err(Error::DimensionMismatch(format!(
            "VAD matrix has {} rows but the model vocabulary has {}",
            matrix.vocab_size(),
            model.vocab_size()
        )));
    }
    let objective = ablation.apply(pege);
    let pool = if threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut model = model;
    let mut adam = Adam::new(model.tensors(), config.learning_rate, config.adam);
    let mut batcher = Batcher::new(examples.len(), config.seed);
    let mut log = Vec::with_capacity(config.max_steps);
    for step in 0..config.max_steps {
        let batch: Vec<&EncodedExample> =
            batcher.next_batch(config.batch_size).into_iter().map(|i| &examples[i]).collect();
        let result = match &pool {
            Some(p) => p.install(|| batch_gradients(&model, &batch, matrix, &objective, true)),
            None => batch_gradients(&model, &batch, matrix, &objective, false),
        };
        let (mut entry, mut grads) = result.map_err(|e| match e {
            Error::NonFinite(what) => Error::NonFinite(format!("{what} at step {step}")),
            other => other,
        })?;
        entry.step = step;
        if ![entry.nll, entry.peg, entry.ner, entry.total].iter().all(|x| x.is_finite()) || !grads.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at step {step}: nll={} peg={} ner={} total={}",
                entry.nll, entry.peg, entry.ner, entry.total
            )));
        }
        if config.clip_norm > 0.0 {
            let norm = grads.squared_norm().sqrt();
            if norm > config.clip_norm {
                grads.scale((config.clip_norm / norm) as f32);
            }
        }
        adam.step(model.tensors_mut(), &grads);
        model.tick();
        if !model.is_finite() {
            return Err(Error::NonFinite(format!("parameters after step {step}")));
        }
        log.push(entry);
    }
    Ok(TrainOutput { model, log })
}

/// Mean next-token NLL per target token.
pub fn mean_nll<F: Real>(model: &Model<F>, examples: &[EncodedExample]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in examples {
        let trace = model.trace(&ex.input)?;
        let rows = ex.rows();
        let raw = model.logits_rows(&trace, rows.clone());
        let logits = LogitsSequence::new(rows.len(), model.vocab_size(), raw.into_iter().map(Real::f64).collect())?;
        total += nll_loss(&logits, &ex.target)?;
        count += ex.target.len();
    }
    if count == 0 {
        return Err(Error::InvalidConfig("no held-out targets".into()));
    }
    Ok(total / count as f64)
}

/// One log line per step as tab-separated values with a header.
pub fn log_to_tsv(log: &[StepLog]) -> String {
    let mut s = String::from("step\tnll\tpeg\tner\ttotal\n");
    for e in log {
        s.push_str(&format!("{}\t{:.9}\t{:.9}\t{:.9}\t{:.9}\n", e.step, e.nll, e.peg, e.ner, e.total));
    }
    s
}
