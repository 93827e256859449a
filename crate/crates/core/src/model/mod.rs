//! A small autoregressive dialog language model with hand-written
//! backpropagation.
//!
//! Token embeddings feed a stack of sequence-mixing layers (gated recurrent
//! by default, causal self-attention optionally) and a linear projection to
//! vocabulary logits. Parameters are `f32` for training; the whole model can
//! be cast to `f64` for gradient checks.

mod adam;
mod attention;
pub mod checkpoint;
pub mod decode;
pub mod encode;
mod gru;
pub mod math;
mod params;
pub mod prefix;
pub mod train;

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::objective::LogitsSequence;
use attention::{AttentionCache, AttentionLayer, KvCache};
use gru::{GruCache, GruLayer};
use math::{matvec_acc, matvec_t_acc, outer_acc, Real};

pub use adam::{Adam, AdamParams};
pub use params::{Gradients, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixer {
    #[default]
    Gru,
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Filled from the vocabulary when left at zero in a run config.
    #[serde(default)]
    pub vocab_size: usize,
    #[serde(default = "default_embed")]
    pub embed_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_layers")]
    pub num_layers: usize,
    #[serde(default = "default_window")]
    pub context_window: usize,
    #[serde(default)]
    pub mixer: Mixer,
    #[serde(default)]
    pub seed: u64,
}

fn default_embed() -> usize {
    64
}
fn default_hidden() -> usize {
    128
}
fn default_layers() -> usize {
    1
}
fn default_window() -> usize {
    128
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::new(0, 0)
    }
}

impl ModelConfig {
    pub fn new(vocab_size: usize, seed: u64) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim: default_embed(),
            hidden_dim: default_hidden(),
            num_layers: default_layers(),
            context_window: default_window(),
            mixer: Mixer::Gru,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("num_layers", self.num_layers),
            ("context_window", self.context_window),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Width of the representation fed to the output projection.
    pub fn output_width(&self) -> usize {
        match self.mixer {
            Mixer::Gru => self.hidden_dim,
            Mixer::Attention => self.embed_dim,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Layer {
    Gru(GruLayer),
    Attention(AttentionLayer),
}

#[derive(Debug, Clone)]
struct Layout {
    specs: Vec<params::TensorSpec>,
    layers: Vec<Layer>,
    embed: usize,
    pos: Option<usize>,
    out_w: usize,
    out_b: usize,
}

impl Layout {
    fn new(c: &ModelConfig) -> Self {
        use params::TensorSpec as S;
        let mut specs = vec![S::new("embed", vec![c.vocab_size, c.embed_dim], c.embed_dim)];
        let embed = 0;
        let pos = match c.mixer {
            Mixer::Attention => {
                specs.push(S::new("pos_embed", vec![c.context_window, c.embed_dim], c.embed_dim));
                Some(1)
            }
            Mixer::Gru => None,
        };
        let mut layers = Vec::new();
        let mut width = c.embed_dim;
        for l in 0..c.num_layers {
            let base = specs.len();
            match c.mixer {
                Mixer::Gru => {
                    let h = c.hidden_dim;
                    specs.push(S::new(format!("gru{l}.w_x"), vec![3 * h, width], width));
                    specs.push(S::new(format!("gru{l}.w_h"), vec![3 * h, h], h));
                    specs.push(S::new(format!("gru{l}.b_x"), vec![3 * h], width));
                    specs.push(S::new(format!("gru{l}.b_h"), vec![3 * h], h));
                    layers.push(Layer::Gru(GruLayer {
                        w_x: base,
                        w_h: base + 1,
                        b_x: base + 2,
                        b_h: base + 3,
                        input: width,
                        hidden: h,
                    }));
                    width = h;
                }
                Mixer::Attention => {
                    let (d, ff) = (c.embed_dim, c.hidden_dim);
                    for n in ["wq", "wk", "wv", "wo"] {
                        specs.push(S::new(format!("attn{l}.{n}"), vec![d, d], d));
                    }
                    specs.push(S::new(format!("attn{l}.w1"), vec![ff, d], d));
                    specs.push(S::new(format!("attn{l}.b1"), vec![ff], d));
                    specs.push(S::new(format!("attn{l}.w2"), vec![d, ff], ff));
                    specs.push(S::new(format!("attn{l}.b2"), vec![d], ff));
                    layers.push(Layer::Attention(AttentionLayer {
                        wq: base,
                        wk: base + 1,
                        wv: base + 2,
                        wo: base + 3,
                        w1: base + 4,
                        b1: base + 5,
                        w2: base + 6,
                        b2: base + 7,
                        width: d,
                        ff,
                    }));
                }
            }
        }
        let out_w = specs.len();
        specs.push(S::new("out.w", vec![c.vocab_size, width], width));
        specs.push(S::new("out.b", vec![c.vocab_size], width));
        Layout { specs, layers, embed, pos, out_w, out_b: out_w + 1 }
    }
}

#[derive(Debug, Clone)]
pub struct Model<F: Real = f32> {
    config: ModelConfig,
    layout: Layout,
    params: Vec<Tensor<F>>,
    step_count: u64,
}

impl<F: Real> PartialEq for Model<F> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params && self.step_count == other.step_count
    }
}

#[derive(Debug, Clone)]
enum LayerCache<F> {
    Gru(GruCache<F>),
    Attention(AttentionCache<F>),
}

/// Forward activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace<F> {
    tokens: Vec<usize>,
    /// `inputs[l]` feeds layer `l`; the last entry is the top output.
    inputs: Vec<Vec<F>>,
    caches: Vec<LayerCache<F>>,
}

impl<F> Trace<F> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone)]
enum LayerState<F> {
    Gru(Vec<F>),
    Attention(KvCache<F>),
}

/// Incremental decoding state.
#[derive(Debug, Clone)]
pub struct DecodeState<F> {
    pos: usize,
    layers: Vec<LayerState<F>>,
    top: Vec<F>,
}

impl<F> DecodeState<F> {
    pub fn position(&self) -> usize {
        self.pos
    }
}

/// Seeded `U(-1/√fan_in, 1/√fan_in)` for every tensor, in layout order.
pub fn init_model(config: ModelConfig) -> Result<Model<f32>> {
    Model::init(config)
}

impl<F: Real> Model<F> {
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = layout
            .specs
            .iter()
            .map(|s| {
                let bound = 1.0 / (s.fan_in as f64).sqrt();
                let mut t = Tensor::zeros(s.name.clone(), s.shape.clone());
                for x in &mut t.data {
                    *x = F::of(rng.gen_range(-bound..bound) as f32 as f64);
                }
                t
            })
            .collect();
        Ok(Model { config, layout, params, step_count: 0 })
    }

    /// Builds a model from named tensors, checking names and shapes.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor<F>>, step_count: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if tensors.len() != layout.specs.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {}", layout.specs.len(), tensors.len())));
        }
        for (spec, t) in layout.specs.iter().zip(&tensors) {
            if spec.name != t.name || spec.shape != t.shape || t.data.len() != spec.shape.iter().product::<usize>() {
                return Err(Error::Checkpoint(format!(
                    "tensor {:?} {:?} does not match expected {:?} {:?}",
                    t.name, t.shape, spec.name, spec.shape
                )));
            }
        }
        Ok(Model { config, layout, params: tensors, step_count })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn tensors(&self) -> &[Tensor<F>] {
        &self.params
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn zero_grads(&self) -> Gradients<F> {
        Gradients::zeros_like(&self.params)
    }

    pub fn cast<G: Real>(&self) -> Model<G> {
        Model {
            config: self.config,
            layout: self.layout.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            step_count: self.step_count,
        }
    }

    /// SHA-256 over every parameter value as little-endian `f64`.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.params {
            h.update(t.name.as_bytes());
            for x in &t.data {
                h.update(x.f64().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.len() > self.config.context_window {
            return Err(Error::OverLength { len: tokens.len(), window: self.config.context_window });
        }
        if let Some(&id) = tokens.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(Error::IdOutOfRange { id, vocab_size: self.config.vocab_size });
        }
        Ok(())
    }

    fn embed_token(&self, token: usize, pos: usize, out: &mut [F]) {
        let e = self.config.embed_dim;
        out.copy_from_slice(&self.params[self.layout.embed].data[token * e..(token + 1) * e]);
        if let Some(p) = self.layout.pos {
            for (o, v) in out.iter_mut().zip(&self.params[p].data[pos * e..(pos + 1) * e]) {
                *o += *v;
            }
        }
    }

    /// Runs every layer over `tokens`, keeping activations.
    pub fn trace(&self, tokens: &[usize]) -> Result<Trace<F>> {
        self.check_tokens(tokens)?;
        let len = tokens.len();
        let e = self.config.embed_dim;
        let mut x = vec![F::zero(); len * e];
        for (t, &tok) in tokens.iter().enumerate() {
            self.embed_token(tok, t, &mut x[t * e..(t + 1) * e]);
        }
        let mut inputs = vec![x];
        let mut caches = Vec::with_capacity(self.layout.layers.len());
        for layer in &self.layout.layers {
            let input = inputs.last().expect("embedding input");
            let (out, cache) = match layer {
                Layer::Gru(g) => {
                    let (o, c) = g.forward(&self.params, input, len);
                    (o, LayerCache::Gru(c))
                }
                Layer::Attention(a) => {
                    let (o, c) = a.forward(&self.params, input, len);
                    (o, LayerCache::Attention(c))
                }
            };
            inputs.push(out);
            caches.push(cache);
        }
        Ok(Trace { tokens: tokens.to_vec(), inputs, caches })
    }

    fn project(&self, top: &[F]) -> Vec<F> {
        let mut logits = self.params[self.layout.out_b].data.clone();
        matvec_acc(&mut logits, &self.params[self.layout.out_w].data, top);
        logits
    }

    /// Logits for positions `rows`, row-major `rows.len() × |V|`.
    pub fn logits_rows(&self, trace: &Trace<F>, rows: Range<usize>) -> Vec<F> {
        let d = self.config.output_width();
        let top = trace.inputs.last().expect("top output");
        let mut out = Vec::with_capacity(rows.len() * self.config.vocab_size);
        for t in rows {
            out.extend(self.project(&top[t * d..(t + 1) * d]));
        }
        out
    }

    /// Accumulates parameter gradients given `d_logits` for positions `rows`.
    pub fn backward(&self, trace: &Trace<F>, rows: Range<usize>, d_logits: &[F], grads: &mut Gradients<F>) {
        let d = self.config.output_width();
        let v = self.config.vocab_size;
        let len = trace.len();
        let top = trace.inputs.last().expect("top output");
        let mut d_top = vec![F::zero(); len * d];
        for (k, t) in rows.enumerate() {
            let dl = &d_logits[k * v..(k + 1) * v];
            outer_acc(&mut grads.bufs[self.layout.out_w], dl, &top[t * d..(t + 1) * d]);
            for (g, x) in grads.bufs[self.layout.out_b].iter_mut().zip(dl) {
                *g += *x;
            }
            matvec_t_acc(&mut d_top[t * d..(t + 1) * d], &self.params[self.layout.out_w].data, dl);
        }
        let mut upstream = d_top;
        for (l, layer) in self.layout.layers.iter().enumerate().rev() {
            let input = &trace.inputs[l];
            upstream = match (layer, &trace.caches[l]) {
                (Layer::Gru(g), LayerCache::Gru(c)) => {
                    g.backward(&self.params, c, input, &trace.inputs[l + 1], &upstream, grads)
                }
                (Layer::Attention(a), LayerCache::Attention(c)) => a.backward(&self.params, c, input, &upstream, grads),
                _ => unreachable!("trace built by this model"),
            };
        }
        let e = self.config.embed_dim;
        for (t, &tok) in trace.tokens.iter().enumerate() {
            let dx = &upstream[t * e..(t + 1) * e];
            for (g, x) in grads.bufs[self.layout.embed][tok * e..(tok + 1) * e].iter_mut().zip(dx) {
                *g += *x;
            }
            if let Some(p) = self.layout.pos {
                for (g, x) in grads.bufs[p][t * e..(t + 1) * e].iter_mut().zip(dx) {
                    *g += *x;
                }
            }
        }
    }

    /// One logits row per input position, each predicting the next token.
    pub fn forward(&self, tokens: &[usize]) -> Result<LogitsSequence> {
        if tokens.is_empty() {
            return Err(Error::DimensionMismatch("forward needs at least one token".into()));
        }
        let trace = self.trace(tokens)?;
        let rows = self.logits_rows(&trace, 0..tokens.len());
        LogitsSequence::new(tokens.len(), self.config.vocab_size, rows.into_iter().map(Real::f64).collect())
    }

    pub fn start_decode(&self) -> DecodeState<F> {
        let layers = self
            .layout
            .layers
            .iter()
            .map(|l| match l {
                Layer::Gru(g) => LayerState::Gru(vec![F::zero(); g.hidden]),
                Layer::Attention(_) => LayerState::Attention(KvCache::default()),
            })
            .collect();
        DecodeState { pos: 0, layers, top: Vec::new() }
    }

    /// Feeds one token and returns the logits predicting the next one.
    pub fn feed(&self, state: &mut DecodeState<F>, token: usize) -> Result<Vec<f64>> {
        if state.pos >= self.config.context_window {
            return Err(Error::OverLength { len: state.pos + 1, window: self.config.context_window });
        }
        if token >= self.config.vocab_size {
            return Err(Error::IdOutOfRange { id: token, vocab_size: self.config.vocab_size });
        }
        let mut x = vec![F::zero(); self.config.embed_dim];
        self.embed_token(token, state.pos, &mut x);
        for (layer, st) in self.layout.layers.iter().zip(state.layers.iter_mut()) {
            x = match (layer, st) {
                (Layer::Gru(g), LayerState::Gru(h)) => {
                    g.step(&self.params, &x, h);
                    h.clone()
                }
                (Layer::Attention(a), LayerState::Attention(kv)) => a.step(&self.params, &x, kv),
                _ => unreachable!("state built by this model"),
            };
        }
        state.pos += 1;
        state.top = x;
        Ok(self.project(&state.top).into_iter().map(Real::f64).collect())
    }

    pub(crate) fn tick(&mut self) {
        self.step_count += 1;
    }
}
