//! Declarative run configuration shared by every CLI stage.
//!
//! A TOML document parses into [`RunConfig`]. Resolution applies the
//! top-level seed, `PEGE_PATH_*` environment overrides and the vocabulary
//! size, loads every data file (bundled copies stand in for absent paths),
//! and yields a [`ResolvedConfig`] whose canonical JSON is hashed into each
//! output file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{ClassifierParams, LexiconClassifier};
use crate::corpus::filter::{list_entries, DEFAULT_ENTITIES, DEFAULT_OFFENSIVE, DEFAULT_TOPICS};
use crate::corpus::synth::{parse_seeds, SeedUtterance, ThemeTables};
use crate::corpus::{prepare_general_examples, prepare_training_examples, Dialog, FilterRules, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::SelfChatConfig;
use crate::lexicon::{VadLexicon, VadMatrix, VadVector};
use crate::model::decode::DecodeConfig;
use crate::model::encode::{encode_example, EncodedExample};
use crate::model::train::TrainConfig;
use crate::model::ModelConfig;
use crate::objective::PegeConfig;
use crate::text::Vocab;

pub const BUNDLED_LEXICON: &str = include_str!("../data/synthetic_vad.tsv");
pub const BUNDLED_VOCAB: &str = include_str!("../data/synthetic_vocab.txt");
pub const BUNDLED_SEEDS: &str = include_str!("../data/selfchat_seeds.jsonl");

/// Prefix of the environment variables that override entries of `[paths]`.
pub const PATH_ENV_PREFIX: &str = "PEGE_PATH_";

/// Data files, relative to the config file's directory. `None` selects the
/// bundled copy.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default)]
    pub lexicon: Option<String>,
    #[serde(default)]
    pub vocab: Option<String>,
    #[serde(default)]
    pub seeds: Option<String>,
    #[serde(default)]
    pub themes: Option<String>,
    /// Training corpus; when absent `train` synthesizes one from `[synth]`.
    #[serde(default)]
    pub corpus: Option<String>,
    #[serde(default)]
    pub topic_blocklist: Option<String>,
    #[serde(default)]
    pub entity_patterns: Option<String>,
    #[serde(default)]
    pub offensive_blocklist: Option<String>,
}

impl Paths {
    fn slots(&mut self) -> [(&'static str, &mut Option<String>); 8] {
        [
            ("LEXICON", &mut self.lexicon),
            ("VOCAB", &mut self.vocab),
            ("SEEDS", &mut self.seeds),
            ("THEMES", &mut self.themes),
            ("CORPUS", &mut self.corpus),
            ("TOPIC_BLOCKLIST", &mut self.topic_blocklist),
            ("ENTITY_PATTERNS", &mut self.entity_patterns),
            ("OFFENSIVE_BLOCKLIST", &mut self.offensive_blocklist),
        ]
    }

    pub fn apply_env(&mut self, env: &dyn Fn(&str) -> Option<String>) {
        for (key, slot) in self.slots() {
            if let Some(v) = env(&format!("{PATH_ENV_PREFIX}{key}")) {
                *slot = Some(v);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    #[serde(default = "default_t1")]
    pub first_utt_threshold: f64,
    #[serde(default = "default_t2")]
    pub last_utt_pos_threshold: f64,
}

fn default_t1() -> f64 {
    0.5
}
fn default_t2() -> f64 {
    0.9
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection { first_utt_threshold: default_t1(), last_utt_pos_threshold: default_t2() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfChatSection {
    #[serde(default = "default_turns")]
    pub turns: usize,
    #[serde(default)]
    pub decode: DecodeConfig,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_turns() -> usize {
    10
}

impl Default for SelfChatSection {
    fn default() -> Self {
        SelfChatSection { turns: default_turns(), decode: DecodeConfig::default(), rng_seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSection {
    #[serde(default = "default_cases")]
    pub cases: usize,
    #[serde(default = "default_gc_steps")]
    pub max_steps: usize,
    #[serde(default = "default_gc_vocab")]
    pub max_vocab: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_cases() -> usize {
    10
}
fn default_gc_steps() -> usize {
    4
}
fn default_gc_vocab() -> usize {
    16
}
fn default_eps() -> f64 {
    1e-5
}
fn default_tolerance() -> f64 {
    1e-4
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection {
            cases: default_cases(),
            max_steps: default_gc_steps(),
            max_vocab: default_gc_vocab(),
            eps: default_eps(),
            tolerance: default_tolerance(),
            seed: 0,
        }
    }
}

/// The configuration document as written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides every per-section seed when set.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub classifier: ClassifierParams,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub pege: PegeConfig,
    #[serde(default)]
    pub selfchat: SelfChatSection,
    #[serde(default)]
    pub gradcheck: GradcheckSection,
}

/// Every setting after resolution. Its JSON form is the hashed identity of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub paths: Paths,
    pub classifier: ClassifierParams,
    pub synth: SynthConfig,
    pub filter: FilterSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub pege: PegeConfig,
    pub selfchat: SelfChatSection,
    pub gradcheck: GradcheckSection,
}

/// Loaded data files.
#[derive(Debug, Clone)]
pub struct Resources {
    pub lexicon: VadLexicon,
    pub vocab: Vocab,
    pub matrix: VadMatrix,
    pub seeds: Vec<SeedUtterance>,
    pub filter: FilterRules,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

/// Which utterances become training targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Agent turns only, conditioned on the emotion prefix.
    #[default]
    Agent,
    /// Every utterance after the first; trains the self-chat user.
    General,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Agent => "agent",
            Role::General => "general",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agent" => Ok(Role::Agent),
            "general" => Ok(Role::General),
            other => Err(Error::InvalidConfig(format!("unknown role {other:?} (expected agent or general)"))),
        }
    }
}

fn read(base: &Path, rel: &str) -> Result<String> {
    let path = base.join(rel);
    std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

fn read_or(base: &Path, rel: Option<&str>, bundled: &str) -> Result<String> {
    match rel {
        Some(r) => read(base, r),
        None => Ok(bundled.to_string()),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().trim().to_string()))
    }

    /// Reads the file; [`RunConfig::resolve`] should then use its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Resolves against `base_dir`, reading path overrides through `env`.
    pub fn resolve(&self, base_dir: &Path, env: &dyn Fn(&str) -> Option<String>) -> Result<(ResolvedConfig, Resources)> {
        let mut paths = self.paths.clone();
        paths.apply_env(env);

        let mut synth = self.synth.clone();
        if let Some(rel) = &paths.themes {
            synth.themes = ThemeTables::parse(&read(base_dir, rel)?)?;
        }
        let mut model = self.model;
        let mut train = self.train;
        let mut selfchat = self.selfchat;
        let mut gradcheck = self.gradcheck;
        if let Some(s) = self.seed {
            model.seed = s;
            train.seed = s;
            selfchat.rng_seed = s;
            gradcheck.seed = s;
        }

        let lexicon = VadLexicon::parse_tsv(&read_or(base_dir, paths.lexicon.as_deref(), BUNDLED_LEXICON)?, VadVector::NEUTRAL)?;
        let vocab = Vocab::parse(&read_or(base_dir, paths.vocab.as_deref(), BUNDLED_VOCAB)?)?;
        if model.vocab_size == 0 {
            model.vocab_size = vocab.len();
        } else if model.vocab_size != vocab.len() {
            return Err(Error::InvalidConfig(format!(
                "model.vocab_size is {} but the vocabulary has {} tokens",
                model.vocab_size,
                vocab.len()
            )));
        }
        let matrix = lexicon.align(&vocab)?;
        let seeds = parse_seeds(&read_or(base_dir, paths.seeds.as_deref(), BUNDLED_SEEDS)?)?;
        let list = |rel: &Option<String>, bundled: &str| -> Result<Vec<String>> {
            Ok(list_entries(&read_or(base_dir, rel.as_deref(), bundled)?))
        };
        let filter = FilterRules::new(
            self.filter.first_utt_threshold,
            self.filter.last_utt_pos_threshold,
            &list(&paths.topic_blocklist, DEFAULT_TOPICS)?,
            &list(&paths.entity_patterns, DEFAULT_ENTITIES)?,
            &list(&paths.offensive_blocklist, DEFAULT_OFFENSIVE)?,
        )?;

        let resolved = ResolvedConfig {
            seed: self.seed.unwrap_or(0),
            paths,
            classifier: self.classifier,
            synth,
            filter: self.filter,
            model,
            train,
            pege: self.pege,
            selfchat,
            gradcheck,
        };
        resolved.validate()?;
        Ok((resolved, Resources { lexicon, vocab, matrix, seeds, filter, base_dir: base_dir.to_path_buf() }))
    }
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<()> {
        self.classifier.validate()?;
        self.synth.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.pege.validate()?;
        if self.selfchat.turns == 0 {
            return Err(Error::InvalidConfig("selfchat.turns must be >= 1".into()));
        }
        let g = &self.gradcheck;
        if g.cases == 0 || g.max_steps == 0 || g.max_vocab < 2 {
            return Err(Error::InvalidConfig("gradcheck needs cases >= 1, max_steps >= 1, max_vocab >= 2".into()));
        }
        if !(g.eps > 0.0 && g.tolerance > 0.0) {
            return Err(Error::InvalidConfig("gradcheck eps and tolerance must be > 0".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn selfchat_config(&self, seeds: Vec<SeedUtterance>) -> SelfChatConfig {
        SelfChatConfig { seeds, turns: self.selfchat.turns, decode: self.selfchat.decode, rng_seed: self.selfchat.rng_seed }
    }
}

impl Resources {
    pub fn classifier(&self, params: ClassifierParams) -> LexiconClassifier<'_> {
        LexiconClassifier::new(&self.lexicon, params)
    }

    /// Reads the configured corpus path, relative to the config directory.
    pub fn corpus_path(&self, config: &ResolvedConfig) -> Option<PathBuf> {
        config.paths.corpus.as_ref().map(|rel| self.base_dir.join(rel))
    }
}

/// Encoded training examples plus the number of dialogs contributing none.
#[derive(Debug, Clone)]
pub struct EncodedCorpus {
    pub examples: Vec<EncodedExample>,
    pub skipped_dialogs: usize,
}

/// Turns dialogs into model inputs for `role`. Dialogs without a usable
/// target are skipped and counted; over-long examples are an error.
pub fn encode_corpus(dialogs: &[Dialog], role: Role, config: &ResolvedConfig, resources: &Resources) -> Result<EncodedCorpus> {
    let clf = resources.classifier(config.classifier);
    let mut examples = Vec::new();
    let mut skipped_dialogs = 0;
    for d in dialogs {
        let prepared = match role {
            Role::Agent => prepare_training_examples(d, &clf, &resources.lexicon),
            Role::General => prepare_general_examples(d, &clf, &resources.lexicon),
        };
        match prepared {
            Ok(exs) => {
                for ex in &exs {
                    examples.push(encode_example(ex, &resources.vocab, config.model.context_window)?);
                }
            }
            Err(Error::NoAgentUtterance(_) | Error::EmptyUtterance) => skipped_dialogs += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(EncodedCorpus { examples, skipped_dialogs })
}
