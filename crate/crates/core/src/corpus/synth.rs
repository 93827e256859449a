//! Template-based synthetic dialogs over a small themed vocabulary.
//!
//! Every dialog gets a first-utterance mood from the polarity mix and a
//! trajectory. The agent's mood per turn follows the trajectory, or with
//! probability `agent_noise` is drawn uniformly. The user's mood copies the
//! previous agent mood with probability `follow_prob`. The
//! trajectory is appended to `source_id` so it stays visible in corpus files.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dialog, Speaker, Utterance};
use crate::classifier::Polarity;
use crate::error::{Error, Result};
use crate::text::{tokenize, Vocab};

pub const DEFAULT_THEMES: &str = include_str!("../../data/themes.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoodTable {
    pub negative: Vec<String>,
    pub neutral: Vec<String>,
    pub positive: Vec<String>,
}

impl MoodTable {
    pub fn get(&self, mood: Polarity) -> &[String] {
        match mood {
            Polarity::Negative => &self.negative,
            Polarity::Neutral => &self.neutral,
            Polarity::Positive => &self.positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Words {
    pub negative: Vec<String>,
    pub neutral: Vec<String>,
    pub positive: Vec<String>,
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Templates {
    pub user: MoodTable,
    pub agent: MoodTable,
}

/// Phrases inserted to exercise filter rules 4 to 6.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisePhrases {
    pub topics: Vec<String>,
    pub entities: Vec<String>,
    pub offensive: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThemeTables {
    pub words: Words,
    pub templates: Templates,
    pub noise: NoisePhrases,
}

impl Default for ThemeTables {
    fn default() -> Self {
        Self::parse(DEFAULT_THEMES).expect("bundled themes are valid")
    }
}

impl ThemeTables {
    pub fn parse(text: &str) -> Result<Self> {
        let t: ThemeTables = toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("themes: {e}")))?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let lists: [(&str, &[String]); 13] = [
            ("words.negative", &self.words.negative),
            ("words.neutral", &self.words.neutral),
            ("words.positive", &self.words.positive),
            ("words.topics", &self.words.topics),
            ("templates.user.negative", &self.templates.user.negative),
            ("templates.user.neutral", &self.templates.user.neutral),
            ("templates.user.positive", &self.templates.user.positive),
            ("templates.agent.negative", &self.templates.agent.negative),
            ("templates.agent.neutral", &self.templates.agent.neutral),
            ("templates.agent.positive", &self.templates.agent.positive),
            ("noise.topics", &self.noise.topics),
            ("noise.entities", &self.noise.entities),
            ("noise.offensive", &self.noise.offensive),
        ];
        for (name, list) in lists {
            if list.is_empty() {
                return Err(Error::InvalidConfig(format!("themes: {name} is empty")));
            }
        }
        Ok(())
    }

    pub fn mood_words(&self, mood: Polarity) -> &[String] {
        match mood {
            Polarity::Negative => &self.words.negative,
            Polarity::Neutral => &self.words.neutral,
            Polarity::Positive => &self.words.positive,
        }
    }

    fn templates(&self, speaker: Speaker, mood: Polarity) -> &[String] {
        match speaker {
            Speaker::User => self.templates.user.get(mood),
            Speaker::Agent => self.templates.agent.get(mood),
        }
    }

    /// Every token any generated utterance can contain, sorted.
    pub fn vocabulary(&self) -> Vocab {
        let mut words: Vec<String> = Vec::new();
        let w = &self.words;
        for list in [&w.negative, &w.neutral, &w.positive, &w.topics] {
            words.extend(list.iter().flat_map(|s| tokenize(s)));
        }
        for table in [&self.templates.user, &self.templates.agent] {
            for list in [&table.negative, &table.neutral, &table.positive] {
                for t in list {
                    words.extend(tokenize(&t.replace("{m}", " ").replace("{t}", " ")));
                }
            }
        }
        let n = &self.noise;
        for list in [&n.topics, &n.entities, &n.offensive] {
            words.extend(list.iter().flat_map(|s| tokenize(s)));
        }
        words.sort();
        words.dedup();
        Vocab::from_words(words)
    }

    /// Fills one template of the given speaker and mood.
    pub fn utterance(&self, speaker: Speaker, mood: Polarity, rng: &mut impl Rng) -> String {
        let template = self.templates(speaker, mood).choose(rng).expect("validated non-empty");
        let mood_words = self.mood_words(mood);
        template
            .split_whitespace()
            .map(|piece| match piece {
                "{m}" => mood_words.choose(rng).expect("validated non-empty").as_str(),
                "{t}" => self.words.topics.choose(rng).expect("validated non-empty").as_str(),
                other => other,
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trajectory {
    /// Agent mirrors the first utterance, then turns positive.
    Uplift,
    /// Agent keeps mirroring the user.
    Stagnant,
    /// Agent is positive from its first reply.
    Abrupt,
}

impl Trajectory {
    pub fn as_str(self) -> &'static str {
        match self {
            Trajectory::Uplift => "uplift",
            Trajectory::Stagnant => "stagnant",
            Trajectory::Abrupt => "abrupt",
        }
    }

    /// Reads the label back from a synthetic `source_id`.
    pub fn from_source_id(id: &str) -> Option<Trajectory> {
        match id.rsplit('-').next()? {
            "uplift" => Some(Trajectory::Uplift),
            "stagnant" => Some(Trajectory::Stagnant),
            "abrupt" => Some(Trajectory::Abrupt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarityMix {
    pub negative: f64,
    pub neutral: f64,
    pub positive: f64,
}

impl Default for PolarityMix {
    fn default() -> Self {
        PolarityMix { negative: 33.0, neutral: 34.0, positive: 33.0 }
    }
}

impl PolarityMix {
    /// Exact per-label counts for `n` items by largest remainder; ties go
    /// to the earlier label in negative, neutral, positive order.
    pub fn counts(&self, n: usize) -> Result<[usize; 3]> {
        let w = [self.negative, self.neutral, self.positive];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidConfig(format!("polarity_mix must be non-negative with a positive sum, got {w:?}")));
        }
        let total: f64 = w.iter().sum();
        let raw: Vec<f64> = w.iter().map(|x| x / total * n as f64).collect();
        let mut counts = [0usize; 3];
        for i in 0..3 {
            counts[i] = raw[i].floor() as usize;
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
        let mut left = n - counts.iter().sum::<usize>();
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryMix {
    pub uplift: f64,
    pub stagnant: f64,
    pub abrupt: f64,
}

impl Default for TrajectoryMix {
    fn default() -> Self {
        TrajectoryMix { uplift: 0.45, stagnant: 0.4, abrupt: 0.15 }
    }
}

/// Per-dialog probabilities of inserting a phrase caught by rules 4 to 6.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRates {
    pub topic: f64,
    pub entity: f64,
    pub offensive: f64,
}

impl Default for NoiseRates {
    fn default() -> Self {
        NoiseRates { topic: 0.02, entity: 0.02, offensive: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_num_dialogs")]
    pub num_dialogs: usize,
    /// Inclusive range of utterances per dialog.
    #[serde(default = "default_turns_range")]
    pub turns_range: [usize; 2],
    #[serde(default)]
    pub polarity_mix: PolarityMix,
    #[serde(default)]
    pub trajectory_mix: TrajectoryMix,
    /// Inclusive range of mirroring agent turns before an uplift.
    #[serde(default = "default_uplift_after")]
    pub uplift_after: [usize; 2],
    /// Probability that a user utterance takes the previous agent mood.
    #[serde(default = "default_follow")]
    pub follow_prob: f64,
    /// Probability that an agent utterance ignores the trajectory and takes
    /// a uniformly drawn mood.
    #[serde(default)]
    pub agent_noise: f64,
    #[serde(default)]
    pub noise: NoiseRates,
    #[serde(default)]
    pub themes: ThemeTables,
}

fn default_num_dialogs() -> usize {
    2000
}
fn default_turns_range() -> [usize; 2] {
    [3, 21]
}
fn default_uplift_after() -> [usize; 2] {
    [1, 2]
}
fn default_follow() -> f64 {
    0.9
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_dialogs: default_num_dialogs(),
            turns_range: default_turns_range(),
            polarity_mix: PolarityMix::default(),
            trajectory_mix: TrajectoryMix::default(),
            uplift_after: default_uplift_after(),
            follow_prob: default_follow(),
            agent_noise: 0.3,
            noise: NoiseRates::default(),
            themes: ThemeTables::default(),
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!("{name} must be in [0, 1], got {p}")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_dialogs == 0 {
            return Err(Error::InvalidConfig("num_dialogs must be >= 1".into()));
        }
        let [lo, hi] = self.turns_range;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!("turns_range must satisfy 1 <= min <= max, got {lo}..{hi}")));
        }
        if self.uplift_after[0] > self.uplift_after[1] {
            return Err(Error::InvalidConfig("uplift_after must satisfy min <= max".into()));
        }
        self.polarity_mix.counts(1)?;
        let t = &self.trajectory_mix;
        let tw = [t.uplift, t.stagnant, t.abrupt];
        if tw.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || tw.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidConfig("trajectory_mix must be non-negative with a positive sum".into()));
        }
        check_prob("follow_prob", self.follow_prob)?;
        check_prob("agent_noise", self.agent_noise)?;
        check_prob("noise.topic", self.noise.topic)?;
        check_prob("noise.entity", self.noise.entity)?;
        check_prob("noise.offensive", self.noise.offensive)?;
        self.themes.validate()
    }

    fn draw_trajectory(&self, rng: &mut impl Rng) -> Trajectory {
        let t = &self.trajectory_mix;
        let u = rng.gen::<f64>() * (t.uplift + t.stagnant + t.abrupt);
        if u < t.uplift {
            Trajectory::Uplift
        } else if u < t.uplift + t.stagnant {
            Trajectory::Stagnant
        } else {
            Trajectory::Abrupt
        }
    }
}

/// First-utterance moods with exact mix counts, in seeded random order.
pub fn assign_moods(mix: &PolarityMix, n: usize, rng: &mut impl Rng) -> Result<Vec<Polarity>> {
    let counts = mix.counts(n)?;
    let mut moods: Vec<Polarity> =
        Polarity::ALL.iter().zip(counts).flat_map(|(&p, c)| std::iter::repeat_n(p, c)).collect();
    moods.shuffle(rng);
    Ok(moods)
}

fn generate_dialog(config: &SynthConfig, index: usize, u1_mood: Polarity, rng: &mut ChaCha8Rng) -> Dialog {
    let themes = &config.themes;
    let trajectory = config.draw_trajectory(rng);
    let len = rng.gen_range(config.turns_range[0]..=config.turns_range[1]);
    let switch = rng.gen_range(config.uplift_after[0]..=config.uplift_after[1]);

    let mut texts = Vec::with_capacity(len);
    let mut user_mood = u1_mood;
    let mut agent_mood = u1_mood;
    for pos in 0..len {
        let speaker = Speaker::at(pos);
        let mood = match speaker {
            Speaker::User => {
                if pos > 0 && rng.gen::<f64>() < config.follow_prob {
                    user_mood = agent_mood;
                }
                if trajectory == Trajectory::Uplift && pos + 1 == len && pos > 0 {
                    user_mood = Polarity::Positive;
                }
                user_mood
            }
            Speaker::Agent => {
                let agent_turn = pos / 2;
                agent_mood = match trajectory {
                    Trajectory::Uplift if agent_turn < switch => user_mood,
                    Trajectory::Stagnant => user_mood,
                    _ => Polarity::Positive,
                };
                if rng.gen::<f64>() < config.agent_noise {
                    agent_mood = *Polarity::ALL.choose(rng).expect("three labels");
                }
                agent_mood
            }
        };
        texts.push(themes.utterance(speaker, mood, rng));
    }

    let noise = &config.noise;
    let phrases: [(f64, &[String]); 3] = [
        (noise.topic, &themes.noise.topics),
        (noise.entity, &themes.noise.entities),
        (noise.offensive, &themes.noise.offensive),
    ];
    for (rate, list) in phrases {
        if rng.gen::<f64>() < rate {
            // Middle utterances only, so the first and last keep their polarity.
            let at = if len >= 3 { rng.gen_range(1..len - 1) } else { 0 };
            let phrase = list.choose(rng).expect("validated non-empty");
            texts[at] = format!("{} {phrase}", texts[at]);
        }
    }

    let utterances = texts.into_iter().enumerate().map(|(i, t)| Utterance::new(Speaker::at(i), t)).collect();
    Dialog { source_id: format!("synth-{index:06}-{}", trajectory.as_str()), utterances }
}

pub fn synthesize_corpus(config: &SynthConfig, seed: u64) -> Result<Vec<Dialog>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moods = assign_moods(&config.polarity_mix, config.num_dialogs, &mut rng)?;
    Ok(moods.into_iter().enumerate().map(|(i, m)| generate_dialog(config, i, m, &mut rng)).collect())
}

/// A starting utterance for self-chat with its intended label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedUtterance {
    pub text: String,
    pub polarity: Polarity,
}

pub fn seed_utterances(themes: &ThemeTables, mix: &PolarityMix, n: usize, seed: u64) -> Result<Vec<SeedUtterance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moods = assign_moods(mix, n, &mut rng)?;
    Ok(moods
        .into_iter()
        .map(|polarity| SeedUtterance { text: themes.utterance(Speaker::User, polarity, &mut rng), polarity })
        .collect())
}

pub fn seeds_to_jsonl(seeds: &[SeedUtterance]) -> String {
    seeds.iter().map(|s| serde_json::to_string(s).expect("seed serializes") + "\n").collect()
}

pub fn parse_seeds(text: &str) -> Result<Vec<SeedUtterance>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Json { context: format!("seed line {}", i + 1), source: e }))
        .collect()
}
