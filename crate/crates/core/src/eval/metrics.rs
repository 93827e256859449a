use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialog, Speaker, Utterance};
use crate::error::{Error, Result};
use crate::lexicon::{VadLexicon, VadVector};

fn mean_vad(utts: &[&Utterance], lexicon: &VadLexicon) -> Result<[f64; 3]> {
    let mut acc = [0.0; 3];
    for u in utts {
        let v = lexicon.utterance_mean_vad(&u.tokens)?.to_array();
        for c in 0..3 {
            acc[c] += v[c];
        }
    }
    let n = utts.len() as f64;
    Ok(acc.map(|x| x / n))
}

/// User utterances among the final `⌈n/2⌉` positions.
pub fn last_half_user(dialog: &Dialog) -> Vec<&Utterance> {
    let n = dialog.len();
    dialog.utterances[n / 2..].iter().filter(|u| u.speaker == Speaker::User).collect()
}

/// Agent utterances among the first `⌊n/2⌋` positions.
pub fn first_half_agent(dialog: &Dialog) -> Vec<&Utterance> {
    let n = dialog.len();
    dialog.utterances[..n / 2].iter().filter(|u| u.speaker == Speaker::Agent).collect()
}

/// Mean VAD of the last-half user utterances minus `baseline`, summed over
/// the three components.
pub fn peg_score(dialog: &Dialog, lexicon: &VadLexicon, baseline: VadVector) -> Result<f64> {
    let users = last_half_user(dialog);
    if users.is_empty() {
        return Err(Error::Metric(format!("dialog {}: no user utterance in the last half", dialog.source_id)));
    }
    let m = mean_vad(&users, lexicon)?;
    let b = baseline.to_array();
    Ok((0..3).map(|c| m[c] - b[c]).sum())
}

/// Negative L1 distance between the mean VAD of `u_1` and the mean over
/// first-half agent utterances.
pub fn e_score(dialog: &Dialog, lexicon: &VadLexicon) -> Result<f64> {
    let agents = first_half_agent(dialog);
    let Some(u1) = dialog.first() else {
        return Err(Error::Metric(format!("dialog {} is empty", dialog.source_id)));
    };
    if agents.is_empty() {
        return Err(Error::Metric(format!("dialog {}: no agent utterance in the first half", dialog.source_id)));
    }
    let u = lexicon.utterance_mean_vad(&u1.tokens)?.to_array();
    let a = mean_vad(&agents, lexicon)?;
    Ok(-(0..3).map(|c| (u[c] - a[c]).abs()).sum::<f64>())
}

pub fn pege_score(peg: f64, e: f64) -> f64 {
    peg + e
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> impl Iterator<Item = Vec<&str>> {
    tokens.windows(n).map(|w| w.iter().map(|s| s.as_ref()).collect())
}

fn check_n(n: usize) -> Result<()> {
    if !(1..=2).contains(&n) {
        return Err(Error::Metric(format!("n must be 1 or 2, got {n}")));
    }
    Ok(())
}

/// Corpus-level BLEU with uniform weights over orders `1..=n`, clipped
/// counts and the brevity penalty, as a percentage.
pub fn bleu<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>], n: usize) -> Result<f64> {
    check_n(n)?;
    if candidates.is_empty() || references.is_empty() {
        return Err(Error::Metric("BLEU needs non-empty candidate and reference lists".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Metric(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    let cand_len: usize = candidates.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let (mut matched, mut total) = (0usize, 0usize);
        for (c, r) in candidates.iter().zip(references) {
            let mut ref_counts: HashMap<Vec<&str>, usize> = HashMap::new();
            for g in ngrams(r, k) {
                *ref_counts.entry(g).or_default() += 1;
            }
            let mut cand_counts: HashMap<Vec<&str>, usize> = HashMap::new();
            for g in ngrams(c, k) {
                *cand_counts.entry(g).or_default() += 1;
                total += 1;
            }
            matched += cand_counts.iter().map(|(g, &cnt)| cnt.min(ref_counts.get(g).copied().unwrap_or(0))).sum::<usize>();
        }
        if matched == 0 || total == 0 {
            return Ok(0.0);
        }
        log_sum += (matched as f64 / total as f64).ln() / n as f64;
    }
    let bp = if cand_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / cand_len as f64).exp() };
    Ok(100.0 * bp * log_sum.exp())
}

/// Distinct n-grams over total n-grams, counted within utterances.
pub fn distinct_n<S: AsRef<str>>(utterances: &[Vec<S>], n: usize) -> Result<f64> {
    check_n(n)?;
    let mut seen = HashSet::new();
    let mut total = 0usize;
    for u in utterances {
        for g in ngrams(u, n) {
            seen.insert(g);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Metric(format!("no {n}-grams to count")));
    }
    Ok(seen.len() as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogScores {
    pub source_id: String,
    pub peg: f64,
    pub e: f64,
    pub pege: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDialog {
    pub source_id: String,
    pub reason: String,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    pub fn of(xs: &[f64]) -> Spread {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        Spread { mean, std }
    }

    /// Standard error of the mean for `n` samples.
    pub fn std_error(&self, n: usize) -> f64 {
        self.std / (n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub peg_score: f64,
    pub e_score: f64,
    pub pege_score: f64,
    pub peg_spread: Spread,
    pub e_spread: Spread,
    pub pege_spread: Spread,
    /// Present only when references were supplied.
    pub bleu1: Option<f64>,
    pub bleu2: Option<f64>,
    /// Over all agent utterances; absent when there are no n-grams.
    pub distinct1: Option<f64>,
    pub distinct2: Option<f64>,
    pub num_dialogs: usize,
    pub dialogs: Vec<DialogScores>,
    pub skipped: Vec<SkippedDialog>,
}

fn agent_tokens(dialogs: &[Dialog]) -> Vec<Vec<String>> {
    dialogs
        .iter()
        .flat_map(|d| d.utterances.iter().filter(|u| u.speaker == Speaker::Agent).map(|u| u.tokens.clone()))
        .collect()
}

fn score_dialog(d: &Dialog, lexicon: &VadLexicon, baseline: VadVector) -> Result<DialogScores> {
    let peg = peg_score(d, lexicon, baseline)?;
    let e = e_score(d, lexicon)?;
    Ok(DialogScores { source_id: d.source_id.clone(), peg, e, pege: pege_score(peg, e) })
}

/// Per-dialog PEG/E/PEGE averaged over dialogs; dialogs failing a metric
/// precondition are listed in `skipped`. With `references`, agent
/// utterances are paired in order for BLEU.
pub fn evaluate_run(
    dialogs: &[Dialog],
    lexicon: &VadLexicon,
    baseline: VadVector,
    references: Option<&[Dialog]>,
) -> Result<MetricsReport> {
    if dialogs.is_empty() {
        return Err(Error::Metric("no dialogs to evaluate".into()));
    }
    let mut scored = Vec::new();
    let mut skipped = Vec::new();
    for d in dialogs {
        match score_dialog(d, lexicon, baseline) {
            Ok(s) => scored.push(s),
            Err(e) => skipped.push(SkippedDialog { source_id: d.source_id.clone(), reason: e.to_string() }),
        }
    }
    if scored.is_empty() {
        return Err(Error::Metric(format!("all {} dialogs failed metric preconditions", dialogs.len())));
    }
    let col = |f: fn(&DialogScores) -> f64| scored.iter().map(f).collect::<Vec<f64>>();
    let peg_spread = Spread::of(&col(|s| s.peg));
    let e_spread = Spread::of(&col(|s| s.e));
    let pege_spread = Spread::of(&col(|s| s.pege));

    let cands = agent_tokens(dialogs);
    let (bleu1, bleu2) = match references {
        Some(refs) => {
            let refs = agent_tokens(refs);
            (Some(bleu(&cands, &refs, 1)?), Some(bleu(&cands, &refs, 2)?))
        }
        None => (None, None),
    };
    Ok(MetricsReport {
        peg_score: peg_spread.mean,
        e_score: e_spread.mean,
        pege_score: pege_score(peg_spread.mean, e_spread.mean),
        peg_spread,
        e_spread,
        pege_spread,
        bleu1,
        bleu2,
        distinct1: distinct_n(&cands, 1).ok(),
        distinct2: distinct_n(&cands, 2).ok(),
        num_dialogs: scored.len(),
        dialogs: scored,
        skipped,
    })
}
