//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::PolarityDistribution;
use crate::error::{Error, Result};
use crate::lexicon::{VadMatrix, VadVector};
use crate::objective::{pege_loss, LogitsSequence, PegeConfig};

/// Max relative error between `grad` and central differences of `loss_at`.
/// The denominator is `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check<F>(mut loss_at: F, point: &LogitsSequence, grad: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&LogitsSequence) -> Result<f64>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidConfig(format!("eps must be > 0, got {eps}")));
    }
    if grad.len() != point.as_slice().len() {
        return Err(Error::DimensionMismatch(format!(
            "gradient has {} entries, point has {}",
            grad.len(),
            point.as_slice().len()
        )));
    }
    let mut probe = point.clone();
    let mut worst = 0.0f64;
    for (i, &analytic) in grad.iter().enumerate() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + eps;
        let plus = loss_at(&probe)?;
        probe.as_mut_slice()[i] = orig - eps;
        let minus = loss_at(&probe)?;
        probe.as_mut_slice()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss at perturbed coordinate {i}")));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(worst)
}

/// One randomized composite-loss problem.
#[derive(Debug, Clone)]
pub struct GradCase {
    pub logits: LogitsSequence,
    pub target: Vec<usize>,
    pub u1_mean: VadVector,
    pub polarity: PolarityDistribution,
    pub context_turns: u32,
    pub matrix: VadMatrix,
}

impl GradCase {
    /// Logits in `[-3, 3]`, VAD rows and ū₁ uniform in the cube, a random
    /// polarity triple and a context length in `0..=9`.
    pub fn random(rng: &mut impl Rng, max_steps: usize, max_vocab: usize) -> Self {
        let steps = rng.gen_range(1..=max_steps);
        let vocab = rng.gen_range(2..=max_vocab);
        let data = (0..steps * vocab).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let logits = LogitsSequence::new(steps, vocab, data).expect("shape");
        let target = (0..steps).map(|_| rng.gen_range(0..vocab)).collect();
        let rows = (0..vocab)
            .map(|_| VadVector::from_array([rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()]))
            .collect();
        let matrix = VadMatrix::from_rows(rows).expect("rows in cube");
        let u1_mean = VadVector::from_array([rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()]);
        let raw = [rng.gen::<f64>() + 1e-3, rng.gen::<f64>() + 1e-3, rng.gen::<f64>() + 1e-3];
        let sum: f64 = raw.iter().sum();
        let p_pos = raw[0] / sum;
        let p_neg = raw[1] / sum;
        let polarity = PolarityDistribution { p_pos, p_neg, p_neu: 1.0 - p_pos - p_neg };
        let context_turns = rng.gen_range(0..=9);
        GradCase { logits, target, u1_mean, polarity, context_turns, matrix }
    }

    pub fn max_relative_error(&self, config: &PegeConfig, eps: f64) -> Result<f64> {
        let run = |l: &LogitsSequence| {
            pege_loss(l, &self.target, self.u1_mean, self.polarity, self.context_turns, &self.matrix, config)
        };
        let analytic = run(&self.logits)?;
        finite_diff_check(|l| run(l).map(|b| b.total), &self.logits, &analytic.grad_logits, eps)
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub cases: usize,
    pub per_case: Vec<f64>,
    pub max_relative_error: f64,
}

/// Runs `cases` random problems (T ≤ `max_steps`, |V| ≤ `max_vocab`) and
/// reports the worst relative error.
pub fn run_suite(
    seed: u64,
    cases: usize,
    max_steps: usize,
    max_vocab: usize,
    config: &PegeConfig,
    eps: f64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_case = Vec::with_capacity(cases);
    for _ in 0..cases {
        let case = GradCase::random(&mut rng, max_steps, max_vocab);
        per_case.push(case.max_relative_error(config, eps)?);
    }
    let max_relative_error = per_case.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport { cases, per_case, max_relative_error })
}
