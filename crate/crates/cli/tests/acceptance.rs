//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the lines always reach the terminal.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pege_core::classifier::{PolarityDistribution, PolarityModel};
use pege_core::config::{encode_corpus, Resources, ResolvedConfig, Role, RunConfig};
use pege_core::corpus::{filter_dialogs, parse_jsonl, synthesize_corpus, Dialog, FilterRules};
use pege_core::eval::{bleu, distinct_n, e_score, evaluate_run, peg_score, pege_score, self_chat, MetricsReport};
use pege_core::gradcheck::{finite_diff_check, run_suite};
use pege_core::lexicon::{VadLexicon, VadMatrix, VadVector};
use pege_core::model::encode::EncodedExample;
use pege_core::model::train::{mean_nll, train, Ablation, TrainOutput};
use pege_core::model::{init_model, Model};
use pege_core::objective::{
    dialog_progress, emotional_distance, ner_loss, nll_loss, peg_loss, pege_loss, LogitsSequence, PegeConfig,
    TokenDistribution,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    if (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {a}, expected {b} (tol {tol:e})"))
    }
}

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn no_env(_: &str) -> Option<String> {
    None
}

fn load(path: &Path) -> (ResolvedConfig, Resources) {
    let doc = RunConfig::load(path).expect("config parses");
    doc.resolve(path.parent().unwrap(), &no_env).expect("config resolves")
}

fn matrix(rows: &[[f64; 3]]) -> VadMatrix {
    VadMatrix::from_rows(rows.iter().map(|r| VadVector::from_array(*r)).collect()).unwrap()
}

fn gradient_fidelity() -> Outcome {
    let config = PegeConfig::default();
    ensure!(config.alpha == 5.0 && config.beta == 2.0, "default weights are {} / {}", config.alpha, config.beta);
    let start = Instant::now();
    let report = run_suite(20240601, 10, 4, 16, &config, 1e-5).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(report.cases == 10, "{} cases", report.cases);
    ensure!(report.max_relative_error <= 1e-4, "max relative error {:.3e}", report.max_relative_error);
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("max relative error {:.2e} in {elapsed:.2?}", report.max_relative_error))
}

fn loss_oracles() -> Outcome {
    let tol = 1e-9;
    let point = |p: &[f64]| TokenDistribution::new(p.to_vec()).unwrap();
    let m = |r: &[[f64; 3]]| matrix(r);

    let ed = |u: [f64; 3], p: &[f64], rows: &[[f64; 3]]| {
        emotional_distance(VadVector::from_array(u), &point(p), &m(rows)).unwrap()
    };
    close(ed([0.2, 0.3, 0.4], &[1.0, 0.0], &[[0.6, 0.3, 0.4], [0.0, 0.0, 0.0]]), 0.4, tol, "ED point mass")?;
    close(ed([0.6, 0.3, 0.4], &[1.0], &[[0.6, 0.3, 0.4]]), 0.0, tol, "ED identity")?;
    close(ed([0.0; 3], &[0.5, 0.5], &[[1.0; 3], [0.0; 3]]), 0.75f64.sqrt(), tol, "ED uniform")?;

    close(dialog_progress(0, 7), 1.0, tol, "f(0)")?;
    close(dialog_progress(7, 7), -1.0, tol, "f(7)")?;
    close(dialog_progress(1, 7), 0.900968867902419, tol, "f(1)")?;

    close(peg_loss(1.0, &[0.1, 0.3], -0.3), 0.4, tol, "peg p_pos=1")?;
    close(peg_loss(0.0, &[0.2, 0.2], -1.0), -0.4, tol, "peg p_pos=0")?;
    close(peg_loss(0.5, &[0.4], 0.5), 0.3, tol, "peg mixed")?;

    let rows = m(&[[0.3, 0.4, 0.0], [0.0, 0.0, 1.0]]);
    close(ner_loss(1.0, &[point(&[1.0, 0.0])], &rows).unwrap(), 0.5, tol, "ner 3-4-5")?;
    close(ner_loss(0.0, &[point(&[0.3, 0.7]), point(&[1.0, 0.0])], &rows).unwrap(), 0.0, tol, "ner p_neg=0")?;
    close(ner_loss(0.5, &[point(&[0.0, 1.0]), point(&[0.0, 1.0])], &rows).unwrap(), 1.0, tol, "ner two steps")?;

    let mut peaked = vec![0.0; 8];
    peaked[3] = 50.0;
    let peaked = LogitsSequence::from_rows(&[peaked.clone(), peaked]).unwrap();
    close(nll_loss(&peaked, &[3, 3]).unwrap(), 0.0, tol, "nll point mass")?;
    let uniform1 = LogitsSequence::from_rows(&[vec![0.0; 8]]).unwrap();
    close(nll_loss(&uniform1, &[5]).unwrap(), 8f64.ln(), tol, "nll uniform T=1")?;
    close(nll_loss(&uniform1, &[5]).unwrap(), 2.0794415416798357, tol, "ln 8")?;
    let uniform2 = LogitsSequence::from_rows(&[vec![0.0; 8], vec![0.0; 8]]).unwrap();
    close(nll_loss(&uniform2, &[1, 6]).unwrap(), 4.1588830833596715, tol, "nll uniform T=2")?;

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let case = random_case(&mut rng, 3, 8);
    let full = PegeConfig::default();
    let off = pege_loss(&case.logits, &case.target, case.u1, case.polarity, case.turns, &case.matrix, &full.with_weights(0.0, 0.0))
        .unwrap();
    ensure!(off.total == nll_loss(&case.logits, &case.target).unwrap(), "alpha=beta=0 total {} != nll", off.total);
    let certain = PolarityDistribution::new(1.0, 0.0, 0.0).unwrap();
    let out = pege_loss(&case.logits, &case.target, case.u1, certain, case.turns, &case.matrix, &full).unwrap();
    let eds: f64 = (0..3)
        .map(|t| emotional_distance(case.u1, &TokenDistribution::softmax(case.logits.row(t)), &case.matrix).unwrap())
        .sum();
    close(out.total, out.nll + 5.0 * eds, tol, "p_pos=1 total")?;
    let out = pege_loss(&case.logits, &case.target, case.u1, case.polarity, case.turns, &case.matrix, &full).unwrap();
    let loss_at = |l: &LogitsSequence| {
        pege_loss(l, &case.target, case.u1, case.polarity, case.turns, &case.matrix, &full).map(|b| b.total)
    };
    let fd = finite_diff_check(loss_at, &case.logits, &out.grad_logits, 1e-5).unwrap();
    ensure!(fd <= 1e-4, "|V|=8 T=3 finite differences: {fd:.3e}");

    let quad = LogitsSequence::new(1, 3, vec![0.4, -1.2, 2.5]).unwrap();
    let q = |l: &LogitsSequence| Ok(l.as_slice().iter().map(|x| 1.5 * x * x).sum());
    let exact: Vec<f64> = quad.as_slice().iter().map(|x| 3.0 * x).collect();
    let err = finite_diff_check(q, &quad, &exact, 1e-5).unwrap();
    ensure!(err <= 1e-9, "quadratic finite differences: {err:e}");
    let mut corrupted = out.grad_logits.clone();
    corrupted[4] += 0.1;
    let bad = finite_diff_check(loss_at, &case.logits, &corrupted, 1e-5).unwrap();
    ensure!(bad > 1e-2, "corrupted gradient not flagged: {bad:e}");

    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let steps = rng.gen_range(1..=6);
        let vocab = rng.gen_range(2..=20);
        let c = random_case(&mut rng, steps, vocab);
        let b = pege_loss(&c.logits, &c.target, c.u1, c.polarity, c.turns, &c.matrix, &full).unwrap();
        worst = worst.max((b.total - (b.nll + 5.0 * b.peg - 2.0 * b.ner)).abs());
        let dists: Vec<TokenDistribution> = (0..steps).map(|t| TokenDistribution::softmax(c.logits.row(t))).collect();
        let eds: Vec<f64> = dists.iter().map(|d| emotional_distance(c.u1, d, &c.matrix).unwrap()).collect();
        let progress = dialog_progress(c.turns, 7);
        worst = worst.max((b.peg - peg_loss(c.polarity.p_pos, &eds, progress)).abs());
        worst = worst.max((b.ner - ner_loss(c.polarity.p_neg, &dists, &c.matrix).unwrap()).abs());
        worst = worst.max((b.nll - nll_loss(&c.logits, &c.target).unwrap()).abs());
    }
    ensure!(worst <= 1e-9, "composite identity off by {worst:e}");
    Ok(format!("all examples within 1e-9; composite identity max deviation {worst:.1e} over 1000 inputs"))
}

struct Case {
    logits: LogitsSequence,
    target: Vec<usize>,
    u1: VadVector,
    polarity: PolarityDistribution,
    turns: u32,
    matrix: VadMatrix,
}

fn random_case(rng: &mut ChaCha8Rng, steps: usize, vocab: usize) -> Case {
    let data = (0..steps * vocab).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let rows: Vec<[f64; 3]> = (0..vocab).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let w: [f64; 3] = [rng.gen::<f64>() + 1e-3, rng.gen::<f64>() + 1e-3, rng.gen::<f64>() + 1e-3];
    let s: f64 = w.iter().sum();
    Case {
        logits: LogitsSequence::new(steps, vocab, data).unwrap(),
        target: (0..steps).map(|_| rng.gen_range(0..vocab)).collect(),
        u1: VadVector::from_array([rng.gen(), rng.gen(), rng.gen()]),
        polarity: PolarityDistribution::new(w[0] / s, w[1] / s, 1.0 - w[0] / s - w[1] / s).unwrap(),
        turns: rng.gen_range(0..12),
        matrix: matrix(&rows),
    }
}

fn progress_contract() -> Outcome {
    let f: Vec<f64> = (0..=7).map(|c| dialog_progress(c, 7)).collect();
    close(f[0], 1.0, 1e-12, "f(0)")?;
    close(f[7], -1.0, 1e-12, "f(7)")?;
    for (c, v) in f.iter().enumerate() {
        close(*v, (PI * c as f64 / 7.0).cos(), 1e-12, &format!("f({c})"))?;
    }
    ensure!(f.windows(2).all(|w| w[1] < w[0]), "not strictly decreasing: {f:?}");
    Ok("f(0)=1, f(7)=-1, strictly decreasing over 0..7".into())
}

fn mini_lexicon() -> VadLexicon {
    VadLexicon::from_records(
        [
            ("joy", 0.9, 0.7, 0.6),
            ("glad", 0.7, 0.5, 0.4),
            ("low", 0.3, 0.4, 0.5),
            ("tilt", 0.5, 0.4, 0.3),
            ("grim", 0.1, 0.8, 0.2),
            ("calm", 0.6, 0.2, 0.55),
            ("zero", 0.0, 0.0, 0.0),
            ("one", 1.0, 1.0, 1.0),
        ],
        VadVector::NEUTRAL,
    )
    .unwrap()
}

/// Direct recomputation: each word looked up, averaged per utterance, then
/// over the qualifying utterances.
fn brute_force(texts: &[&str], lex: &VadLexicon) -> (f64, f64) {
    let n = texts.len();
    let utt_mean = |t: &str| {
        let words: Vec<&str> = t.split_whitespace().collect();
        let mut acc = [0.0; 3];
        for w in &words {
            let v = lex.lookup(w);
            acc[0] += v.valence;
            acc[1] += v.arousal;
            acc[2] += v.dominance;
        }
        acc.map(|x| x / words.len() as f64)
    };
    let average = |idx: Vec<usize>| {
        let mut acc = [0.0; 3];
        for &i in &idx {
            let m = utt_mean(texts[i]);
            for c in 0..3 {
                acc[c] += m[c];
            }
        }
        acc.map(|x| x / idx.len() as f64)
    };
    let tail = n - n.div_ceil(2);
    let users: Vec<usize> = (tail..n).filter(|i| i % 2 == 0).collect();
    let agents: Vec<usize> = (0..n / 2).filter(|i| i % 2 == 1).collect();
    let u = average(users);
    let peg = (u[0] - 0.5) + (u[1] - 0.5) + (u[2] - 0.5);
    let a = average(agents);
    let u1 = utt_mean(texts[0]);
    let e = -((u1[0] - a[0]).abs() + (u1[1] - a[1]).abs() + (u1[2] - a[2]).abs());
    (peg, e)
}

fn metric_oracles() -> Outcome {
    let lex = mini_lexicon();
    let dialogs: [&[&str]; 5] = [
        &["calm", "calm", "joy glad", "calm"],
        &["low", "tilt", "grim", "calm glad"],
        &["grim grim low", "grim calm", "low", "calm joy", "glad joy", "joy"],
        &["zero", "one", "one", "tilt", "one one", "grim", "one"],
        &["low tilt", "grim", "unlisted grim", "joy", "calm", "glad glad", "unlisted", "joy one"],
    ];
    let mut scores = Vec::new();
    for (i, texts) in dialogs.iter().enumerate() {
        let d = Dialog::from_texts(format!("mini-{i}"), texts).unwrap();
        let peg = peg_score(&d, &lex, VadVector::NEUTRAL).map_err(|e| e.to_string())?;
        let e = e_score(&d, &lex).map_err(|e| e.to_string())?;
        let (bp, be) = brute_force(texts, &lex);
        close(peg, bp, 1e-12, &format!("PEG of mini-{i}"))?;
        close(e, be, 1e-12, &format!("E of mini-{i}"))?;
        close(pege_score(peg, e), bp + be, 1e-12, &format!("PEGE of mini-{i}"))?;
        scores.push((peg, e));
    }
    close(scores[0].0, 0.4, 1e-12, "PEG hand example")?;
    close(scores[1].1, -0.4, 1e-12, "E hand example")?;
    ensure!(pege_score(0.160, -0.126) == 0.034, "pege_score(0.160, -0.126) = {}", pege_score(0.160, -0.126));
    ensure!(pege_score(0.090, -0.185) == -0.095, "pege_score(0.090, -0.185) = {}", pege_score(0.090, -0.185));
    Ok("5 mini-dialogs match the brute-force loop; pege_score sums reproduce 0.034 and -0.095 exactly".into())
}

/// Returns fixed polarity triples keyed by the utterance text.
struct Stub(HashMap<String, PolarityDistribution>);

impl PolarityModel for Stub {
    fn classify(&self, tokens: &[String]) -> pege_core::Result<PolarityDistribution> {
        Ok(self.0.get(&tokens.join(" ")).copied().unwrap_or(PolarityDistribution::new(0.95, 0.03, 0.02).unwrap()))
    }
}

fn pipeline_fixture() -> Outcome {
    let (cfg, res) = load(&manifest("tests/fixtures/filter/config.toml"));
    let text = std::fs::read_to_string(manifest("tests/fixtures/filter/corpus.jsonl")).unwrap();
    let (_, raw) = parse_jsonl(&text).map_err(|e| e.to_string())?;
    ensure!(raw.len() == 12, "fixture has {} dialogs", raw.len());
    let clf = res.classifier(cfg.classifier);
    let out = filter_dialogs(&raw, &clf, &res.filter).map_err(|e| e.to_string())?;
    ensure!(out.retained.len() == 6, "{} retained", out.retained.len());
    ensure!(out.rejections.as_array() == [1; 6], "rejection counts {:?}", out.rejections.as_array());
    for (id, rule) in &out.rejected {
        ensure!(id.ends_with(rule.key()), "{id} rejected by {}", rule.key());
    }
    let again = filter_dialogs(&out.retained, &clf, &res.filter).map_err(|e| e.to_string())?;
    ensure!(again.retained == out.retained && again.rejections.total() == 0, "filter is not idempotent");

    let p = |a: f64, b: f64, c: f64| PolarityDistribution::new(a, b, c).unwrap();
    let stub = Stub(HashMap::from([
        ("first at".to_string(), p(0.5, 0.25, 0.25)),
        ("first above".to_string(), p(0.500001, 0.25, 0.249999)),
        ("last at".to_string(), p(0.9, 0.05, 0.05)),
        ("last above".to_string(), p(0.900001, 0.05, 0.049999)),
    ]));
    let rules = FilterRules::with_default_lists();
    let verdict = |texts: [&str; 3]| {
        let d = Dialog::from_texts("boundary", &texts).unwrap();
        rules.first_failure(&d, &stub).unwrap().map(|r| r.key())
    };
    ensure!(verdict(["first at", "ok", "fine"]) == Some("rule2"), "max prob 0.5 is not rejected");
    ensure!(verdict(["first above", "ok", "fine"]).is_none(), "max prob just above 0.5 is rejected");
    ensure!(verdict(["fine", "ok", "last at"]) == Some("rule3"), "p_pos 0.9 is not rejected");
    ensure!(verdict(["fine", "ok", "last above"]).is_none(), "p_pos just above 0.9 is rejected");
    Ok("6 of 12 retained, one rejection per rule, idempotent, 0.5 and 0.9 rejected at the boundary".into())
}

struct Experiment {
    config: ResolvedConfig,
    resources: Resources,
    nll_only: TrainOutput,
    nll_only_time: Duration,
}

fn encoded(dialogs: &[Dialog], role: Role, cfg: &ResolvedConfig, res: &Resources) -> Vec<EncodedExample> {
    encode_corpus(dialogs, role, cfg, res).expect("corpus encodes").examples
}

fn run_training(cfg: &ResolvedConfig, res: &Resources, examples: &[EncodedExample], ablation: Ablation) -> TrainOutput {
    let model = init_model(cfg.model).expect("model initializes");
    train(model, examples, &res.matrix, &cfg.pege, ablation, &cfg.train, 1).expect("training succeeds")
}

fn training_sanity(slot: &mut Option<Experiment>) -> Outcome {
    let start = Instant::now();
    let (cfg, res) = load(&manifest("../../configs/experiment.toml"));
    ensure!(cfg.synth.num_dialogs == 2000, "{} dialogs", cfg.synth.num_dialogs);
    ensure!(cfg.train.max_steps == 2000, "{} steps", cfg.train.max_steps);
    let corpus = synthesize_corpus(&cfg.synth, cfg.seed).map_err(|e| e.to_string())?;
    let held_out = synthesize_corpus(&cfg.synth, cfg.seed + 1000).map_err(|e| e.to_string())?;
    let examples = encoded(&corpus, Role::Agent, &cfg, &res);
    let held: Vec<EncodedExample> = encoded(&held_out, Role::Agent, &cfg, &res).into_iter().take(500).collect();

    let init: Model = init_model(cfg.model).unwrap();
    let before = mean_nll(&init, &held).map_err(|e| e.to_string())?;
    let first = run_training(&cfg, &res, &examples, Ablation::NllOnly);
    let one_run = start.elapsed();
    let second = run_training(&cfg, &res, &examples, Ablation::NllOnly);
    let after = mean_nll(&first.model, &held).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let drop = 1.0 - after / before;

    ensure!(first.log.len() == 2000, "{} log rows", first.log.len());
    ensure!(first.log == second.log, "loss logs differ between identical runs");
    ensure!(first.model.checksum() == second.model.checksum(), "parameters differ between identical runs");
    ensure!(drop >= 0.30, "held-out NLL {before:.4} -> {after:.4} is a {:.1}% drop", 100.0 * drop);
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    let detail = format!(
        "held-out NLL {before:.3} -> {after:.3} ({:.1}% drop), logs identical, {elapsed:.1?} for two runs",
        100.0 * drop
    );
    *slot = Some(Experiment { config: cfg, resources: res, nll_only: first, nll_only_time: one_run });
    Ok(detail)
}

fn ablation_direction(exp: Option<&Experiment>) -> Outcome {
    let exp = exp.ok_or("needs the trained nll_only agent")?;
    let (cfg, res) = (&exp.config, &exp.resources);
    let start = Instant::now();
    let corpus = synthesize_corpus(&cfg.synth, cfg.seed).map_err(|e| e.to_string())?;
    let user = run_training(cfg, res, &encoded(&corpus, Role::General, cfg, res), Ablation::NllOnly);
    let full = run_training(cfg, res, &encoded(&corpus, Role::Agent, cfg, res), Ablation::Full);

    ensure!(res.seeds.len() == 100, "{} seed utterances", res.seeds.len());
    let clf = res.classifier(cfg.classifier);
    let sc = cfg.selfchat_config(res.seeds.clone());
    ensure!(sc.turns == 10, "{} turns", sc.turns);
    let score = |agent: &Model| -> Result<MetricsReport, String> {
        let dialogs = self_chat(agent, &user.model, &res.vocab, &clf, &sc, false).map_err(|e| e.to_string())?;
        evaluate_run(&dialogs, &res.lexicon, cfg.pege.peg_baseline, None).map_err(|e| e.to_string())
    };
    let a = score(&full.model)?;
    let b = score(&exp.nll_only.model)?;
    let elapsed = start.elapsed() + exp.nll_only_time;

    let se = |x: &MetricsReport, y: &MetricsReport, f: fn(&MetricsReport) -> f64| {
        (f(x).powi(2) + f(y).powi(2)).sqrt()
    };
    let peg_se = se(&a, &b, |r| r.peg_spread.std_error(r.num_dialogs));
    let pege_se = se(&a, &b, |r| r.pege_spread.std_error(r.num_dialogs));
    let detail = format!(
        "PEG {:.4} vs {:.4} (SE {:.4}), PEGE {:.4} vs {:.4} (SE {:.4}), {elapsed:.0?}",
        a.peg_score, b.peg_score, peg_se, a.pege_score, b.pege_score, pege_se
    );
    ensure!(a.skipped.is_empty() && b.skipped.is_empty(), "skipped dialogs; {detail}");
    ensure!(a.peg_score - b.peg_score > peg_se, "PEG gap within one SE; {detail}");
    ensure!(a.pege_score - b.pege_score > pege_se, "PEGE gap within one SE; {detail}");
    ensure!(elapsed < Duration::from_secs(1200), "too slow; {detail}");
    Ok(detail)
}

fn bleu_distinct() -> Outcome {
    let toks = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    let cands = vec![toks("i feel much better now"), toks("that is good news"), toks("thank you")];
    for n in [1, 2] {
        let b = bleu(&cands, &cands, n).map_err(|e| e.to_string())?;
        close(b, 100.0, 1e-9, &format!("BLEU-{n} of identical lists"))?;
    }
    close(bleu(&[toks("a b c")], &[toks("a b d")], 1).unwrap(), 200.0 / 3.0, 1e-9, "BLEU-1 of a b c / a b d")?;
    let d = |s: &str, n| distinct_n(&[toks(s)], n).unwrap();
    ensure!(d("a b c d", 1) == 1.0, "distinct-1 of unique tokens is {}", d("a b c d", 1));
    ensure!(d("a a a a", 1) == 0.25, "distinct-1 of a a a a is {}", d("a a a a", 1));
    ensure!(d("a b a b", 2) == 2.0 / 3.0, "distinct-2 of a b a b is {}", d("a b a b", 2));
    Ok("BLEU-1 = BLEU-2 = 100 on identical lists; distinct 1, 1/4, 2/3".into())
}

fn pege(dir: &Path, args: &[&str], env: &[(&str, &Path)]) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pege"));
    cmd.current_dir(dir).args(args).arg("--threads").arg("1");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "pege {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    Ok(())
}

fn cli_run(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    // A copy next to the outputs keeps every resolved path, and so the
    // config hash, independent of the directory.
    std::fs::copy(manifest("tests/fixtures/small.toml"), dir.join("small.toml")).map_err(|e| e.to_string())?;
    let config = "small.toml";
    pege(dir, &["synth", config, "-o", "corpus.jsonl"], &[])?;
    let env = [("PEGE_PATH_CORPUS", Path::new("corpus.jsonl"))];
    pege(dir, &["train", config, "--ablation", "full", "-o", "agent.ckpt", "--log", "agent.tsv"], &env)?;
    pege(dir, &["train", config, "--ablation", "nll_only", "--role", "general", "-o", "user.ckpt"], &env)?;
    pege(dir, &["selfchat", "agent.ckpt", "user.ckpt", config, "-o", "chat.jsonl"], &[])?;
    pege(dir, &["eval", "chat.jsonl", config, "-o", "report.json"], &[])?;
    ["corpus.jsonl", "agent.ckpt", "agent.tsv", "user.ckpt", "chat.jsonl", "report.json"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).map(|b| (f.to_string(), b)).map_err(|e| format!("{f}: {e}")))
        .collect()
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = cli_run(a.path())?;
    let second = cli_run(b.path())?;
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        ensure!(!x.is_empty(), "{name} is empty");
        ensure!(x == y, "{name} differs between runs");
    }
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    Ok(format!("synth, train, selfchat, eval outputs byte-identical: {}", names.join(", ")))
}

fn report(n: usize, name: &str, result: std::thread::Result<Outcome>) -> bool {
    let (ok, detail) = match result {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(p) => (false, format!("panicked: {}", p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())),
    };
    println!("criterion {n} ({name}): {} - {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn main() {
    // Accept and ignore libtest arguments such as `--nocapture`.
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| filter.is_empty() || filter.contains(&n);
    let mut experiment = None;
    let mut failed = 0;
    let mut check = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if wanted(n) && !report(n, name, catch_unwind(AssertUnwindSafe(f))) {
            failed += 1;
        }
    };
    check(1, "gradient fidelity", &mut gradient_fidelity);
    check(2, "loss-component oracles", &mut loss_oracles);
    check(3, "progress function", &mut progress_contract);
    check(4, "metric oracles", &mut metric_oracles);
    check(5, "pipeline fixture", &mut pipeline_fixture);
    check(6, "training sanity", &mut || training_sanity(&mut experiment));
    check(7, "ablation direction", &mut || ablation_direction(experiment.as_ref()));
    check(8, "BLEU and Distinct", &mut bleu_distinct);
    check(9, "determinism", &mut determinism);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
