use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use pege_core::config::{encode_corpus, Resources, ResolvedConfig, Role, RunConfig};
use pege_core::corpus::{corpus_stats, filter_dialogs, read_jsonl, synthesize_corpus, write_jsonl, Dialog, FileMeta};
use pege_core::eval::{evaluate_run, self_chat};
use pege_core::gradcheck::run_suite;
use pege_core::lexicon::{VadLexicon, VadVector};
use pege_core::model::train::{log_to_tsv, mean_nll, train, Ablation};
use pege_core::model::{checkpoint, init_model};
use pege_core::text::Vocab;
use pege_core::Error;

#[derive(Parser)]
#[command(name = "pege", version, about = "Emotion-guided dialog pipeline: synthesize, filter, train, self-chat, evaluate")]
struct Cli {
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (outputs do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lexicon inspection.
    Lexicon {
        #[command(subcommand)]
        action: LexiconAction,
    },
    /// Generate a synthetic corpus.
    Synth {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Apply the six filtering rules to a corpus.
    Filter {
        corpus: PathBuf,
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Train a model and write a checkpoint.
    Train {
        config: PathBuf,
        #[arg(long, default_value = "full")]
        ablation: Ablation,
        #[arg(long, default_value = "agent")]
        role: Role,
        #[arg(short, long)]
        output: PathBuf,
        /// Per-step loss log as TSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Finite-difference check of the composite loss gradient.
    Gradcheck { config: PathBuf },
    /// Run agent-user self-chat over the seed utterances.
    Selfchat {
        agent: PathBuf,
        user: PathBuf,
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score dialogs and write a JSON report.
    Eval {
        dialogs: PathBuf,
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Reference dialogs for BLEU, aligned with the agent utterances.
        #[arg(long)]
        references: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LexiconAction {
    /// Coverage of a vocabulary by a lexicon.
    Stats { lexicon: PathBuf, vocab: PathBuf },
}

/// Exit status 2 for a malformed config, 1 for everything else.
enum Failure {
    Config(Error),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CmdResult = Result<(), Failure>;

struct Loaded {
    config: ResolvedConfig,
    resources: Resources,
    hash: String,
    threads: usize,
}

impl Loaded {
    fn meta(&self, kind: &str) -> FileMeta {
        FileMeta { config_hash: self.hash.clone(), seed: self.config.seed, kind: kind.to_string() }
    }
}

fn load_config(path: &Path, cli: &Cli) -> Result<Loaded, Failure> {
    let mut doc = RunConfig::load(path).map_err(|e| match e {
        Error::Io { .. } => Failure::Run(e),
        other => Failure::Config(other),
    })?;
    if cli.seed.is_some() {
        doc.seed = cli.seed;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let env = |k: &str| std::env::var(k).ok();
    let (config, resources) = doc.resolve(&base, &env).map_err(|e| match e {
        Error::InvalidConfig(_) => Failure::Config(e),
        other => Failure::Run(other),
    })?;
    let threads = cli.threads.or(doc.threads).unwrap_or(1).max(1);
    let hash = config.hash();
    eprintln!("seed: {}", config.seed);
    eprintln!("threads: {threads}");
    eprintln!("config_hash: {hash}");
    eprintln!("config: {}", config.to_json());
    Ok(Loaded { config, resources, hash, threads })
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<(), Error> {
    write(path, &(serde_json::to_string_pretty(value).expect("json serializes") + "\n"))
}

fn read_dialogs(path: &Path) -> Result<Vec<Dialog>, Error> {
    Ok(read_jsonl(path)?.1)
}

fn lexicon_stats(lexicon: &Path, vocab: &Path) -> CmdResult {
    let lex = VadLexicon::load(lexicon, VadVector::NEUTRAL)?;
    let vocab = Vocab::load(vocab)?;
    let words: Vec<&str> = (0..vocab.len()).filter(|&i| vocab.is_word(i)).filter_map(|i| vocab.token(i)).collect();
    let cov = lex.coverage(&words);
    let missing: Vec<&str> = words.iter().copied().filter(|w| !lex.contains(w)).collect();
    let report = json!({
        "lexicon_entries": lex.len(),
        "collisions": lex.collisions(),
        "vocab_words": words.len(),
        "listed": cov.listed,
        "defaulted": cov.defaulted,
        "defaulted_fraction": cov.defaulted_fraction(),
        "defaulted_words": missing,
    });
    // A closed stdout (e.g. piped into `head`) is not an error.
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&report).expect("json serializes"));
    Ok(())
}

fn synth(cli: &Cli, config: &Path, output: &Path) -> CmdResult {
    let l = load_config(config, cli)?;
    let corpus = synthesize_corpus(&l.config.synth, l.config.seed)?;
    write_jsonl(output, &corpus, Some(&l.meta("synth")))?;
    eprintln!("wrote {} dialogs to {}", corpus.len(), output.display());
    Ok(())
}

fn filter(cli: &Cli, corpus: &Path, config: &Path, output: &Path, report: &Path) -> CmdResult {
    let l = load_config(config, cli)?;
    let raw = read_dialogs(corpus)?;
    let clf = l.resources.classifier(l.config.classifier);
    let outcome = filter_dialogs(&raw, &clf, &l.resources.filter)?;
    write_jsonl(output, &outcome.retained, Some(&l.meta("filter")))?;
    let rejected: Vec<Value> =
        outcome.rejected.iter().map(|(id, rule)| json!({"source_id": id, "rule": rule.key()})).collect();
    let value = json!({
        "config_hash": l.hash,
        "input": raw.len(),
        "retained": outcome.retained.len(),
        "rejections": outcome.rejections,
        "rejected": rejected,
        "retained_stats": corpus_stats(&outcome.retained, &clf)?,
    });
    write_json(report, &value)?;
    eprintln!("retained {} of {} dialogs", outcome.retained.len(), raw.len());
    Ok(())
}

fn train_cmd(cli: &Cli, config: &Path, ablation: Ablation, role: Role, output: &Path, log: Option<&Path>) -> CmdResult {
    let l = load_config(config, cli)?;
    let dialogs = match l.resources.corpus_path(&l.config) {
        Some(p) => read_dialogs(&p)?,
        None => synthesize_corpus(&l.config.synth, l.config.seed)?,
    };
    let encoded = encode_corpus(&dialogs, role, &l.config, &l.resources)?;
    eprintln!(
        "{} {} examples from {} dialogs ({} without a target); ablation {}",
        encoded.examples.len(),
        role.as_str(),
        dialogs.len(),
        encoded.skipped_dialogs,
        ablation.as_str()
    );
    let model = init_model(l.config.model)?;
    let out = train(model, &encoded.examples, &l.resources.matrix, &l.config.pege, ablation, &l.config.train, l.threads)?;
    if let Some(last) = out.log.last() {
        eprintln!("step {}: nll {:.4} peg {:.4} ner {:.4} total {:.4}", last.step, last.nll, last.peg, last.ner, last.total);
    }
    checkpoint::save(output, &out.model, &l.hash)?;
    if let Some(path) = log {
        write(path, &format!("# config_hash {}\n{}", l.hash, log_to_tsv(&out.log)))?;
    }
    let probe = &encoded.examples[..encoded.examples.len().min(200)];
    eprintln!("mean token nll on the first {} examples: {:.4}", probe.len(), mean_nll(&out.model, probe)?);
    Ok(())
}

fn gradcheck(cli: &Cli, config: &Path) -> Result<bool, Failure> {
    let l = load_config(config, cli)?;
    let g = &l.config.gradcheck;
    let report = run_suite(g.seed, g.cases, g.max_steps, g.max_vocab, &l.config.pege, g.eps)?;
    for (i, e) in report.per_case.iter().enumerate() {
        println!("case {i}: max relative error {e:.3e}");
    }
    println!("max relative error: {:.3e} (tolerance {:.0e})", report.max_relative_error, g.tolerance);
    Ok(report.max_relative_error <= g.tolerance)
}

fn selfchat(cli: &Cli, agent: &Path, user: &Path, config: &Path, output: &Path) -> CmdResult {
    let l = load_config(config, cli)?;
    let agent = checkpoint::load(agent)?;
    let user = checkpoint::load(user)?;
    let clf = l.resources.classifier(l.config.classifier);
    let sc = l.config.selfchat_config(l.resources.seeds.clone());
    let dialogs = self_chat(&agent.model, &user.model, &l.resources.vocab, &clf, &sc, l.threads > 1)?;
    write_jsonl(output, &dialogs, Some(&l.meta("selfchat")))?;
    eprintln!("wrote {} dialogs to {}", dialogs.len(), output.display());
    Ok(())
}

fn eval(cli: &Cli, dialogs: &Path, config: &Path, output: &Path, references: Option<&Path>) -> CmdResult {
    let l = load_config(config, cli)?;
    let dialogs = read_dialogs(dialogs)?;
    let refs = references.map(read_dialogs).transpose()?;
    let report = evaluate_run(&dialogs, &l.resources.lexicon, l.config.pege.peg_baseline, refs.as_deref())?;
    let mut value = serde_json::to_value(&report).expect("report serializes");
    let obj = value.as_object_mut().expect("report is an object");
    obj.insert("config_hash".into(), json!(l.hash));
    obj.insert("config".into(), serde_json::to_value(&l.config).expect("config serializes"));
    write_json(output, &value)?;
    eprintln!(
        "PEG {:.4}  E {:.4}  PEGE {:.4} over {} dialogs ({} skipped)",
        report.peg_score,
        report.e_score,
        report.pege_score,
        report.num_dialogs,
        report.skipped.len()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    if let Some(n) = cli.threads {
        // Only fails if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match &cli.command {
        Command::Lexicon { action: LexiconAction::Stats { lexicon, vocab } } => lexicon_stats(lexicon, vocab)?,
        Command::Synth { config, output } => synth(cli, config, output)?,
        Command::Filter { corpus, config, output, report } => filter(cli, corpus, config, output, report)?,
        Command::Train { config, ablation, role, output, log } => {
            train_cmd(cli, config, *ablation, *role, output, log.as_deref())?
        }
        Command::Gradcheck { config } => return gradcheck(cli, config),
        Command::Selfchat { agent, user, config, output } => selfchat(cli, agent, user, config, output)?,
        Command::Eval { dialogs, config, output, references } => eval(cli, dialogs, config, output, references.as_deref())?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("error: malformed config: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
