use std::path::Path;

use pege_core::config::{encode_corpus, Role, RunConfig};
use pege_core::corpus::{filter_dialogs, synthesize_corpus};
use pege_core::eval::{evaluate_run, self_chat};
use pege_core::model::checkpoint;
use pege_core::model::init_model;
use pege_core::model::train::{train, Ablation};

const SMALL: &str = r#"
seed = 3

[synth]
num_dialogs = 60
turns_range = [3, 9]

[model]
embed_dim = 8
hidden_dim = 8
context_window = 64

[train]
max_steps = 10
batch_size = 4

[selfchat]
turns = 2

[selfchat.decode]
mode = "top_k"
k = 4
max_tokens = 5
min_tokens = 1
"#;

#[test]
fn synthetic_pipeline_end_to_end() {
    let (cfg, res) = RunConfig::parse(SMALL).unwrap().resolve(Path::new("."), &|_| None).unwrap();
    let corpus = synthesize_corpus(&cfg.synth, cfg.seed).unwrap();
    assert_eq!(corpus.len(), 60);
    let clf = res.classifier(cfg.classifier);
    let filtered = filter_dialogs(&corpus, &clf, &res.filter).unwrap();
    assert_eq!(filtered.retained.len() + filtered.rejections.total(), corpus.len());

    let agent_ex = encode_corpus(&corpus, Role::Agent, &cfg, &res).unwrap().examples;
    let user_ex = encode_corpus(&corpus, Role::General, &cfg, &res).unwrap().examples;
    assert!(user_ex.len() > agent_ex.len());

    let run = |ablation| train(init_model(cfg.model).unwrap(), &agent_ex, &res.matrix, &cfg.pege, ablation, &cfg.train, 1).unwrap();
    let agent = run(Ablation::Full);
    assert_eq!(agent.log.len(), 10);
    assert!(agent.log.iter().all(|s| s.total.is_finite()));
    assert_eq!(agent.log, run(Ablation::Full).log);
    let nll = run(Ablation::NllOnly);
    assert!(nll.log.iter().all(|s| s.total == s.nll));

    let user = train(init_model(cfg.model).unwrap(), &user_ex, &res.matrix, &cfg.pege, Ablation::NllOnly, &cfg.train, 1).unwrap();
    let sc = cfg.selfchat_config(res.seeds[..6].to_vec());
    let dialogs = self_chat(&agent.model, &user.model, &res.vocab, &clf, &sc, false).unwrap();
    assert!(dialogs.iter().all(|d| d.len() == 4));
    let report = evaluate_run(&dialogs, &res.lexicon, cfg.pege.peg_baseline, None).unwrap();
    assert_eq!(report.num_dialogs + report.skipped.len(), 6);
    assert!(report.bleu1.is_none());

    let bytes = checkpoint::to_bytes(&agent.model, &cfg.hash());
    let back = checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.config_hash, cfg.hash());
    assert_eq!(back.model.checksum(), agent.model.checksum());
}
