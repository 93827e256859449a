//! Regenerates the bundled vocabulary and seed files from the theme tables.
//! Run after editing `data/themes.toml`:
//! `cargo test -p pege-core --test bundled -- --ignored`

use pege_core::corpus::synth::{seed_utterances, seeds_to_jsonl, PolarityMix, ThemeTables};

#[test]
#[ignore]
fn regenerate_bundled_files() {
    let themes = ThemeTables::default();
    let seeds = seed_utterances(&themes, &PolarityMix::default(), 100, 2024).unwrap();
    std::fs::write("data/synthetic_vocab.txt", themes.vocabulary().to_text()).unwrap();
    std::fs::write("data/selfchat_seeds.jsonl", seeds_to_jsonl(&seeds)).unwrap();
}
