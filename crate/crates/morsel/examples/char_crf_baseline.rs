//! The character-level CRF baseline: the same model with segments capped
//! at one character, plus segment reconstruction by label merging.
//!
//! ```bash
//! cargo run -p morsel --example char_crf_baseline
//! ```

use morsel::baselines::{char_crf_config, explode_to_characters, merge_adjacent_labels};
use morsel::evaluation::macro_f1;
use morsel::features::Resources;
use morsel::synth::{demo_grammar, generate, split};
use morsel::tags::TagsetLevel;
use morsel::training::{fit, TrainConfig};

fn main() -> morsel::Result<()> {
    let corpus = generate(&demo_grammar(), 400, 2)?;
    let parts = split(corpus.dataset(), &[8, 1, 1, 2], 2)?;
    let (train, test) = (&parts[0], &parts[3]);
    let resources = Resources::empty();

    let base = TrainConfig {
        level: TagsetLevel::new(1)?,
        l2_coefficient: 0.1,
        max_iterations: 120,
        ..TrainConfig::default()
    };

    // Character mode: gold analyses explode into one-character segments
    // and every candidate segment has length one.
    let char_cfg = char_crf_config(&base);
    assert_eq!(char_cfg.max_segment_length, Some(1));
    let char_train = train.map_analyses(explode_to_characters)?;
    let char_model = fit(&char_train, &char_cfg, &resources)?.model;
    let word = &test.entries()[0].word;
    let (char_ls, _) = char_model.viterbi(word, &resources)?;
    println!("character labeling of {word}:");
    for (c, t) in char_ls.segments() {
        println!("  {c} {t}");
    }
    let merged = merge_adjacent_labels(&char_ls);
    println!("merged segments: {}", merged.ums_view().join(" "));

    // Segment model against the character baseline on the same data.
    let seg_model = fit(train, &base, &resources)?.model;
    let score = |model: &morsel::semicrf::Model, merge: bool| -> morsel::Result<f64> {
        let mut preds = Vec::new();
        for entry in test.entries() {
            let (ls, _) = model.viterbi(&entry.word, &resources)?;
            preds.push(if merge {
                merge_adjacent_labels(&ls)
            } else {
                ls
            });
        }
        Ok(macro_f1(&preds, test)?.macro_f1.unwrap())
    };
    println!(
        "character CRF boundary macro-F1: {:.2}",
        100.0 * score(&char_model, true)?
    );
    println!(
        "segment model boundary macro-F1: {:.2}",
        100.0 * score(&seg_model, false)?
    );
    Ok(())
}
