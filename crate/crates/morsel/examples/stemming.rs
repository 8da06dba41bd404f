//! Statistical stemming and root detection, plus novel-root counting.
//!
//! ```bash
//! cargo run -p morsel --example stemming
//! ```

use morsel::evaluation::{novel_morph_counts, stem_and_root_accuracy, MorphInventory};
use morsel::features::{FeatureConfig, Resources};
use morsel::synth::{demo_grammar, generate, split};
use morsel::tags::TagsetLevel;
use morsel::training::{fit, TrainConfig};

fn main() -> morsel::Result<()> {
    let grammar = demo_grammar();
    let corpus = generate(&grammar, 120, 3)?;
    let parts = split(corpus.dataset(), &[8, 1, 1, 2], 3)?;
    let (train, test) = (&parts[0], &parts[3]);

    // Level 2 is the smallest tagset rich enough for stemming.
    let resources = Resources {
        gazetteer: Some(grammar.gazetteer()),
        dictionary: Some(grammar.root_dictionary()),
        ..Resources::empty()
    };
    let config = TrainConfig {
        level: TagsetLevel::new(2)?,
        l2_coefficient: 0.1,
        max_iterations: 150,
        features: FeatureConfig {
            use_affix: true,
            use_dict: true,
            ..FeatureConfig::default()
        },
        ..TrainConfig::default()
    };
    let model = fit(train, &config, &resources)?.model;

    let mut preds = Vec::new();
    for entry in test.entries() {
        let (decoded, _) = model.viterbi(&entry.word, &resources)?;
        if preds.len() < 5 {
            let views = decoded.derive_views()?;
            println!(
                "{:<14} roots=[{}]  stem={}",
                entry.word,
                views.roots.join(" "),
                views.stem
            );
        }
        preds.push(decoded);
    }

    let (root_acc, stem_acc) = stem_and_root_accuracy(&preds, test)?;
    println!("root detection accuracy: {:.2}", 100.0 * root_acc);
    println!("stemming accuracy:       {:.2}", 100.0 * stem_acc);

    // Which root/affix types were correctly found despite never occurring
    // in training?
    let inventory = MorphInventory::from_dataset(train);
    let novel = novel_morph_counts(&preds, test, &inventory)?;
    println!(
        "novel roots correctly identified: {} {:?}",
        novel.roots_found.len(),
        novel.roots_found
    );
    println!(
        "novel affixes correctly identified: {} {:?}",
        novel.affixes_found.len(),
        novel.affixes_found
    );
    Ok(())
}
