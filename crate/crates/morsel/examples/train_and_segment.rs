//! End-to-end segmentation: synthesize a corpus, train the semi-Markov
//! CRF, decode held-out words and score the boundaries.
//!
//! ```bash
//! cargo run -p morsel --example train_and_segment
//! ```

use morsel::evaluation::macro_f1;
use morsel::features::{FeatureConfig, Resources};
use morsel::synth::{demo_grammar, generate, split};
use morsel::tags::TagsetLevel;
use morsel::training::{fit, TrainConfig};

fn main() -> morsel::Result<()> {
    let grammar = demo_grammar();
    let corpus = generate(&grammar, 600, 1)?;
    let parts = split(corpus.dataset(), &[8, 1, 1, 2], 1)?;
    let (train, test) = (&parts[0], &parts[3]);
    println!("{} training types, {} test types", train.len(), test.len());

    // The grammar doubles as the source of the lookup resources.
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
    let outcome = fit(train, &config, &resources)?;
    println!(
        "trained: {} features, {} iterations, final objective {:.4}",
        outcome.model.vocab().len(),
        outcome.iterations.len(),
        outcome.final_objective
    );

    let mut preds = Vec::new();
    for entry in test.entries() {
        let (decoded, score) = outcome.model.viterbi(&entry.word, &resources)?;
        if preds.len() < 5 {
            println!("{}\t{decoded}\t(log-score {score:.3})", entry.word);
        }
        preds.push(decoded);
    }
    let report = macro_f1(&preds, test)?;
    println!(
        "held-out boundary macro-F1 {:.2} (P {:.2} / R {:.2})",
        100.0 * report.macro_f1.unwrap(),
        100.0 * report.macro_precision.unwrap(),
        100.0 * report.macro_recall.unwrap()
    );
    Ok(())
}
