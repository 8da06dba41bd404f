//! Morphological tag classification: the joint segment-and-label model
//! against MaxEnt whole-word classifiers.
//!
//! ```bash
//! cargo run -p morsel --example tag_classification
//! ```

use morsel::baselines::{full_tag_pairs, inflectional_view, maxent_train, MaxEntConfig};
use morsel::evaluation::tag_classification_metrics;
use morsel::features::{FeatureConfig, Resources};
use morsel::synth::{demo_grammar, generate, split};
use morsel::tags::TagsetLevel;
use morsel::training::{fit, TrainConfig};

fn main() -> morsel::Result<()> {
    let grammar = demo_grammar();
    let corpus = generate(&grammar, 600, 5)?;
    let parts = split(corpus.dataset(), &[8, 1, 1, 2], 5)?;
    let level = TagsetLevel::new(5)?;

    // Non-inflectional tags collapse to a plain segment tag; the label
    // space becomes SEGMENT plus the inflectional tags.
    let train = inflectional_view(&parts[0], level)?;
    let test = inflectional_view(&parts[3], level)?;

    let resources = Resources {
        gazetteer: Some(grammar.gazetteer()),
        dictionary: Some(grammar.root_dictionary()),
        ..Resources::empty()
    };
    let config = TrainConfig {
        level,
        l2_coefficient: 0.1,
        max_iterations: 150,
        features: FeatureConfig {
            use_affix: true,
            use_dict: true,
            ..FeatureConfig::default()
        },
        ..TrainConfig::default()
    };
    let model = fit(&train, &config, &resources)?.model;
    let bundles: Vec<(String, Vec<String>)> = test
        .entries()
        .iter()
        .map(|e| {
            let (decoded, _) = model.viterbi(&e.word, &resources)?;
            Ok((e.word.clone(), decoded.morph_tag_view()?.0))
        })
        .collect::<morsel::Result<_>>()?;
    let crf = tag_classification_metrics(&bundles, &test)?;

    // MaxEnt baselines over character n-grams, plain and +Split.
    let pairs = full_tag_pairs(&train)?;
    let test_pairs = full_tag_pairs(&test)?;
    println!("full-tag classes observed in training: {}", {
        let mut tags: Vec<&str> = pairs.iter().map(|(_, t)| t.as_str()).collect();
        tags.sort_unstable();
        tags.dedup();
        tags.len()
    });
    for split_mode in [false, true] {
        let me = maxent_train(
            &pairs,
            &MaxEntConfig {
                max_ngram: 3,
                coefficient: 0.05,
                split_mode,
                ..MaxEntConfig::default()
            },
        )?;
        let me_bundles: Vec<(String, Vec<String>)> = test_pairs
            .iter()
            .map(|(w, _)| {
                let tag = me.predict(w);
                let bundle = if tag.is_empty() {
                    Vec::new()
                } else {
                    tag.split(':').map(str::to_owned).collect()
                };
                (w.clone(), bundle)
            })
            .collect();
        let metrics = tag_classification_metrics(&me_bundles, &test)?;
        println!(
            "MaxEnt{}: acc {:.2}, feature macro-F1 {:.2}",
            if split_mode { " +Split" } else { "" },
            100.0 * metrics.accuracy,
            100.0 * metrics.feature_macro_f1
        );
    }
    println!(
        "semi-CRF: acc {:.2}, feature macro-F1 {:.2}",
        100.0 * crf.accuracy,
        100.0 * crf.feature_macro_f1
    );
    Ok(())
}
