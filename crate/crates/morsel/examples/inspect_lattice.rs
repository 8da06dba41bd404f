//! Inside the segment lattice: forward/backward values, the partition
//! function, edge posteriors and analysis probabilities.
//!
//! ```bash
//! cargo run -p morsel --example inspect_lattice
//! ```

use morsel::corpus::{Dataset, DatasetRole};
use morsel::features::Resources;
use morsel::tags::TagsetLevel;
use morsel::training::{fit, TrainConfig};

fn main() -> morsel::Result<()> {
    let train = Dataset::parse_str(
        "takler\ttak:ROOT:NOUN ler:SUFFIX:INFL:NOUN:NUMBER:PLURAL\n\
         pollar\tpol:ROOT:NOUN lar:SUFFIX:INFL:NOUN:NUMBER:PLURAL\n\
         takin\ttak:ROOT:NOUN in:SUFFIX:INFL:NOUN:CASE:GENITIVE\n\
         tak\ttak:ROOT:NOUN\n\
         pol\tpol:ROOT:NOUN",
        DatasetRole::Train,
    )?;
    let config = TrainConfig {
        level: TagsetLevel::new(1)?,
        l2_coefficient: 0.05,
        max_iterations: 200,
        ..TrainConfig::default()
    };
    let resources = Resources::empty();
    let model = fit(&train, &config, &resources)?.model;
    let word = "polin";

    let chart = model.backward(word, &resources)?;
    println!("word: {word}");
    println!("log partition function (forward):  {:.6}", chart.log_z());
    println!(
        "log partition function (backward): {:.6}",
        chart.log_z_backward()
    );

    // Posterior mass of each candidate segment, summed over labels and
    // predecessors.
    let marginals = model.marginals(word, &resources)?;
    let mut by_span: std::collections::BTreeMap<(usize, usize), f64> =
        std::collections::BTreeMap::new();
    for edge in &marginals.edges {
        *by_span.entry((edge.start, edge.end)).or_insert(0.0) += edge.prob;
    }
    println!("segment posteriors:");
    let chars: Vec<char> = word.chars().collect();
    for ((start, end), mass) in by_span {
        if mass > 1e-4 {
            let segment: String = chars[start..end].iter().collect();
            println!("  [{start},{end}) {segment:<6} {mass:.4}");
        }
    }

    // The one-best analysis and its probability.
    let (best, score) = model.viterbi(word, &resources)?;
    println!("viterbi: {best}  p = {:.4}", (score - chart.log_z()).exp());

    // Any specific analysis can be scored as well.
    let alt = Dataset::parse_str("polin\tpolin:ROOT", DatasetRole::Test)?.entries()[0].analyses[0]
        .clone();
    let alt_score = model.score(word, &alt, &resources)?;
    println!(
        "whole-word-root analysis: p = {:.4}",
        (alt_score - chart.log_z()).exp()
    );
    Ok(())
}
