//! Cross-validated hyperparameter search: fold splitting, a level/l2 grid
//! and the winning configuration.
//!
//! ```bash
//! cargo run -p morsel --example tune_grid
//! ```

use morsel::corpus::split_folds;
use morsel::features::Resources;
use morsel::synth::{demo_grammar, generate};
use morsel::training::{train_final, tune, TrainConfig, TuneGrid, TuneMetric};

fn main() -> morsel::Result<()> {
    let corpus = generate(&demo_grammar(), 300, 9)?;
    let folds = split_folds(corpus.dataset(), 5, 9)?;
    println!(
        "{} folds of (train {}, tune {}, dev {})",
        folds.len(),
        folds[0].train.len(),
        folds[0].tune.len(),
        folds[0].dev.len()
    );

    let base = TrainConfig {
        max_iterations: 60,
        tolerance: 1e-5,
        ..TrainConfig::default()
    };
    let grid = TuneGrid::parse_tsv("level\t0\t1\t2\nl2\t0.05\t0.3\n", &base)?;
    let resources = Resources::empty();
    let report = tune(&folds, &base, &grid, TuneMetric::SegF1, &resources)?;
    print!("{}", report.to_tsv());

    let best = &report.best;
    println!(
        "winner: level {} with l2 {}",
        best.level, best.l2_coefficient
    );

    // The final-train protocol: refit on train + tune + dev concatenated.
    let fold = &folds[0];
    let outcome = train_final(&fold.train, &fold.tune, &fold.dev, best, &resources)?;
    println!(
        "final model trained on {} types, {} features",
        fold.train.len() + fold.tune.len() + fold.dev.len(),
        outcome.model.vocab().len()
    );
    Ok(())
}
