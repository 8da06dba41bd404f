//! Maximum-likelihood training with L2 regularization, hyperparameter
//! tuning and the final-train protocol.
//!
//! The objective is convex: the summed per-word negative log-likelihood
//! plus `l2/2 * |w|^2`. Weights start at zero and L-BFGS runs until the
//! relative objective change drops below the tolerance. Per-word gradients
//! are reduced in a fixed order, so runs are bit-reproducible at a fixed
//! thread count.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::corpus::{Dataset, DatasetRole, Fold};
use crate::errors::{Error, Result};
use crate::evaluation;
use crate::features::{Extractor, FeatureConfig, FeatureVocabulary, Resources};
use crate::optim::{self, IterationRecord, OptimParams};
use crate::semicrf::{
    accumulate_gradient, path_of, FeatureLattice, Model, Path, ResourceFingerprint,
};
use crate::tags::{LabeledSegmentation, Tagset, TagsetLevel};

/// Everything `fit` needs to know.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub level: TagsetLevel,
    pub l2_coefficient: f64,
    pub lbfgs_history: usize,
    pub max_iterations: usize,
    /// Relative objective-change convergence tolerance.
    pub tolerance: f64,
    pub seed: u64,
    pub features: FeatureConfig,
    /// Maximum segment length in codepoints; `None` means unbounded.
    pub max_segment_length: Option<usize>,
    /// Sum all gold analyses in the numerator instead of training on the
    /// first listed gold.
    pub marginalize_golds: bool,
    /// Worker threads for objective evaluation.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            level: TagsetLevel::new(2).expect("valid level"),
            l2_coefficient: 0.1,
            lbfgs_history: 10,
            max_iterations: 500,
            tolerance: 1e-6,
            seed: 0,
            features: FeatureConfig::default(),
            max_segment_length: Some(12),
            marginalize_golds: false,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l2_coefficient < 0.0 {
            return Err(Error::Config("l2 coefficient must be >= 0".into()));
        }
        if self.tolerance <= 0.0 {
            return Err(Error::Config("tolerance must be > 0".into()));
        }
        if self.max_segment_length == Some(0) {
            return Err(Error::Config("max segment length must be >= 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("thread count must be >= 1".into()));
        }
        self.features.validate()
    }
}

/// A training set prepared for repeated objective evaluation: the frozen
/// vocabulary, the per-word feature lattices and the gold paths.
pub struct TrainingProblem {
    words: Vec<String>,
    lattices: Vec<FeatureLattice>,
    gold_paths: Vec<Vec<Path>>,
    vocab: FeatureVocabulary,
    tagset: Tagset,
    config: TrainConfig,
}

impl TrainingProblem {
    /// Projects the gold labels to the configured level, induces the
    /// tagset, builds the feature vocabulary over every candidate edge of
    /// the training lattices (with tag–substring conjunctions restricted
    /// to pairs observed in gold) and caches the per-word lattices.
    pub fn prepare(train: &Dataset, config: &TrainConfig, resources: &Resources) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::Config("empty training set".into()));
        }
        let level = config.level;
        let projected: Vec<(String, Vec<LabeledSegmentation>)> = train
            .entries()
            .iter()
            .map(|e| {
                (
                    e.word.clone(),
                    e.analyses.iter().map(|a| a.project(level)).collect(),
                )
            })
            .collect();
        let tagset = Tagset::build(projected.iter().flat_map(|(_, a)| a.iter()), level)?;

        let mut segtag_allow: HashSet<(String, String)> = HashSet::new();
        for (_, analyses) in &projected {
            for ls in analyses {
                for (morph, tag) in ls.segments() {
                    segtag_allow.insert((morph.clone(), tag.to_string()));
                }
            }
        }

        let mut vocab = FeatureVocabulary::new();
        let extractor = Extractor {
            config: &config.features,
            resources,
            segtag_allow: Some(&segtag_allow),
        };
        let mut words = Vec::with_capacity(projected.len());
        let mut lattices = Vec::with_capacity(projected.len());
        let mut gold_paths = Vec::with_capacity(projected.len());
        for (word, analyses) in &projected {
            let chars: Vec<char> = word.chars().collect();
            let lattice = FeatureLattice::build(
                &chars,
                &tagset,
                &extractor,
                config.max_segment_length,
                |s| vocab.resolve(s),
            )
            .map_err(|e| attach_word(e, word))?;
            let paths: Vec<Path> = analyses
                .iter()
                .map(|ls| path_of(ls, &tagset, config.max_segment_length))
                .collect::<Result<_>>()
                .map_err(|e| attach_word(e, word))?;
            words.push(word.clone());
            lattices.push(lattice);
            gold_paths.push(paths);
        }
        vocab.freeze();
        Ok(TrainingProblem {
            words,
            lattices,
            gold_paths,
            vocab,
            tagset,
            config: config.clone(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.vocab.len()
    }

    pub fn tagset(&self) -> &Tagset {
        &self.tagset
    }

    pub fn vocab(&self) -> &FeatureVocabulary {
        &self.vocab
    }

    /// The regularized objective and its gradient at `weights`.
    pub fn objective(&self, weights: &[f64]) -> Result<(f64, Vec<f64>)> {
        if weights.len() != self.vocab.len() {
            return Err(Error::Config(format!(
                "expected {} weights, got {}",
                self.vocab.len(),
                weights.len()
            )));
        }
        let n_words = self.lattices.len();
        let threads = self.config.threads.max(1).min(n_words.max(1));
        let marginalize = self.config.marginalize_golds;

        let mut value = 0.0;
        let mut grad = vec![0.0; weights.len()];
        if threads <= 1 {
            for i in 0..n_words {
                value += accumulate_gradient(
                    &self.lattices[i],
                    weights,
                    &self.gold_paths[i],
                    marginalize,
                    &mut grad,
                )?;
            }
        } else {
            // Contiguous chunks, reduced in chunk order.
            let chunk = n_words.div_ceil(threads);
            let parts: Vec<Result<(f64, Vec<f64>)>> = std::thread::scope(|scope| {
                let mut handles = Vec::new();
                for t in 0..threads {
                    let lo = t * chunk;
                    let hi = ((t + 1) * chunk).min(n_words);
                    let lattices = &self.lattices;
                    let gold_paths = &self.gold_paths;
                    handles.push(scope.spawn(move || {
                        let mut local_value = 0.0;
                        let mut local_grad = vec![0.0; weights.len()];
                        for i in lo..hi {
                            local_value += accumulate_gradient(
                                &lattices[i],
                                weights,
                                &gold_paths[i],
                                marginalize,
                                &mut local_grad,
                            )?;
                        }
                        Ok((local_value, local_grad))
                    }));
                }
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
            for part in parts {
                let (v, g) = part?;
                value += v;
                for (acc, x) in grad.iter_mut().zip(&g) {
                    *acc += x;
                }
            }
        }

        let l2 = self.config.l2_coefficient;
        if l2 > 0.0 {
            let norm2: f64 = weights.iter().map(|w| w * w).sum();
            value += 0.5 * l2 * norm2;
            for (g, w) in grad.iter_mut().zip(weights) {
                *g += l2 * w;
            }
        }
        if !value.is_finite() {
            return Err(self.locate_non_finite(weights));
        }
        Ok((value, grad))
    }

    /// Re-runs word by word to name the instance that broke the objective.
    fn locate_non_finite(&self, weights: &[f64]) -> Error {
        for i in 0..self.lattices.len() {
            let mut scratch = vec![0.0; weights.len()];
            match accumulate_gradient(
                &self.lattices[i],
                weights,
                &self.gold_paths[i],
                self.config.marginalize_golds,
                &mut scratch,
            ) {
                Ok(nll) if nll.is_finite() => continue,
                _ => {
                    return Error::NonFiniteObjective {
                        word: self.words[i].clone(),
                        n_features: self.vocab.len(),
                    }
                }
            }
        }
        Error::NonFiniteObjective {
            word: "<regularizer>".into(),
            n_features: self.vocab.len(),
        }
    }
}

fn attach_word(err: Error, word: &str) -> Error {
    match err {
        Error::SegmentTooLong { .. } | Error::LabelNotInTagset { .. } => err,
        other => Error::Segmentation {
            word: word.to_owned(),
            reason: other.to_string(),
        },
    }
}

/// A fitted model together with the optimizer trace.
pub struct FitOutcome {
    pub model: Model,
    pub iterations: Vec<IterationRecord>,
    pub final_objective: f64,
}

impl FitOutcome {
    /// The training log: one `iter<TAB>objective<TAB>grad_norm` line per
    /// iteration.
    pub fn log_tsv(&self) -> String {
        let mut out = String::new();
        for rec in &self.iterations {
            let _ = writeln!(
                out,
                "{}\t{:.10}\t{:.10}",
                rec.iteration, rec.objective, rec.grad_norm
            );
        }
        out
    }
}

/// Maximum-likelihood estimation from zero initialization.
pub fn fit(train: &Dataset, config: &TrainConfig, resources: &Resources) -> Result<FitOutcome> {
    let problem = TrainingProblem::prepare(train, config, resources)?;
    fit_prepared(problem, resources)
}

fn fit_prepared(problem: TrainingProblem, resources: &Resources) -> Result<FitOutcome> {
    let params = OptimParams {
        history: problem.config.lbfgs_history,
        max_iterations: problem.config.max_iterations,
        tolerance: problem.config.tolerance,
        l1: None,
    };
    let x0 = vec![0.0; problem.n_features()];
    let (weights, iterations) = optim::minimize(
        |w, g| {
            let (v, grad) = problem.objective(w)?;
            g.copy_from_slice(&grad);
            Ok(v)
        },
        x0,
        &params,
    )?;
    let final_objective = iterations.last().map_or(f64::NAN, |r| r.objective);
    let fingerprints = resources
        .fingerprints
        .iter()
        .map(|(name, hex)| ResourceFingerprint {
            name: name.clone(),
            sha256_hex: hex.clone(),
        })
        .collect();
    let model = Model::new(
        weights,
        problem.vocab,
        problem.tagset,
        problem.config.features.clone(),
        problem.config.max_segment_length,
        fingerprints,
    )?;
    Ok(FitOutcome {
        model,
        iterations,
        final_objective,
    })
}

/// Trains on the concatenation of train, tune and dev with the selected
/// configuration; the vocabulary is rebuilt on the concatenation.
/// Overlapping words across the three inputs are an error.
pub fn train_final(
    train: &Dataset,
    tune: &Dataset,
    dev: &Dataset,
    config: &TrainConfig,
    resources: &Resources,
) -> Result<FitOutcome> {
    let all = Dataset::concat(DatasetRole::Train, &[train, tune, dev])?;
    fit(&all, config, resources)
}

/// Hyperparameter axes swept by [`tune`]. Every axis must be non-empty.
#[derive(Debug, Clone)]
pub struct TuneGrid {
    pub level: Vec<TagsetLevel>,
    pub l2: Vec<f64>,
    pub ngram: Vec<usize>,
    pub use_affix: Vec<bool>,
    pub use_dict: Vec<bool>,
    pub use_conjunction: Vec<bool>,
    pub use_lsv: Vec<bool>,
}

impl TuneGrid {
    /// A one-cell grid holding the base configuration.
    pub fn singleton(base: &TrainConfig) -> Self {
        TuneGrid {
            level: vec![base.level],
            l2: vec![base.l2_coefficient],
            ngram: vec![base.features.max_context_ngram],
            use_affix: vec![base.features.use_affix],
            use_dict: vec![base.features.use_dict],
            use_conjunction: vec![base.features.use_conjunction],
            use_lsv: vec![base.features.use_lsv],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.level.is_empty()
            || self.l2.is_empty()
            || self.ngram.is_empty()
            || self.use_affix.is_empty()
            || self.use_dict.is_empty()
            || self.use_conjunction.is_empty()
            || self.use_lsv.is_empty()
        {
            return Err(Error::Config("every tuning axis must be non-empty".into()));
        }
        Ok(())
    }

    /// Parses the grid TSV: one axis per line, `axis<TAB>value...`, with
    /// axes `level`, `l2`, `ngram`, `affix`, `dict`, `conj`, `lsv`.
    /// Missing axes keep the base configuration's single value.
    pub fn parse_tsv(text: &str, base: &TrainConfig) -> Result<Self> {
        let mut grid = TuneGrid::singleton(base);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let axis = fields.next().unwrap_or_default();
            let values: Vec<&str> = fields.collect();
            let fail = |reason: String| Error::DataFormat {
                file: "<grid>".into(),
                line: lineno + 1,
                reason,
            };
            if values.is_empty() {
                return Err(fail(format!("axis `{axis}` has no values")));
            }
            let parse_bools = |vals: &[&str]| -> Result<Vec<bool>> {
                vals.iter()
                    .map(|v| match *v {
                        "true" | "1" | "on" => Ok(true),
                        "false" | "0" | "off" => Ok(false),
                        other => Err(fail(format!("bad boolean `{other}`"))),
                    })
                    .collect()
            };
            match axis {
                "level" => {
                    grid.level = values
                        .iter()
                        .map(|v| {
                            v.parse::<u8>()
                                .map_err(|_| fail(format!("bad level `{v}`")))
                                .and_then(TagsetLevel::new)
                        })
                        .collect::<Result<_>>()?;
                }
                "l2" => {
                    grid.l2 = values
                        .iter()
                        .map(|v| v.parse::<f64>().map_err(|_| fail(format!("bad l2 `{v}`"))))
                        .collect::<Result<_>>()?;
                }
                "ngram" => {
                    grid.ngram = values
                        .iter()
                        .map(|v| {
                            v.parse::<usize>()
                                .map_err(|_| fail(format!("bad ngram `{v}`")))
                        })
                        .collect::<Result<_>>()?;
                }
                "affix" => grid.use_affix = parse_bools(&values)?,
                "dict" => grid.use_dict = parse_bools(&values)?,
                "conj" => grid.use_conjunction = parse_bools(&values)?,
                "lsv" => grid.use_lsv = parse_bools(&values)?,
                other => return Err(fail(format!("unknown axis `{other}`"))),
            }
        }
        grid.validate()?;
        Ok(grid)
    }

    /// All grid cells as configurations derived from `base`, in a fixed
    /// enumeration order.
    pub fn cells(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &level in &self.level {
            for &l2 in &self.l2 {
                for &ngram in &self.ngram {
                    for &affix in &self.use_affix {
                        for &dict in &self.use_dict {
                            for &conj in &self.use_conjunction {
                                for &lsv in &self.use_lsv {
                                    let mut cfg = base.clone();
                                    cfg.level = level;
                                    cfg.l2_coefficient = l2;
                                    cfg.features.max_context_ngram = ngram;
                                    cfg.features.use_affix = affix;
                                    cfg.features.use_dict = dict;
                                    cfg.features.use_conjunction = conj;
                                    cfg.features.use_lsv = lsv;
                                    out.push(cfg);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Metric maximized by [`tune`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneMetric {
    SegF1,
    StemAcc,
    TagAcc,
}

impl TuneMetric {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "seg_f1" => Ok(TuneMetric::SegF1),
            "stem_acc" => Ok(TuneMetric::StemAcc),
            "tag_acc" => Ok(TuneMetric::TagAcc),
            other => Err(Error::Config(format!(
                "unknown metric `{other}` (expected seg_f1|stem_acc|tag_acc)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TuneMetric::SegF1 => "seg_f1",
            TuneMetric::StemAcc => "stem_acc",
            TuneMetric::TagAcc => "tag_acc",
        }
    }
}

/// Decodes every word of `eval` with `model` and scores it.
pub fn evaluate_metric(
    model: &Model,
    eval: &Dataset,
    metric: TuneMetric,
    resources: &Resources,
) -> Result<f64> {
    let mut preds = Vec::with_capacity(eval.len());
    for entry in eval.entries() {
        let (ls, _) = model.viterbi(&entry.word, resources)?;
        preds.push(ls);
    }
    match metric {
        TuneMetric::SegF1 => Ok(evaluation::macro_f1(&preds, eval)?
            .macro_f1
            .expect("seg report has macro F1")),
        TuneMetric::StemAcc => {
            let eval_proj = eval.map_analyses(|ls| ls.project(model.tagset().level()))?;
            let (_, stem_acc) = evaluation::stem_and_root_accuracy(&preds, &eval_proj)?;
            Ok(stem_acc)
        }
        TuneMetric::TagAcc => {
            // Gold bundles must come from the model's granularity (feature
            // names at level 4, values at level 5).
            let eval_proj = eval.map_analyses(|ls| ls.project(model.tagset().level()))?;
            let bundles: Vec<(String, Vec<String>)> = preds
                .iter()
                .map(|p| p.morph_tag_view().map(|(b, _)| (p.word().to_owned(), b)))
                .collect::<Result<_>>()?;
            let m = evaluation::tag_classification_metrics(&bundles, &eval_proj)?;
            Ok(m.accuracy)
        }
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone)]
pub struct TuneCell {
    pub config: TrainConfig,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

/// Grid scores plus the winning configuration.
#[derive(Debug, Clone)]
pub struct TuneReport {
    pub metric: TuneMetric,
    pub cells: Vec<TuneCell>,
    pub best: TrainConfig,
}

impl TuneReport {
    /// One row per grid cell plus per-fold columns.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let n_folds = self.cells.first().map_or(0, |c| c.fold_scores.len());
        let _ = write!(
            out,
            "level\tl2\tngram\taffix\tdict\tconj\tlsv\tmean_{}",
            self.metric.as_str()
        );
        for i in 0..n_folds {
            let _ = write!(out, "\tfold{i}");
        }
        out.push('\n');
        for cell in &self.cells {
            let c = &cell.config;
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}",
                c.level,
                c.l2_coefficient,
                c.features.max_context_ngram,
                c.features.use_affix,
                c.features.use_dict,
                c.features.use_conjunction,
                c.features.use_lsv,
                cell.mean_score
            );
            for s in &cell.fold_scores {
                let _ = write!(out, "\t{s:.6}");
            }
            out.push('\n');
        }
        out
    }
}

/// Sweeps the grid over the folds, scoring every cell by the mean Tune-set
/// metric. Ties break toward the smaller tagset level, then the smaller
/// l2, then the smaller context n-gram length.
pub fn tune(
    folds: &[Fold],
    base: &TrainConfig,
    grid: &TuneGrid,
    metric: TuneMetric,
    resources: &Resources,
) -> Result<TuneReport> {
    grid.validate()?;
    if folds.is_empty() {
        return Err(Error::Config("no folds".into()));
    }
    let mut cells = Vec::new();
    for config in grid.cells(base) {
        let mut fold_scores = Vec::with_capacity(folds.len());
        for fold in folds {
            let outcome = fit(&fold.train, &config, resources)?;
            fold_scores.push(evaluate_metric(
                &outcome.model,
                &fold.tune,
                metric,
                resources,
            )?);
        }
        let mean_score = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
        cells.push(TuneCell {
            config,
            fold_scores,
            mean_score,
        });
    }
    let best = cells
        .iter()
        .max_by(|a, b| {
            a.mean_score
                .partial_cmp(&b.mean_score)
                .unwrap()
                .then_with(|| b.config.level.cmp(&a.config.level))
                .then_with(|| {
                    b.config
                        .l2_coefficient
                        .partial_cmp(&a.config.l2_coefficient)
                        .unwrap()
                })
                .then_with(|| {
                    b.config
                        .features
                        .max_context_ngram
                        .cmp(&a.config.features.max_context_ngram)
                })
        })
        .expect("non-empty grid")
        .config
        .clone();
    Ok(TuneReport {
        metric,
        cells,
        best,
    })
}
