//! Command-line driver: `train`, `predict`, `evaluate`, `tune`, `synth`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//! All randomness (fold splitting, corpus synthesis) flows from `--seed`;
//! runs are bit-reproducible at a fixed seed and thread count.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::corpus::{
    load_word_list, split_folds, AffixGazetteer, Dataset, DatasetRole, DictionarySet,
};
use crate::errors::{Error, Result};
use crate::evaluation;
use crate::features::{FeatureConfig, LsvTable, Resources};
use crate::model_io::{self, sha256_hex};
use crate::semicrf::Model;
use crate::synth;
use crate::tags::TagsetLevel;
use crate::training::{self, TrainConfig, TuneGrid, TuneMetric};

#[derive(Parser)]
#[command(
    name = "morsel",
    version,
    about = "Labeled morphological segmentation with a semi-Markov CRF",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a segmentation model on an annotated corpus.
    Train(TrainArgs),
    /// Decode words with a trained model and emit a chosen view.
    Predict(PredictArgs),
    /// Score a model against a gold corpus.
    Evaluate(EvaluateArgs),
    /// Cross-validated hyperparameter search over a grid.
    Tune(TuneArgs),
    /// Generate a synthetic corpus from a grammar.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct ResourceArgs {
    /// Affix gazetteer (suffixes as `-an`, prefixes as `i-`).
    #[arg(long)]
    affix: Option<PathBuf>,
    /// Dictionary word list, one word per line.
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Unlabeled word list for letter successor variety features.
    #[arg(long)]
    lsv: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training corpus (`word<TAB>analysis` lines).
    #[arg(long)]
    train: PathBuf,
    /// Tagset granularity level.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=5))]
    level: u8,
    /// L2 regularization coefficient.
    #[arg(long, default_value_t = 0.1)]
    l2: f64,
    /// Maximal boundary context n-gram length.
    #[arg(long, default_value_t = 3)]
    ngram: usize,
    /// Maximum segment length in codepoints (0 = unbounded).
    #[arg(long = "max-seg", default_value_t = 12)]
    max_seg: usize,
    #[command(flatten)]
    resources: ResourceArgs,
    /// Disable the tag-substring conjunction features.
    #[arg(long = "no-conj")]
    no_conj: bool,
    /// Train on all gold analyses of a word instead of the first.
    #[arg(long = "marginalize-golds")]
    marginalize_golds: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum optimizer iterations.
    #[arg(long = "max-iter", default_value_t = 500)]
    max_iter: usize,
    /// Relative objective-change tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Worker threads (default: available cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Input word list, one word per line.
    #[arg(long)]
    input: PathBuf,
    /// Output view.
    #[arg(long, value_parser = ["lms", "ums", "stem", "root", "tag"], default_value = "lms")]
    view: String,
    #[command(flatten)]
    resources: ResourceArgs,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Gold corpus to score against.
    #[arg(long)]
    gold: PathBuf,
    /// Evaluation task.
    #[arg(long, value_parser = ["seg", "stem", "root", "tag"], default_value = "seg")]
    task: String,
    /// Also write the undersegmentation matrix at this tagset level.
    #[arg(long = "underseg-level", value_parser = clap::value_parser!(u8).range(0..=5))]
    underseg_level: Option<u8>,
    #[command(flatten)]
    resources: ResourceArgs,
    /// Write the machine-readable report (TSV; `.json` also written).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    /// Corpus to cross-validate on.
    #[arg(long)]
    train: PathBuf,
    /// Number of folds.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Grid TSV: one axis per line (`level`, `l2`, `ngram`, `affix`,
    /// `dict`, `conj`, `lsv`).
    #[arg(long)]
    grid: PathBuf,
    /// Metric to maximize.
    #[arg(long, value_parser = ["seg_f1", "stem_acc", "tag_acc"], default_value = "seg_f1")]
    metric: String,
    #[command(flatten)]
    resources: ResourceArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Base maximum segment length for all cells (0 = unbounded).
    #[arg(long = "max-seg", default_value_t = 12)]
    max_seg: usize,
    /// Maximum optimizer iterations per cell.
    #[arg(long = "max-iter", default_value_t = 200)]
    max_iter: usize,
    /// Worker threads (default: available cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Where to write the per-cell grid report TSV.
    #[arg(long = "out-report")]
    out_report: Option<PathBuf>,
    /// Where to write the winning configuration (TSV key/value lines).
    #[arg(long = "out-config")]
    out_config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Grammar TSV.
    #[arg(long)]
    grammar: PathBuf,
    /// Number of word types to generate.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split ratios, colon-separated (train:tune:dev:test).
    #[arg(long, default_value = "8:1:1:2")]
    split: String,
    /// Output directory for the corpus files.
    #[arg(long)]
    out: PathBuf,
    /// Also write the grammar's affix gazetteer and root dictionary.
    #[arg(long = "emit-resources")]
    emit_resources: bool,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Entry point for the `morsel` binary.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load_resources(args: &ResourceArgs) -> Result<Resources> {
    let mut resources = Resources::empty();
    if let Some(path) = &args.affix {
        let bytes = fs::read(path)?;
        resources.gazetteer = Some(AffixGazetteer::load(
            BufReader::new(bytes.as_slice()),
            &path.display().to_string(),
        )?);
        resources
            .fingerprints
            .push(("affix".into(), sha256_hex(&bytes)));
    }
    if let Some(path) = &args.dict {
        let bytes = fs::read(path)?;
        resources.dictionary = Some(DictionarySet::load(BufReader::new(bytes.as_slice()))?);
        resources
            .fingerprints
            .push(("dict".into(), sha256_hex(&bytes)));
    }
    if let Some(path) = &args.lsv {
        let bytes = fs::read(path)?;
        let words = load_word_list(BufReader::new(bytes.as_slice()))?;
        resources.lsv = Some(LsvTable::build(&words));
        resources
            .fingerprints
            .push(("lsv".into(), sha256_hex(&bytes)));
    }
    Ok(resources)
}

/// One warning per resource whose fingerprint disagrees with the model's.
pub fn fingerprint_warnings(model: &Model, resources: &Resources) -> Vec<String> {
    let mut out = Vec::new();
    for fp in model.fingerprints() {
        match resources
            .fingerprints
            .iter()
            .find(|(name, _)| *name == fp.name)
        {
            None => out.push(format!(
                "model was trained with resource `{}` but none was provided",
                fp.name
            )),
            Some((_, hex)) if *hex != fp.sha256_hex => out.push(format!(
                "resource `{}` differs from the one used in training",
                fp.name
            )),
            _ => {}
        }
    }
    for (name, _) in &resources.fingerprints {
        if !model.fingerprints().iter().any(|fp| fp.name == *name) {
            out.push(format!(
                "resource `{name}` was provided but the model was trained without it"
            ));
        }
    }
    out
}

fn check_fingerprints(model: &Model, resources: &Resources) {
    for warning in fingerprint_warnings(model, resources) {
        eprintln!("warning: {warning}");
    }
}

fn load_dataset(path: &Path, role: DatasetRole) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    Dataset::load(BufReader::new(file), role, &path.display().to_string())
}

fn build_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let features = FeatureConfig {
        max_context_ngram: args.ngram,
        use_affix: args.resources.affix.is_some(),
        use_dict: args.resources.dict.is_some(),
        use_conjunction: !args.no_conj,
        use_lsv: args.resources.lsv.is_some(),
        ..FeatureConfig::default()
    };
    let cfg = TrainConfig {
        level: TagsetLevel::new(args.level)?,
        l2_coefficient: args.l2,
        max_iterations: args.max_iter,
        tolerance: args.tol,
        seed: args.seed,
        features,
        max_segment_length: if args.max_seg == 0 {
            None
        } else {
            Some(args.max_seg)
        },
        marginalize_golds: args.marginalize_golds,
        threads: args.threads.unwrap_or_else(default_threads),
        ..TrainConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let started = Instant::now();
    let resources = load_resources(&args.resources)?;
    let cfg = build_train_config(&args)?;
    let train = load_dataset(&args.train, DatasetRole::Train)?;
    let outcome = training::fit(&train, &cfg, &resources)?;
    eprint!("{}", outcome.log_tsv());
    model_io::save_model(&args.out, &outcome.model)?;
    println!(
        "trained on {} types: {} features, final objective {:.6}, {:.2}s",
        train.len(),
        outcome.model.vocab().len(),
        outcome.final_objective,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn required_level(view: &str) -> u8 {
    match view {
        "lms" | "ums" => 0,
        "root" => 1,
        "stem" => 2,
        "tag" => 4,
        _ => unreachable!("validated by clap"),
    }
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = model_io::load_model(&args.model)?;
    let resources = load_resources(&args.resources)?;
    check_fingerprints(&model, &resources);
    if model.tagset().level().get() < required_level(&args.view) {
        return Err(Error::Granularity {
            need: format!("view `{}`", args.view),
            required: format!("a model at level >= {}", required_level(&args.view)),
            found: format!("level {}", model.tagset().level()),
        });
    }
    let words = load_word_list(BufReader::new(fs::File::open(&args.input)?))?;
    let mut out = String::new();
    for word in &words {
        let (ls, _) = model.viterbi(word, &resources)?;
        let rendered = match args.view.as_str() {
            "lms" => ls.to_string(),
            "ums" => ls.ums_view().join(" "),
            "root" => ls.roots_view()?.join(" "),
            "stem" => ls.stem_view()?,
            "tag" => ls.morph_tag_view()?.0.join(":"),
            _ => unreachable!(),
        };
        out.push_str(word);
        out.push('\t');
        out.push_str(&rendered);
        out.push('\n');
    }
    match &args.out {
        Some(path) => fs::write(path, out)?,
        None => {
            std::io::stdout().write_all(out.as_bytes())?;
        }
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let model = model_io::load_model(&args.model)?;
    let resources = load_resources(&args.resources)?;
    check_fingerprints(&model, &resources);
    let gold = load_dataset(&args.gold, DatasetRole::Test)?;

    let mut preds = Vec::with_capacity(gold.len());
    for entry in gold.entries() {
        preds.push(model.viterbi(&entry.word, &resources)?.0);
    }

    let mut report = match args.task.as_str() {
        "seg" => {
            let report = evaluation::macro_f1(&preds, &gold)?;
            println!(
                "seg\tP {:.2}\tR {:.2}\tF1 {:.2}",
                100.0 * report.macro_precision.unwrap_or(0.0),
                100.0 * report.macro_recall.unwrap_or(0.0),
                100.0 * report.macro_f1.unwrap_or(0.0)
            );
            report
        }
        "stem" | "root" => {
            let (root_acc, stem_acc) = evaluation::stem_and_root_accuracy(&preds, &gold)?;
            println!(
                "root_detection\tAcc {:.2}\nstemming\tAcc {:.2}",
                100.0 * root_acc,
                100.0 * stem_acc
            );
            let mut report = evaluation::macro_f1(&preds, &gold)?;
            report.task = args.task.clone();
            report.root_accuracy = Some(root_acc);
            report.stem_accuracy = Some(stem_acc);
            report
        }
        "tag" => {
            let level = model.tagset().level();
            let gold_proj = gold.map_analyses(|ls| ls.project(level))?;
            let bundles: Vec<(String, Vec<String>)> = preds
                .iter()
                .map(|p| Ok((p.word().to_owned(), p.morph_tag_view()?.0)))
                .collect::<Result<_>>()?;
            let metrics = evaluation::tag_classification_metrics(&bundles, &gold_proj)?;
            println!(
                "tag_classification\tF1 {:.2}\tAcc {:.2}",
                100.0 * metrics.feature_macro_f1,
                100.0 * metrics.accuracy
            );
            let mut report = evaluation::macro_f1(&preds, &gold)?;
            report.task = "tag".into();
            report.tag_accuracy = Some(metrics.accuracy);
            report.feature_macro_f1 = Some(metrics.feature_macro_f1);
            report.per_feature = metrics.per_feature;
            report
        }
        _ => unreachable!("validated by clap"),
    };
    report.n_words = gold.len();

    if let Some(level) = args.underseg_level {
        let matrix = evaluation::undersegmentation_matrix(&preds, &gold, TagsetLevel::new(level)?)?;
        match &args.report {
            Some(path) => {
                let mut underseg = path.as_os_str().to_owned();
                underseg.push(".underseg.tsv");
                fs::write(PathBuf::from(underseg), matrix.to_tsv())?;
            }
            None => print!("{}", matrix.to_tsv()),
        }
    }
    if let Some(path) = &args.report {
        fs::write(path, report.to_tsv())?;
        let mut json = path.as_os_str().to_owned();
        json.push(".json");
        fs::write(PathBuf::from(json), report.to_json())?;
    }
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> Result<()> {
    let resources = load_resources(&args.resources)?;
    let data = load_dataset(&args.train, DatasetRole::Train)?;
    let folds = split_folds(&data, args.folds, args.seed)?;
    let base = TrainConfig {
        seed: args.seed,
        max_iterations: args.max_iter,
        max_segment_length: if args.max_seg == 0 {
            None
        } else {
            Some(args.max_seg)
        },
        threads: args.threads.unwrap_or_else(default_threads),
        features: FeatureConfig {
            use_affix: args.resources.affix.is_some(),
            use_dict: args.resources.dict.is_some(),
            use_lsv: args.resources.lsv.is_some(),
            ..FeatureConfig::default()
        },
        ..TrainConfig::default()
    };
    let grid_text = fs::read_to_string(&args.grid)?;
    let grid = TuneGrid::parse_tsv(&grid_text, &base)?;
    let metric = TuneMetric::parse(&args.metric)?;
    let report = training::tune(&folds, &base, &grid, metric, &resources)?;

    print!("{}", report.to_tsv());
    let best = &report.best;
    println!(
        "best\tlevel={}\tl2={}\tngram={}\taffix={}\tdict={}\tconj={}\tlsv={}",
        best.level,
        best.l2_coefficient,
        best.features.max_context_ngram,
        best.features.use_affix,
        best.features.use_dict,
        best.features.use_conjunction,
        best.features.use_lsv
    );
    if let Some(path) = &args.out_report {
        fs::write(path, report.to_tsv())?;
    }
    if let Some(path) = &args.out_config {
        let text = format!(
            "level\t{}\nl2\t{}\nngram\t{}\naffix\t{}\ndict\t{}\nconj\t{}\nlsv\t{}\n",
            best.level,
            best.l2_coefficient,
            best.features.max_context_ngram,
            best.features.use_affix,
            best.features.use_dict,
            best.features.use_conjunction,
            best.features.use_lsv
        );
        fs::write(path, text)?;
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let grammar = synth::SynthGrammar::load(
        BufReader::new(fs::File::open(&args.grammar)?),
        &args.grammar.display().to_string(),
    )?;
    let ratios: Vec<usize> = args
        .split
        .split(':')
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::Config(format!("bad split ratio `{}`", args.split)))
        })
        .collect::<Result<_>>()?;
    let corpus = synth::generate(&grammar, args.n, args.seed)?;
    let parts = synth::split(corpus.dataset(), &ratios, args.seed)?;
    fs::create_dir_all(&args.out)?;
    let names = ["train.tsv", "tune.tsv", "dev.tsv", "test.tsv"];
    for (part, name) in parts.iter().zip(names) {
        fs::write(args.out.join(name), part.serialize())?;
        println!("{name}\t{} types", part.len());
    }
    if args.emit_resources {
        fs::write(
            args.out.join("affix.txt"),
            grammar.gazetteer().canonical_string(),
        )?;
        fs::write(
            args.out.join("dict.txt"),
            grammar.root_dictionary().canonical_string(),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_from(["morsel", "bogus-subcommand"]), 1);
        assert_eq!(
            run_from(["morsel", "train", "--train", "x.tsv", "--out", "m.bin", "--level", "7"]),
            1
        );
        assert_eq!(run_from(["morsel", "--help"]), 0);
    }

    #[test]
    fn missing_files_exit_two() {
        assert_eq!(
            run_from([
                "morsel",
                "train",
                "--train",
                "/nonexistent/corpus.tsv",
                "--out",
                "/tmp/morsel-test-nonexistent.bin"
            ]),
            2
        );
    }

    #[test]
    fn view_level_requirements() {
        assert_eq!(required_level("lms"), 0);
        assert_eq!(required_level("ums"), 0);
        assert_eq!(required_level("root"), 1);
        assert_eq!(required_level("stem"), 2);
        assert_eq!(required_level("tag"), 4);
    }

    #[test]
    fn fingerprint_mismatches_are_named() {
        use crate::corpus::{Dataset, DatasetRole};
        use crate::training::{fit, TrainConfig};

        let train = Dataset::parse_str("ab\ta:ROOT b:SUFFIX", DatasetRole::Train).unwrap();
        let cfg = TrainConfig {
            max_iterations: 5,
            level: crate::tags::TagsetLevel::new(1).unwrap(),
            ..TrainConfig::default()
        };
        let mut trained_with = Resources::empty();
        trained_with
            .fingerprints
            .push(("dict".into(), sha256_hex(b"home\nwork\n")));
        let model = fit(&train, &cfg, &trained_with).unwrap().model;

        // Same resources: silent.
        assert!(fingerprint_warnings(&model, &trained_with).is_empty());

        // Missing at predict time.
        let warnings = fingerprint_warnings(&model, &Resources::empty());
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("`dict`"), "{warnings:?}");

        // Changed content.
        let mut changed = Resources::empty();
        changed
            .fingerprints
            .push(("dict".into(), sha256_hex(b"other\n")));
        let warnings = fingerprint_warnings(&model, &changed);
        assert!(warnings[0].contains("differs"), "{warnings:?}");

        // Extra resource the model never saw.
        let mut extra = trained_with.clone();
        extra
            .fingerprints
            .push(("affix".into(), sha256_hex(b"-ler\n")));
        let warnings = fingerprint_warnings(&model, &extra);
        assert!(warnings[0].contains("`affix`"), "{warnings:?}");
    }
}
