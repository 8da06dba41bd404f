//! Metrics and error analyses over predicted labeled segmentations.
//!
//! Boundary scores work on sets of internal split positions. A word with
//! several gold analyses is matched against each and keeps the best score
//! (max-over-golds); the same rule applies uniformly to the stemming, root
//! detection and tag classification metrics. Empty-set conventions for
//! boundary F1: both sets empty scores 1, exactly one empty scores 0.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::Dataset;
use crate::errors::{Error, Result};
use crate::tags::{LabeledSegmentation, PositionClass, TagsetLevel};

/// Internal boundary positions of one segmentation, strictly inside the
/// word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySet {
    word_len: usize,
    positions: BTreeSet<usize>,
}

impl BoundarySet {
    pub fn new(word_len: usize, positions: BTreeSet<usize>) -> Result<Self> {
        if positions.iter().any(|&p| p == 0 || p >= word_len) {
            return Err(Error::EvalInput(format!("boundary outside 1..{word_len}")));
        }
        Ok(BoundarySet {
            word_len,
            positions,
        })
    }

    pub fn from_ls(ls: &LabeledSegmentation) -> Self {
        BoundarySet {
            word_len: ls.word().chars().count(),
            positions: ls.boundaries().into_iter().collect(),
        }
    }

    pub fn positions(&self) -> &BTreeSet<usize> {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Precision, recall and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrF1 {
    fn from_counts(tp: usize, n_pred: usize, n_gold: usize) -> PrF1 {
        if n_pred == 0 && n_gold == 0 {
            return PrF1 {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            };
        }
        let precision = if n_pred == 0 {
            0.0
        } else {
            tp as f64 / n_pred as f64
        };
        let recall = if n_gold == 0 {
            0.0
        } else {
            tp as f64 / n_gold as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrF1 {
            precision,
            recall,
            f1,
        }
    }
}

fn boundary_score(pred: &BoundarySet, gold: &BoundarySet) -> PrF1 {
    let tp = pred.positions.intersection(&gold.positions).count();
    PrF1::from_counts(tp, pred.len(), gold.len())
}

/// Index of the gold analysis maximizing boundary F1 (first on ties).
pub fn best_gold_index(pred: &LabeledSegmentation, golds: &[LabeledSegmentation]) -> usize {
    let pb = BoundarySet::from_ls(pred);
    let mut best = 0;
    let mut best_f1 = f64::NEG_INFINITY;
    for (i, gold) in golds.iter().enumerate() {
        let f1 = boundary_score(&pb, &BoundarySet::from_ls(gold)).f1;
        if f1 > best_f1 {
            best_f1 = f1;
            best = i;
        }
    }
    best
}

/// Boundary precision/recall/F1 of a prediction against each gold; returns
/// the scores of the F1-maximizing gold.
pub fn boundary_f1(pred: &LabeledSegmentation, golds: &[LabeledSegmentation]) -> Result<PrF1> {
    if golds.is_empty() {
        return Err(Error::EvalInput("no gold analyses".into()));
    }
    for gold in golds {
        if gold.word() != pred.word() {
            return Err(Error::EvalInput(format!(
                "prediction for `{}` scored against gold for `{}`",
                pred.word(),
                gold.word()
            )));
        }
    }
    let pb = BoundarySet::from_ls(pred);
    let mut best: Option<PrF1> = None;
    for gold in golds {
        let score = boundary_score(&pb, &BoundarySet::from_ls(gold));
        if best.is_none_or(|b| score.f1 > b.f1) {
            best = Some(score);
        }
    }
    Ok(best.expect("at least one gold"))
}

/// Per-word boundary scores of one evaluated word.
#[derive(Debug, Clone, Serialize)]
pub struct WordScore {
    pub word: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Aggregated metrics; which optional fields are filled depends on the
/// task.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub task: String,
    pub n_words: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stem_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tag_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub per_feature: BTreeMap<String, PrF1>,
    #[serde(skip)]
    pub per_word: Vec<WordScore>,
}

impl EvalReport {
    fn empty(task: &str, n_words: usize) -> Self {
        EvalReport {
            task: task.to_owned(),
            n_words,
            macro_precision: None,
            macro_recall: None,
            macro_f1: None,
            root_accuracy: None,
            stem_accuracy: None,
            tag_accuracy: None,
            feature_macro_f1: None,
            per_feature: BTreeMap::new(),
            per_word: Vec::new(),
        }
    }

    /// One `metric<TAB>value` row per filled field.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "task\t{}", self.task);
        let _ = writeln!(out, "n_words\t{}", self.n_words);
        let mut row = |name: &str, v: Option<f64>| {
            if let Some(v) = v {
                let _ = writeln!(out, "{name}\t{v:.6}");
            }
        };
        row("macro_precision", self.macro_precision);
        row("macro_recall", self.macro_recall);
        row("macro_f1", self.macro_f1);
        row("root_accuracy", self.root_accuracy);
        row("stem_accuracy", self.stem_accuracy);
        row("tag_accuracy", self.tag_accuracy);
        row("feature_macro_f1", self.feature_macro_f1);
        for (name, s) in &self.per_feature {
            let _ = writeln!(out, "feature_f1:{name}\t{:.6}", s.f1);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Pairs each prediction with its dataset entry; errors list missing or
/// unexpected words.
fn align<'a>(
    preds: &'a [LabeledSegmentation],
    data: &'a Dataset,
) -> Result<Vec<(&'a LabeledSegmentation, &'a [LabeledSegmentation])>> {
    let mut by_word: HashMap<&str, &LabeledSegmentation> = HashMap::new();
    for p in preds {
        if by_word.insert(p.word(), p).is_some() {
            return Err(Error::EvalInput(format!(
                "duplicate prediction for `{}`",
                p.word()
            )));
        }
    }
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(data.len());
    for entry in data.entries() {
        match by_word.remove(entry.word.as_str()) {
            Some(p) => out.push((p, entry.analyses.as_slice())),
            None => missing.push(entry.word.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::EvalInput(format!(
            "missing predictions for: {}",
            missing.join(", ")
        )));
    }
    if !by_word.is_empty() {
        let mut extra: Vec<&str> = by_word.keys().copied().collect();
        extra.sort_unstable();
        return Err(Error::EvalInput(format!(
            "predictions for words not in the dataset: {}",
            extra.join(", ")
        )));
    }
    Ok(out)
}

/// Unweighted mean of per-word max-over-golds boundary scores.
pub fn macro_f1(preds: &[LabeledSegmentation], data: &Dataset) -> Result<EvalReport> {
    let aligned = align(preds, data)?;
    let mut report = EvalReport::empty("seg", aligned.len());
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for (pred, golds) in &aligned {
        let score = boundary_f1(pred, golds)?;
        sp += score.precision;
        sr += score.recall;
        sf += score.f1;
        report.per_word.push(WordScore {
            word: pred.word().to_owned(),
            precision: score.precision,
            recall: score.recall,
            f1: score.f1,
        });
    }
    let n = aligned.len().max(1) as f64;
    report.macro_precision = Some(sp / n);
    report.macro_recall = Some(sr / n);
    report.macro_f1 = Some(sf / n);
    Ok(report)
}

/// Fractions of words whose derived root list / stem string exactly match
/// some gold's. Labels must be at level >= 2.
pub fn stem_and_root_accuracy(preds: &[LabeledSegmentation], data: &Dataset) -> Result<(f64, f64)> {
    let aligned = align(preds, data)?;
    let mut root_hits = 0usize;
    let mut stem_hits = 0usize;
    for (pred, golds) in &aligned {
        let pred_roots = pred.roots_view()?;
        let pred_stem = pred.stem_view()?;
        let mut root_ok = false;
        let mut stem_ok = false;
        for gold in *golds {
            if gold.roots_view()? == pred_roots {
                root_ok = true;
            }
            if gold.stem_view()? == pred_stem {
                stem_ok = true;
            }
        }
        root_hits += usize::from(root_ok);
        stem_hits += usize::from(stem_ok);
    }
    let n = aligned.len().max(1) as f64;
    Ok((root_hits as f64 / n, stem_hits as f64 / n))
}

/// Tag classification metrics over inflectional bundles.
#[derive(Debug, Clone)]
pub struct TagMetrics {
    /// Exact match of the ordered bundle against any gold.
    pub accuracy: f64,
    /// Macro F1 over inflectional feature types with >= 1 gold occurrence.
    pub feature_macro_f1: f64,
    pub per_feature: BTreeMap<String, PrF1>,
}

fn multiset(items: &[String]) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for it in items {
        *m.entry(it.as_str()).or_insert(0) += 1;
    }
    m
}

fn bundle_f1(pred: &BTreeMap<&str, usize>, gold: &BTreeMap<&str, usize>) -> f64 {
    let tp: usize = pred
        .iter()
        .map(|(k, &c)| c.min(gold.get(k).copied().unwrap_or(0)))
        .sum();
    let np: usize = pred.values().sum();
    let ng: usize = gold.values().sum();
    PrF1::from_counts(tp, np, ng).f1
}

/// Computes full-bundle accuracy and per-feature-type macro F1.
///
/// `preds` holds one `(word, ordered bundle)` pair per dataset word; gold
/// bundles are derived from the gold labels. Feature counts for each word
/// accumulate against the gold whose bundle overlaps the prediction best.
pub fn tag_classification_metrics(
    preds: &[(String, Vec<String>)],
    data: &Dataset,
) -> Result<TagMetrics> {
    let mut by_word: HashMap<&str, &[String]> = HashMap::new();
    for (word, bundle) in preds {
        if by_word.insert(word.as_str(), bundle.as_slice()).is_some() {
            return Err(Error::EvalInput(format!(
                "duplicate prediction for `{word}`"
            )));
        }
    }
    let mut hits = 0usize;
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new(); // tp, fp, fn
    let mut n = 0usize;
    for entry in data.entries() {
        let Some(pred_bundle) = by_word.get(entry.word.as_str()) else {
            return Err(Error::EvalInput(format!(
                "missing predictions for: {}",
                entry.word
            )));
        };
        n += 1;
        let gold_bundles: Vec<Vec<String>> = entry
            .analyses
            .iter()
            .map(|g| g.morph_tag_view().map(|(b, _)| b))
            .collect::<Result<_>>()?;
        if gold_bundles.iter().any(|g| g == *pred_bundle) {
            hits += 1;
        }
        // Per-feature counts against the best-overlapping gold.
        let pred_set = multiset(pred_bundle);
        let mut best: Option<(f64, &Vec<String>)> = None;
        for gold in &gold_bundles {
            let f1 = bundle_f1(&pred_set, &multiset(gold));
            if best.is_none_or(|(bf, _)| f1 > bf) {
                best = Some((f1, gold));
            }
        }
        let gold = best.expect("at least one gold").1;
        let gold_set = multiset(gold);
        let mut types: BTreeSet<&str> = pred_set.keys().copied().collect();
        types.extend(gold_set.keys().copied());
        for ty in types {
            let p = pred_set.get(ty).copied().unwrap_or(0);
            let g = gold_set.get(ty).copied().unwrap_or(0);
            let tp = p.min(g);
            let slot = counts.entry(ty.to_owned()).or_insert((0, 0, 0));
            slot.0 += tp;
            slot.1 += p - tp;
            slot.2 += g - tp;
        }
    }
    let mut per_feature = BTreeMap::new();
    let mut f1_sum = 0.0;
    let mut f1_n = 0usize;
    for (ty, (tp, fp, fn_)) in &counts {
        if tp + fn_ == 0 {
            continue; // type never occurs in gold
        }
        let score = PrF1::from_counts(*tp, tp + fp, tp + fn_);
        f1_sum += score.f1;
        f1_n += 1;
        per_feature.insert(ty.clone(), score);
    }
    Ok(TagMetrics {
        accuracy: hits as f64 / n.max(1) as f64,
        feature_macro_f1: if f1_n == 0 { 0.0 } else { f1_sum / f1_n as f64 },
        per_feature,
    })
}

/// Undersegmentation counts: how often two adjacent gold segments were
/// covered by a single predicted segment, keyed by the gold tag pair
/// projected to `level`.
#[derive(Debug, Clone, Default)]
pub struct UndersegMatrix {
    pub counts: BTreeMap<(String, String), u64>,
}

impl UndersegMatrix {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Square matrix as TSV, suitable for external heatmap plotting.
    pub fn to_tsv(&self) -> String {
        let mut labels: BTreeSet<&String> = BTreeSet::new();
        for (a, b) in self.counts.keys() {
            labels.insert(a);
            labels.insert(b);
        }
        let mut out = String::new();
        out.push_str("left\\right");
        for l in &labels {
            let _ = write!(out, "\t{l}");
        }
        out.push('\n');
        for a in &labels {
            let _ = write!(out, "{a}");
            for b in &labels {
                let c = self
                    .counts
                    .get(&((*a).clone(), (*b).clone()))
                    .copied()
                    .unwrap_or(0);
                let _ = write!(out, "\t{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the undersegmentation matrix against max-F1-matched golds.
pub fn undersegmentation_matrix(
    preds: &[LabeledSegmentation],
    data: &Dataset,
    level: TagsetLevel,
) -> Result<UndersegMatrix> {
    let aligned = align(preds, data)?;
    let mut matrix = UndersegMatrix::default();
    for (pred, golds) in &aligned {
        let gold = &golds[best_gold_index(pred, golds)];
        let pred_bounds: BTreeSet<usize> = pred.boundaries().into_iter().collect();
        let gold_bounds = gold.boundaries();
        for (i, &b) in gold_bounds.iter().enumerate() {
            if !pred_bounds.contains(&b) {
                let left = gold.segments()[i].1.project(level).to_string();
                let right = gold.segments()[i + 1].1.project(level).to_string();
                *matrix.counts.entry((left, right)).or_insert(0) += 1;
            }
        }
    }
    Ok(matrix)
}

/// Root and affix types observed in training gold, the reference for
/// novelty counting.
#[derive(Debug, Clone, Default)]
pub struct MorphInventory {
    pub roots: BTreeSet<String>,
    pub affixes: BTreeSet<String>,
}

impl MorphInventory {
    pub fn from_dataset(data: &Dataset) -> Self {
        let mut inv = MorphInventory::default();
        for ls in data.analyses() {
            for (morph, tag) in ls.segments() {
                match tag.position_class() {
                    PositionClass::Root => {
                        inv.roots.insert(morph.clone());
                    }
                    PositionClass::Prefix | PositionClass::Suffix => {
                        inv.affixes.insert(morph.clone());
                    }
                    _ => {}
                }
            }
        }
        inv
    }
}

/// Novel morph types correctly identified: predicted segments that match a
/// gold segment's span and position class and are absent from the training
/// inventory. Types are counted once.
#[derive(Debug, Clone, Default)]
pub struct NovelMorphCounts {
    pub roots_found: BTreeSet<String>,
    pub affixes_found: BTreeSet<String>,
}

pub fn novel_morph_counts(
    preds: &[LabeledSegmentation],
    data: &Dataset,
    training: &MorphInventory,
) -> Result<NovelMorphCounts> {
    let aligned = align(preds, data)?;
    let mut out = NovelMorphCounts::default();
    for (pred, golds) in &aligned {
        let gold = &golds[best_gold_index(pred, golds)];
        let gold_spans: HashSet<(usize, usize, PositionClass)> = {
            let mut set = HashSet::new();
            let mut pos = 0;
            for (morph, tag) in gold.segments() {
                let len = morph.chars().count();
                set.insert((pos, pos + len, tag.position_class()));
                pos += len;
            }
            set
        };
        let mut pos = 0;
        for (morph, tag) in pred.segments() {
            let len = morph.chars().count();
            let class = tag.position_class();
            let span_matches = gold_spans.contains(&(pos, pos + len, class));
            pos += len;
            if !span_matches {
                continue;
            }
            match class {
                PositionClass::Root => {
                    if !training.roots.contains(morph) {
                        out.roots_found.insert(morph.clone());
                    }
                }
                PositionClass::Prefix | PositionClass::Suffix
                    if !training.affixes.contains(morph) =>
                {
                    out.affixes_found.insert(morph.clone());
                }
                _ => {}
            }
        }
    }
    Ok(out)
}
