//! Sparse feature extraction for candidate `(word, span, label, previous
//! label)` tuples.
//!
//! Feature-string grammar (stable, stored verbatim in model files):
//!
//! * `CTX:<side>:<len>:<substring>` — character n-gram to the left (`L`) or
//!   right (`R`) of a boundary, `⊥`-padded at the word edges;
//! * `GAZ:PRE` / `GAZ:SUF` — the segment occurs in the affix gazetteer;
//! * `DICT:HIT`, `DICT:LEN:<bucket>` — the segment is a dictionary word;
//! * `SEGTAG:<label>:<segment>` — tag–substring conjunction, restricted by
//!   vocabulary freezing to pairs observed in training gold;
//! * `LSV:S:≥<t>` / `LSV:P:≥<t>` — binned letter successor/predecessor
//!   variety at a boundary;
//! * `TRANS:<prev>:<label>` — label transition, with the reserved previous
//!   label `BEGIN` for spans starting at position 0.
//!
//! All features are binary: every fired feature has value 1.0, and repeats
//! within one candidate collapse (union semantics). Every family except
//! `TRANS` is emitted conjoined with the segment's label, written
//! `<feature>|<label>`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::ops::Range;

use crate::corpus::{AffixGazetteer, DictionarySet};
use crate::errors::{Error, Result};
use crate::tags::{MorphTag, BEGIN_LABEL};

/// Word-edge padding character for context windows.
pub const EDGE_SENTINEL: char = '⊥';

/// Which side of a boundary a context window reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Feature extraction switches and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    /// Maximal character n-gram length for boundary context features.
    pub max_context_ngram: usize,
    pub use_affix: bool,
    pub use_dict: bool,
    pub use_conjunction: bool,
    pub use_lsv: bool,
    /// Strictly increasing bin thresholds for letter successor variety.
    pub lsv_thresholds: Vec<u32>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            max_context_ngram: 3,
            use_affix: false,
            use_dict: false,
            use_conjunction: true,
            use_lsv: false,
            lsv_thresholds: vec![2, 4, 8, 16],
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_context_ngram == 0 || self.max_context_ngram > 8 {
            return Err(Error::Config(format!(
                "max_context_ngram must be in 1..=8, got {}",
                self.max_context_ngram
            )));
        }
        if !self.lsv_thresholds.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(
                "lsv_thresholds must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Injective map from feature strings to dense indices.
///
/// Two phases: a single-writer build phase that grows on unseen strings,
/// and a frozen phase in which unseen strings map to nothing and the map
/// is safe to share read-only across threads.
#[derive(Debug, Clone, Default)]
pub struct FeatureVocabulary {
    index: HashMap<String, u32>,
    names: Vec<String>,
    frozen: bool,
}

impl FeatureVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a frozen vocabulary from names in index order.
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i as u32).is_some() {
                return Err(Error::ModelFormat(format!(
                    "duplicate feature string `{name}`"
                )));
            }
        }
        Ok(FeatureVocabulary {
            index,
            names,
            frozen: true,
        })
    }

    /// Returns the index of `name`, interning it when unfrozen. Frozen
    /// vocabularies return `None` for unseen strings.
    pub fn resolve(&mut self, name: &str) -> Option<u32> {
        if let Some(&i) = self.index.get(name) {
            return Some(i);
        }
        if self.frozen {
            return None;
        }
        let i = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        Some(i)
    }

    pub fn lookup(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: u32) -> &str {
        &self.names[index as usize]
    }

    /// Feature strings in index order.
    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Sparse vector with strictly increasing indices and finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn empty() -> Self {
        SparseVector {
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a binary vector from indices; repeats collapse to one entry.
    pub fn from_indices_unit(mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        let values = vec![1.0; indices.len()];
        SparseVector { indices, values }
    }

    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        pairs.sort_unstable_by_key(|&(i, _)| i);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Config(format!(
                    "duplicate index {} in sparse vector",
                    w[0].0
                )));
            }
        }
        for &(_, v) in &pairs {
            if !v.is_finite() {
                return Err(Error::Config("non-finite value in sparse vector".into()));
            }
        }
        let (indices, values) = pairs.into_iter().unzip();
        Ok(SparseVector { indices, values })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.iter().map(|(i, v)| weights[i as usize] * v).sum()
    }
}

/// Letter successor/predecessor variety counts from an unlabeled corpus.
#[derive(Debug, Clone, Default)]
pub struct LsvTable {
    successors: HashMap<String, u32>,
    predecessors: HashMap<String, u32>,
}

impl LsvTable {
    /// Counts, for every non-empty proper prefix of every corpus word, the
    /// distinct letters that follow it, and mirrors the count for suffixes.
    pub fn build<I, S>(corpus: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut succ: HashMap<String, HashSet<char>> = HashMap::new();
        let mut pred: HashMap<String, HashSet<char>> = HashMap::new();
        for word in corpus {
            let chars: Vec<char> = word.as_ref().chars().collect();
            for i in 1..chars.len() {
                let prefix: String = chars[..i].iter().collect();
                succ.entry(prefix).or_default().insert(chars[i]);
                let suffix: String = chars[i..].iter().collect();
                pred.entry(suffix).or_default().insert(chars[i - 1]);
            }
        }
        LsvTable {
            successors: succ.into_iter().map(|(k, v)| (k, v.len() as u32)).collect(),
            predecessors: pred.into_iter().map(|(k, v)| (k, v.len() as u32)).collect(),
        }
    }

    /// Distinct letters observed after `prefix`; 0 when unobserved.
    pub fn successor_variety(&self, prefix: &str) -> u32 {
        self.successors.get(prefix).copied().unwrap_or(0)
    }

    /// Distinct letters observed before `suffix`; 0 when unobserved.
    pub fn predecessor_variety(&self, suffix: &str) -> u32 {
        self.predecessors.get(suffix).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.successors.is_empty() && self.predecessors.is_empty()
    }
}

/// External lookup resources shared by feature extraction, plus the
/// fingerprints recorded in model files.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub gazetteer: Option<AffixGazetteer>,
    pub dictionary: Option<DictionarySet>,
    pub lsv: Option<LsvTable>,
    /// `(name, sha256-hex)` pairs of the loaded resource inputs.
    pub fingerprints: Vec<(String, String)>,
}

impl Resources {
    pub fn empty() -> Self {
        Self::default()
    }
}

/// Context n-gram features at a boundary: for each length `1..=k`, the
/// window ending (left) or starting (right) at the boundary, `⊥`-padded
/// where it crosses a word edge.
pub fn context_ngram_features(word: &[char], boundary: usize, side: Side, k: usize) -> Vec<String> {
    assert!(boundary <= word.len(), "boundary out of range");
    let mut out = Vec::with_capacity(k);
    let mut buf = String::new();
    for len in 1..=k {
        buf.clear();
        write_context(&mut buf, word, boundary, side, len);
        out.push(buf.clone());
    }
    out
}

fn write_context(buf: &mut String, word: &[char], boundary: usize, side: Side, len: usize) {
    let side_char = match side {
        Side::Left => 'L',
        Side::Right => 'R',
    };
    let _ = write!(buf, "CTX:{side_char}:{len}:");
    match side {
        Side::Left => {
            for offset in (1..=len).rev() {
                match boundary.checked_sub(offset) {
                    Some(i) => buf.push(word[i]),
                    None => buf.push(EDGE_SENTINEL),
                }
            }
        }
        Side::Right => {
            for offset in 0..len {
                match word.get(boundary + offset) {
                    Some(&c) => buf.push(c),
                    None => buf.push(EDGE_SENTINEL),
                }
            }
        }
    }
}

/// Binary gazetteer features: `GAZ:SUF` / `GAZ:PRE` when the whole segment
/// occurs in the corresponding affix list.
pub fn gazetteer_features(segment: &str, gaz: &AffixGazetteer) -> Vec<String> {
    let mut out = Vec::new();
    if gaz.contains_prefix(segment) {
        out.push("GAZ:PRE".to_owned());
    }
    if gaz.contains_suffix(segment) {
        out.push("GAZ:SUF".to_owned());
    }
    out
}

fn len_bucket(len: usize) -> &'static str {
    match len {
        1 => "1",
        2 => "2",
        3 => "3",
        4 => "4",
        _ => "5+",
    }
}

/// Dictionary features: `DICT:HIT` plus a length-bucket conjunction when
/// the segment is a dictionary word.
pub fn dictionary_features(segment: &str, dict: &DictionarySet) -> Vec<String> {
    if dict.contains(segment) {
        vec![
            "DICT:HIT".to_owned(),
            format!("DICT:LEN:{}", len_bucket(segment.chars().count())),
        ]
    } else {
        Vec::new()
    }
}

/// The tag–substring conjunction feature.
pub fn conjunction_feature(segment: &str, label: &MorphTag) -> String {
    format!("SEGTAG:{label}:{segment}")
}

/// Binned letter-variety features at a boundary: the successor variety of
/// the word's prefix ending there and the predecessor variety of its
/// suffix, thresholded.
pub fn lsv_features(
    word: &[char],
    boundary: usize,
    table: &LsvTable,
    thresholds: &[u32],
) -> Vec<String> {
    assert!(boundary <= word.len(), "boundary out of range");
    let mut out = Vec::new();
    if boundary > 0 {
        let prefix: String = word[..boundary].iter().collect();
        let sv = table.successor_variety(&prefix);
        for &t in thresholds {
            if sv >= t {
                out.push(format!("LSV:S:≥{t}"));
            }
        }
    }
    if boundary < word.len() {
        let suffix: String = word[boundary..].iter().collect();
        let pv = table.predecessor_variety(&suffix);
        for &t in thresholds {
            if pv >= t {
                out.push(format!("LSV:P:≥{t}"));
            }
        }
    }
    out
}

/// Stateless extractor bundling configuration and resources.
///
/// `segtag_allow`, when set, restricts conjunction emission to the given
/// `(segment, label)` pairs; it is used only while building a vocabulary so
/// that freezing has the documented effect of limiting conjunctions to
/// pairs observed in training gold.
pub struct Extractor<'a> {
    pub config: &'a FeatureConfig,
    pub resources: &'a Resources,
    pub segtag_allow: Option<&'a HashSet<(String, String)>>,
}

impl<'a> Extractor<'a> {
    pub fn new(config: &'a FeatureConfig, resources: &'a Resources) -> Self {
        Extractor {
            config,
            resources,
            segtag_allow: None,
        }
    }

    /// Emits every label-conjoined feature string for a span: boundary
    /// context windows at both span edges, then the gazetteer, dictionary,
    /// conjunction and letter-variety families.
    pub fn emit_base<F>(&self, word: &[char], span: Range<usize>, label: &str, mut sink: F)
    where
        F: FnMut(&str),
    {
        let mut buf = String::new();
        let k = self.config.max_context_ngram;
        for boundary in [span.start, span.end] {
            for side in [Side::Left, Side::Right] {
                for len in 1..=k {
                    buf.clear();
                    write_context(&mut buf, word, boundary, side, len);
                    let _ = write!(buf, "|{label}");
                    sink(&buf);
                }
            }
        }

        let segment: String = word[span.clone()].iter().collect();
        if self.config.use_affix {
            if let Some(gaz) = &self.resources.gazetteer {
                if gaz.contains_prefix(&segment) {
                    buf.clear();
                    let _ = write!(buf, "GAZ:PRE|{label}");
                    sink(&buf);
                }
                if gaz.contains_suffix(&segment) {
                    buf.clear();
                    let _ = write!(buf, "GAZ:SUF|{label}");
                    sink(&buf);
                }
            }
        }
        if self.config.use_dict {
            if let Some(dict) = &self.resources.dictionary {
                if dict.contains(&segment) {
                    buf.clear();
                    let _ = write!(buf, "DICT:HIT|{label}");
                    sink(&buf);
                    buf.clear();
                    let _ = write!(buf, "DICT:LEN:{}|{label}", len_bucket(span.len()));
                    sink(&buf);
                }
            }
        }
        if self.config.use_conjunction {
            let allowed = match self.segtag_allow {
                Some(allow) => allow.contains(&(segment.clone(), label.to_owned())),
                None => true,
            };
            if allowed {
                buf.clear();
                let _ = write!(buf, "SEGTAG:{label}:{segment}");
                sink(&buf);
            }
        }
        if self.config.use_lsv {
            if let Some(table) = &self.resources.lsv {
                for boundary in [span.start, span.end] {
                    for s in lsv_features(word, boundary, table, &self.config.lsv_thresholds) {
                        buf.clear();
                        let _ = write!(buf, "{s}|{label}");
                        sink(&buf);
                    }
                }
            }
        }
    }

    /// The bare transition feature string.
    pub fn trans_feature(prev: Option<&str>, label: &str) -> String {
        format!("TRANS:{}:{label}", prev.unwrap_or(BEGIN_LABEL))
    }

    /// Full candidate featurization: the union of the label-conjoined
    /// families and the transition feature, mapped through the vocabulary.
    /// `prev = None` stands for the reserved `BEGIN` label.
    pub fn featurize(
        &self,
        word: &[char],
        span: Range<usize>,
        label: &MorphTag,
        prev: Option<&MorphTag>,
        vocab: &mut FeatureVocabulary,
    ) -> Result<SparseVector> {
        if span.start >= span.end || span.end > word.len() {
            return Err(Error::SpanOutOfRange {
                start: span.start,
                end: span.end,
                len: word.len(),
            });
        }
        let label_str = label.to_string();
        let prev_str = prev.map(|t| t.to_string());
        let mut indices = Vec::new();
        self.emit_base(word, span, &label_str, |s| {
            if let Some(i) = vocab.resolve(s) {
                indices.push(i);
            }
        });
        let trans = Self::trans_feature(prev_str.as_deref(), &label_str);
        if let Some(i) = vocab.resolve(&trans) {
            indices.push(i);
        }
        Ok(SparseVector::from_indices_unit(indices))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn context_left_windows() {
        let w = chars("sees");
        assert_eq!(
            context_ngram_features(&w, 2, Side::Left, 2),
            vec!["CTX:L:1:e", "CTX:L:2:se"]
        );
        assert_eq!(
            context_ngram_features(&w, 0, Side::Left, 1),
            vec!["CTX:L:1:⊥"]
        );
    }

    #[test]
    fn context_right_windows() {
        let w = chars("talking");
        assert_eq!(
            context_ngram_features(&w, 4, Side::Right, 3),
            vec!["CTX:R:1:i", "CTX:R:2:in", "CTX:R:3:ing"]
        );
        // Right window padded past the word end.
        let ab = chars("ab");
        assert_eq!(
            context_ngram_features(&ab, 1, Side::Right, 3),
            vec!["CTX:R:1:b", "CTX:R:2:b⊥", "CTX:R:3:b⊥⊥"]
        );
    }

    #[test]
    fn gazetteer_hits() {
        let indo = AffixGazetteer::parse_str("-kau\n-an\n-nya\n-ku\n-mu\n").unwrap();
        assert_eq!(gazetteer_features("an", &indo), vec!["GAZ:SUF"]);
        let zulu = AffixGazetteer::parse_str("i-\nu-\nza-\n").unwrap();
        assert_eq!(gazetteer_features("za", &zulu), vec!["GAZ:PRE"]);
        assert!(gazetteer_features("xyz", &zulu).is_empty());
    }

    #[test]
    fn dictionary_hits() {
        let dict = DictionarySet::from_words(["home", "work"]);
        assert_eq!(
            dictionary_features("home", &dict),
            vec!["DICT:HIT", "DICT:LEN:4"]
        );
        assert_eq!(
            dictionary_features("work", &dict),
            vec!["DICT:HIT", "DICT:LEN:4"]
        );
        assert!(dictionary_features("se", &dict).is_empty());
    }

    #[test]
    fn conjunction_string() {
        let tag = MorphTag::parse("SUFFIX:INFL:NOUN:NUMBER:PLURAL").unwrap();
        assert_eq!(
            conjunction_feature("ler", &tag),
            "SEGTAG:SUFFIX:INFL:NOUN:NUMBER:PLURAL:ler"
        );
    }

    #[test]
    fn lsv_counts() {
        let table = LsvTable::build(["talked", "talks", "talking"]);
        assert_eq!(table.successor_variety("talk"), 3);
        let single = LsvTable::build(["aaa"]);
        assert_eq!(single.successor_variety("aa"), 1);
        let abc = LsvTable::build(["ab", "ac", "ad"]);
        assert_eq!(abc.successor_variety("a"), 3);
        assert_eq!(
            lsv_features(&chars("ab"), 1, &abc, &[2, 3]),
            vec!["LSV:S:≥2", "LSV:S:≥3"]
        );
    }

    fn featurize_once(
        word: &str,
        span: Range<usize>,
        label: &str,
        prev: Option<&str>,
        config: &FeatureConfig,
        resources: &Resources,
        vocab: &mut FeatureVocabulary,
    ) -> SparseVector {
        let ex = Extractor::new(config, resources);
        let label = MorphTag::parse(label).unwrap();
        let prev = prev.map(|p| MorphTag::parse(p).unwrap());
        ex.featurize(&chars(word), span, &label, prev.as_ref(), vocab)
            .unwrap()
    }

    #[test]
    fn featurize_contains_begin_transition() {
        let cfg = FeatureConfig::default();
        let res = Resources::empty();
        let mut vocab = FeatureVocabulary::new();
        let v = featurize_once("a", 0..1, "SEGMENT", None, &cfg, &res, &mut vocab);
        let names: Vec<&str> = v.indices().iter().map(|&i| vocab.name(i)).collect();
        assert!(names.contains(&"TRANS:BEGIN:SEGMENT"), "{names:?}");
        assert!(v.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn featurize_deterministic_and_pure() {
        let cfg = FeatureConfig {
            use_affix: true,
            use_dict: true,
            ..FeatureConfig::default()
        };
        let res = Resources {
            gazetteer: Some(AffixGazetteer::parse_str("-ler\n").unwrap()),
            dictionary: Some(DictionarySet::from_words(["genç"])),
            ..Resources::empty()
        };
        let mut vocab = FeatureVocabulary::new();
        let a = featurize_once(
            "gençleşmelerin",
            9..12,
            "SUFFIX:INFL:NOUN:NUMBER:PLURAL",
            Some("SUFFIX:DERIV:NOUN"),
            &cfg,
            &res,
            &mut vocab,
        );
        let size_after_first = vocab.len();
        let b = featurize_once(
            "gençleşmelerin",
            9..12,
            "SUFFIX:INFL:NOUN:NUMBER:PLURAL",
            Some("SUFFIX:DERIV:NOUN"),
            &cfg,
            &res,
            &mut vocab,
        );
        assert_eq!(a, b);
        // Re-featurizing grows nothing: idempotent after the first pass.
        assert_eq!(vocab.len(), size_after_first);
        let names: Vec<&str> = a.indices().iter().map(|&i| vocab.name(i)).collect();
        assert!(names.contains(&"SEGTAG:SUFFIX:INFL:NOUN:NUMBER:PLURAL:ler"));
        assert!(names.contains(&"TRANS:SUFFIX:DERIV:NOUN:SUFFIX:INFL:NOUN:NUMBER:PLURAL"));
        assert!(names.contains(&"GAZ:SUF|SUFFIX:INFL:NOUN:NUMBER:PLURAL"));
    }

    #[test]
    fn frozen_vocabulary_drops_unseen() {
        let cfg = FeatureConfig::default();
        let res = Resources::empty();
        let mut vocab = FeatureVocabulary::new();
        featurize_once("ab", 0..1, "SEGMENT", None, &cfg, &res, &mut vocab);
        vocab.freeze();
        let before = vocab.len();
        let v = featurize_once("xy", 0..2, "SEGMENT", None, &cfg, &res, &mut vocab);
        assert_eq!(vocab.len(), before);
        // Unseen context strings dropped; nothing panics.
        for &i in v.indices() {
            assert!((i as usize) < before);
        }
    }

    #[test]
    fn label_crossproduct_changes_strings_not_families() {
        let cfg = FeatureConfig::default();
        let res = Resources::empty();
        let ex = Extractor::new(&cfg, &res);
        let w = chars("abcd");
        let mut with_root = Vec::new();
        ex.emit_base(&w, 1..3, "ROOT", |s| with_root.push(s.to_owned()));
        let mut with_suffix = Vec::new();
        ex.emit_base(&w, 1..3, "SUFFIX", |s| with_suffix.push(s.to_owned()));
        assert_eq!(with_root.len(), with_suffix.len());
        for (a, b) in with_root.iter().zip(&with_suffix) {
            assert_ne!(a, b);
            // Same family prefix either way.
            assert_eq!(a.split(':').next(), b.split(':').next());
        }
    }

    #[test]
    fn span_out_of_range_rejected() {
        let cfg = FeatureConfig::default();
        let res = Resources::empty();
        let ex = Extractor::new(&cfg, &res);
        let mut vocab = FeatureVocabulary::new();
        let tag = MorphTag::parse("SEGMENT").unwrap();
        assert!(ex
            .featurize(&chars("ab"), 1..5, &tag, None, &mut vocab)
            .is_err());
        assert!(ex
            .featurize(&chars("ab"), 1..1, &tag, None, &mut vocab)
            .is_err());
    }

    #[test]
    fn sparse_vector_invariants() {
        let v = SparseVector::from_indices_unit(vec![5, 2, 5, 9]);
        assert_eq!(v.indices(), &[2, 5, 9]);
        assert!(v.values().iter().all(|&x| x == 1.0));
        assert!(SparseVector::from_pairs(vec![(1, 0.5), (1, 0.7)]).is_err());
        let dot = SparseVector::from_pairs(vec![(0, 1.0), (2, 2.0)])
            .unwrap()
            .dot(&[3.0, 10.0, 0.5]);
        assert!((dot - 4.0).abs() < 1e-12);
    }
}
