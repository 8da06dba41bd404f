//! Annotated corpora, affix gazetteers, dictionaries and data splits.
//!
//! Corpus format, one entry per line (`#` starts a comment):
//!
//! ```text
//! word<TAB>analysis(, analysis)*
//! ```
//!
//! where each analysis is a sequence of space-separated `morph:TAG` tokens
//! and `TAG` is the colon-joined tag serialization. A word may carry several
//! gold analyses, comma-separated; their order is preserved. All input is
//! NFC-normalized at load; casefolding is off (case is morphologically
//! meaningful in several of the target languages).

use std::collections::BTreeSet;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unicode_normalization::UnicodeNormalization;

use crate::errors::{Error, Result};
use crate::tags::{LabeledSegmentation, MorphTag};

/// Which slice of the experimental protocol a dataset plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetRole {
    Train,
    Tune,
    Dev,
    Test,
    Unlabeled,
}

impl DatasetRole {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetRole::Train => "train",
            DatasetRole::Tune => "tune",
            DatasetRole::Dev => "dev",
            DatasetRole::Test => "test",
            DatasetRole::Unlabeled => "unlabeled",
        }
    }
}

/// One word type with its gold analyses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub word: String,
    pub analyses: Vec<LabeledSegmentation>,
}

/// A set of distinct word types, each with one or more gold analyses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    role: DatasetRole,
    entries: Vec<DatasetEntry>,
}

fn nfc(s: &str) -> String {
    s.nfc().collect()
}

impl Dataset {
    /// Validates and wraps entries: distinct words, concatenation equal to
    /// the word, and at least one analysis per entry in labeled roles.
    pub fn from_entries(role: DatasetRole, entries: Vec<DatasetEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for entry in &entries {
            if !seen.insert(entry.word.clone()) {
                return Err(Error::DuplicateWord {
                    word: entry.word.clone(),
                });
            }
            if role != DatasetRole::Unlabeled && entry.analyses.is_empty() {
                return Err(Error::Segmentation {
                    word: entry.word.clone(),
                    reason: "labeled dataset entry without a gold analysis".into(),
                });
            }
            for ls in &entry.analyses {
                if ls.word() != entry.word {
                    return Err(Error::Segmentation {
                        word: entry.word.clone(),
                        reason: format!("analysis concatenates to `{}`, not the word", ls.word()),
                    });
                }
            }
        }
        Ok(Dataset { role, entries })
    }

    /// Parses the corpus format from a reader.
    pub fn load<R: BufRead>(reader: R, role: DatasetRole, name: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fail = |reason: String| Error::DataFormat {
                file: name.to_owned(),
                line: lineno,
                reason,
            };
            let (word_raw, rest) = line
                .split_once('\t')
                .ok_or_else(|| fail("expected `word<TAB>analyses`".into()))?;
            if rest.contains('\t') {
                return Err(fail("unexpected extra TAB in analyses field".into()));
            }
            let word = nfc(word_raw);
            if word.is_empty() {
                return Err(fail("empty word".into()));
            }
            if !seen.insert(word.clone()) {
                return Err(fail(format!("duplicate word `{word}`")));
            }
            let mut analyses = Vec::new();
            for part in rest.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    return Err(fail("empty analysis".into()));
                }
                let mut segments = Vec::new();
                for token in part.split_whitespace() {
                    let (morph, tag_text) = token
                        .split_once(':')
                        .ok_or_else(|| fail(format!("token `{token}` is not `morph:TAG`")))?;
                    if morph.is_empty() {
                        return Err(fail(format!("empty morph in token `{token}`")));
                    }
                    let tag = MorphTag::parse(tag_text)
                        .map_err(|e| fail(format!("bad tag in `{token}`: {e}")))?;
                    segments.push((nfc(morph), tag));
                }
                let ls = LabeledSegmentation::new(segments).map_err(|e| fail(e.to_string()))?;
                if ls.word() != word {
                    return Err(fail(format!(
                        "segments concatenate to `{}`, not `{word}`",
                        ls.word()
                    )));
                }
                analyses.push(ls);
            }
            entries.push(DatasetEntry { word, analyses });
        }
        Dataset::from_entries(role, entries)
    }

    /// Parses the corpus format from a string.
    pub fn parse_str(text: &str, role: DatasetRole) -> Result<Self> {
        Dataset::load(text.as_bytes(), role, "<string>")
    }

    /// Serializes back to the corpus format; `load(serialize(d))` is `d`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            let _ = write!(out, "{}\t", entry.word);
            for (i, ls) in entry.analyses.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{ls}");
            }
            out.push('\n');
        }
        out
    }

    pub fn role(&self) -> DatasetRole {
        self.role
    }

    pub fn with_role(&self, role: DatasetRole) -> Result<Dataset> {
        Dataset::from_entries(role, self.entries.clone())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn get(&self, word: &str) -> Option<&DatasetEntry> {
        self.entries.iter().find(|e| e.word == word)
    }

    /// Iterator over every gold analysis in the dataset.
    pub fn analyses(&self) -> impl Iterator<Item = &LabeledSegmentation> {
        self.entries.iter().flat_map(|e| e.analyses.iter())
    }

    /// Concatenates datasets into one; overlapping words are an error.
    pub fn concat(role: DatasetRole, parts: &[&Dataset]) -> Result<Dataset> {
        let mut entries = Vec::new();
        for part in parts {
            entries.extend(part.entries.iter().cloned());
        }
        Dataset::from_entries(role, entries)
    }

    /// Maps every gold analysis through `f`, keeping words fixed.
    pub fn map_analyses<F>(&self, f: F) -> Result<Dataset>
    where
        F: Fn(&LabeledSegmentation) -> LabeledSegmentation,
    {
        let entries = self
            .entries
            .iter()
            .map(|e| DatasetEntry {
                word: e.word.clone(),
                analyses: e.analyses.iter().map(&f).collect(),
            })
            .collect();
        Dataset::from_entries(self.role, entries)
    }
}

/// Curated affix lists used as binary lookup features.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AffixGazetteer {
    prefixes: BTreeSet<String>,
    suffixes: BTreeSet<String>,
}

impl AffixGazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a gazetteer: one affix per line, `-an` for a suffix entry,
    /// `i-` for a prefix entry. An entry with neither or both markers is a
    /// format error.
    pub fn load<R: BufRead>(reader: R, name: &str) -> Result<Self> {
        let mut gaz = AffixGazetteer::new();
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line?;
            let entry = line.trim();
            if entry.is_empty() || entry.starts_with('#') {
                continue;
            }
            let fail = |reason: String| Error::DataFormat {
                file: name.to_owned(),
                line: lineno,
                reason,
            };
            let leading = entry.starts_with('-');
            let trailing = entry.ends_with('-');
            match (leading, trailing) {
                (true, false) => {
                    gaz.suffixes.insert(nfc(&entry[1..]));
                }
                (false, true) => {
                    gaz.prefixes.insert(nfc(&entry[..entry.len() - 1]));
                }
                (true, true) => {
                    return Err(fail(format!("entry `{entry}` has both affix markers")));
                }
                (false, false) => {
                    return Err(fail(format!(
                        "entry `{entry}` has no affix marker (`-an` suffix, `i-` prefix)"
                    )));
                }
            }
        }
        Ok(gaz)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::load(text.as_bytes(), "<string>")
    }

    pub fn insert_prefix(&mut self, p: &str) {
        self.prefixes.insert(nfc(p));
    }

    pub fn insert_suffix(&mut self, s: &str) {
        self.suffixes.insert(nfc(s));
    }

    pub fn contains_prefix(&self, s: &str) -> bool {
        self.prefixes.contains(s)
    }

    pub fn contains_suffix(&self, s: &str) -> bool {
        self.suffixes.contains(s)
    }

    pub fn prefix_count(&self) -> usize {
        self.prefixes.len()
    }

    pub fn suffix_count(&self) -> usize {
        self.suffixes.len()
    }

    /// Canonical text form, used for fingerprinting in-memory gazetteers.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        for p in &self.prefixes {
            let _ = writeln!(out, "{p}-");
        }
        for s in &self.suffixes {
            let _ = writeln!(out, "-{s}");
        }
        out
    }
}

/// Word list with exact membership tests, the spell-checker proxy.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DictionarySet {
    words: BTreeSet<String>,
}

impl DictionarySet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads one word per line; duplicates are deduplicated.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut dict = DictionarySet::new();
        for line in reader.lines() {
            let line = line?;
            let word = line.trim();
            if word.is_empty() || word.starts_with('#') {
                continue;
            }
            dict.words.insert(nfc(word));
        }
        Ok(dict)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::load(text.as_bytes())
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut dict = DictionarySet::new();
        for w in words {
            dict.words.insert(nfc(w.as_ref()));
        }
        dict
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        for w in &self.words {
            let _ = writeln!(out, "{w}");
        }
        out
    }
}

/// One cross-validation fold.
#[derive(Debug, Clone)]
pub struct Fold {
    pub train: Dataset,
    pub tune: Dataset,
    pub dev: Dataset,
}

/// Deterministic k-fold splits. The data is shuffled once with the seed and
/// cut into `k` balanced shards; fold `i` uses shard `i` as its tune slice,
/// shard `i+1 (mod k)` as its dev slice and the remaining `k-2` shards as
/// its train slice. Across folds the tune slices partition the data, as do
/// the dev slices, and within a fold no word is shared between slices. With
/// 1000 words and `k = 10` each fold is (800, 100, 100).
pub fn split_folds(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Split(format!("fold count must be >= 2, got {k}")));
    }
    if data.len() < k {
        return Err(Error::Split(format!(
            "cannot make {k} folds from {} words",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    // Balanced contiguous shards of the shuffled order.
    let n = data.len();
    let base = n / k;
    let extra = n % k;
    let mut shards: Vec<Vec<usize>> = Vec::with_capacity(k);
    let mut at = 0;
    for j in 0..k {
        let size = base + usize::from(j < extra);
        shards.push(order[at..at + size].to_vec());
        at += size;
    }

    let take = |idxs: &[usize], role: DatasetRole| -> Result<Dataset> {
        let entries = idxs
            .iter()
            .map(|&i| data.entries()[i].clone())
            .collect::<Vec<_>>();
        Dataset::from_entries(role, entries)
    };

    let mut folds = Vec::with_capacity(k);
    for i in 0..k {
        let tune_shard = i;
        let dev_shard = (i + 1) % k;
        let mut train_idx = Vec::new();
        for (j, shard) in shards.iter().enumerate() {
            if j != tune_shard && j != dev_shard {
                train_idx.extend_from_slice(shard);
            }
        }
        folds.push(Fold {
            train: take(&train_idx, DatasetRole::Train)?,
            tune: take(&shards[tune_shard], DatasetRole::Tune)?,
            dev: take(&shards[dev_shard], DatasetRole::Dev)?,
        });
    }
    Ok(folds)
}

/// Loads a plain word list (one word per line, `#` comments), NFC-normalized.
pub fn load_word_list<R: BufRead>(reader: R) -> Result<Vec<String>> {
    let mut words = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let w = line.trim();
        if w.is_empty() || w.starts_with('#') {
            continue;
        }
        words.push(nfc(w));
    }
    Ok(words)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1_LINE: &str = "gençleşmelerin\tgenç:ROOT:ADJ leş:SUFFIX:DERIV:VERB me:SUFFIX:DERIV:NOUN ler:SUFFIX:INFL:NOUN:NUMBER:PLURAL in:SUFFIX:INFL:NOUN:CASE:GENITIVE";

    #[test]
    fn load_turkish_line() {
        let ds = Dataset::parse_str(FIG1_LINE, DatasetRole::Train).unwrap();
        assert_eq!(ds.len(), 1);
        let entry = &ds.entries()[0];
        assert_eq!(entry.word, "gençleşmelerin");
        assert_eq!(entry.analyses[0].len(), 5);
    }

    #[test]
    fn load_single_segment() {
        let ds = Dataset::parse_str("a\ta:ROOT", DatasetRole::Train).unwrap();
        assert_eq!(ds.entries()[0].analyses[0].len(), 1);
    }

    #[test]
    fn concatenation_checked() {
        // Valid tags, matching concatenation: accepted.
        assert!(Dataset::parse_str("reed\tre:PREFIX ed:SUFFIX", DatasetRole::Train).is_ok());
        // re + e != reed.
        let err = Dataset::parse_str("reed\tre:PREFIX e:ROOT", DatasetRole::Train).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":1:"), "{msg}");
        assert!(msg.contains("concatenate"), "{msg}");
    }

    #[test]
    fn duplicate_words_rejected() {
        let text = "a\ta:ROOT\na\ta:SEGMENT";
        let err = Dataset::parse_str(text, DatasetRole::Train).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn comments_and_multiple_analyses() {
        let text = "# comment\nabc\tabc:ROOT, ab:ROOT c:SUFFIX:INFL\n";
        let ds = Dataset::parse_str(text, DatasetRole::Train).unwrap();
        assert_eq!(ds.entries()[0].analyses.len(), 2);
    }

    #[test]
    fn serialize_roundtrip() {
        let text = format!("{FIG1_LINE}\na\ta:ROOT, a:UNKNOWN\n");
        let ds = Dataset::parse_str(&text, DatasetRole::Train).unwrap();
        let again = Dataset::parse_str(&ds.serialize(), DatasetRole::Train).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn unparseable_tag_cites_line() {
        let err = Dataset::parse_str("ab\tab:BOGUS", DatasetRole::Train).unwrap_err();
        assert!(err.to_string().contains("<string>:1"), "{err}");
    }

    #[test]
    fn gazetteer_markers() {
        let gaz = AffixGazetteer::parse_str("-kau\n-an\n-nya\n-ku\n-mu\n").unwrap();
        assert_eq!(gaz.suffix_count(), 5);
        assert_eq!(gaz.prefix_count(), 0);
        assert!(gaz.contains_suffix("an"));

        let zulu = AffixGazetteer::parse_str("i-\nu-\nza-\n").unwrap();
        assert!(zulu.contains_prefix("i"));
        assert!(zulu.contains_prefix("u"));
        assert!(zulu.contains_prefix("za"));
    }

    #[test]
    fn gazetteer_bad_entries() {
        assert!(AffixGazetteer::parse_str("an\n").is_err());
        assert!(AffixGazetteer::parse_str("-an-\n").is_err());
        let empty = AffixGazetteer::parse_str("").unwrap();
        assert_eq!(empty.prefix_count() + empty.suffix_count(), 0);
    }

    #[test]
    fn dictionary_membership_and_dedup() {
        let dict = DictionarySet::parse_str("home\nwork\nhome\n").unwrap();
        assert_eq!(dict.len(), 2);
        assert!(dict.contains("home"));
        assert!(!dict.contains("homework"));
    }

    fn toy_dataset(n: usize) -> Dataset {
        let lines: Vec<String> = (0..n).map(|i| format!("w{i}\tw{i}:ROOT")).collect();
        Dataset::parse_str(&lines.join("\n"), DatasetRole::Train).unwrap()
    }

    #[test]
    fn folds_sizes_match_protocol() {
        let ds = toy_dataset(1000);
        let folds = split_folds(&ds, 10, 7).unwrap();
        assert_eq!(folds.len(), 10);
        for fold in &folds {
            assert_eq!(fold.train.len(), 800);
            assert_eq!(fold.tune.len(), 100);
            assert_eq!(fold.dev.len(), 100);
        }
    }

    #[test]
    fn folds_deterministic() {
        let ds = toy_dataset(10);
        let a = split_folds(&ds, 2, 42).unwrap();
        let b = split_folds(&ds, 2, 42).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            assert_eq!(fa.tune, fb.tune);
            assert_eq!(fa.dev, fb.dev);
            assert_eq!(fa.train, fb.train);
        }
        let c = split_folds(&ds, 2, 43).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.tune != y.tune));
    }

    #[test]
    fn fold_slices_partition_data() {
        let ds = toy_dataset(10);
        let folds = split_folds(&ds, 2, 1).unwrap();
        // Every word lands in exactly one tune slice and one dev slice.
        let mut tune_seen = HashSet::new();
        let mut dev_seen = HashSet::new();
        for fold in &folds {
            for e in fold.tune.entries() {
                assert!(tune_seen.insert(e.word.clone()));
            }
            for e in fold.dev.entries() {
                assert!(dev_seen.insert(e.word.clone()));
            }
            // Within a fold, train is disjoint from the held-out slices.
            for e in fold.train.entries() {
                assert!(fold.tune.get(&e.word).is_none());
                assert!(fold.dev.get(&e.word).is_none());
            }
        }
        assert_eq!(tune_seen.len(), 10);
        assert_eq!(dev_seen.len(), 10);
    }

    #[test]
    fn folds_reject_bad_k() {
        let ds = toy_dataset(3);
        assert!(split_folds(&ds, 1, 0).is_err());
        assert!(split_folds(&ds, 4, 0).is_err());
    }

    #[test]
    fn concat_rejects_overlap() {
        let a = toy_dataset(3);
        let b = Dataset::parse_str("w1\tw1:ROOT", DatasetRole::Dev).unwrap();
        let err = Dataset::concat(DatasetRole::Train, &[&a, &b]).unwrap_err();
        assert!(matches!(err, Error::DuplicateWord { .. }));
    }

    #[test]
    fn nfc_applied_at_load() {
        // 'e' + combining acute composes to a single codepoint.
        let decomposed = "e\u{0301}x\te\u{0301}x:ROOT";
        let ds = Dataset::parse_str(decomposed, DatasetRole::Train).unwrap();
        assert_eq!(ds.entries()[0].word, "éx");
        assert_eq!(ds.entries()[0].word.chars().count(), 2);
    }
}
