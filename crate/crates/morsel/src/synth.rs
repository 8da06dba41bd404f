//! Synthetic agglutinative corpora from a known morphotactic grammar.
//!
//! A grammar lists roots per part of speech, affix tags with weighted
//! allomorph sets and attachment probabilities, and ordering constraints
//! over tag components (e.g. `NUMBER` before `CASE`). Generation samples
//! one derivation per word type: a root, an optional derivational chain
//! (each derivational affix switches the running part of speech to the one
//! it derives) and inflectional slots matching the final part of speech,
//! emitted in constraint order. Every generated type carries its level-5
//! gold analysis, so the generator doubles as an oracle for all derived
//! views.
//!
//! Grammar TSV rows:
//!
//! ```text
//! root<TAB>ROOT:NOUN<TAB>tak<TAB>1.0
//! suffix<TAB>SUFFIX:INFL:NOUN:NUMBER:PLURAL<TAB>ler<TAB>1.0
//! attach<TAB>SUFFIX:INFL:NOUN:NUMBER:PLURAL<TAB>-<TAB>0.45
//! order<TAB>NUMBER<TAB>CASE
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AffixGazetteer, Dataset, DatasetEntry, DatasetRole, DictionarySet};
use crate::errors::{Error, Result};
use crate::tags::{LabeledSegmentation, MorphTag, PositionClass, ViewSet};

const DEFAULT_ATTACH: f64 = 0.35;

/// One root entry: surface form, part of speech and sampling weight.
#[derive(Debug, Clone, PartialEq)]
pub struct RootEntry {
    pub surface: String,
    pub pos: String,
    pub weight: f64,
}

/// One affix tag with its weighted allomorphs and attachment probability.
#[derive(Debug, Clone, PartialEq)]
pub struct AffixGroup {
    pub tag: MorphTag,
    pub allomorphs: Vec<(String, f64)>,
    pub attach: f64,
}

/// A generation grammar.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthGrammar {
    pub roots: Vec<RootEntry>,
    pub prefixes: Vec<AffixGroup>,
    pub suffixes: Vec<AffixGroup>,
    /// `(a, b)`: within an affix run, a tag containing component `a` must
    /// precede any tag containing component `b`.
    pub order: Vec<(String, String)>,
}

impl SynthGrammar {
    pub fn validate(&self) -> Result<()> {
        if self.roots.is_empty() {
            return Err(Error::GrammarTooSmall("no roots".into()));
        }
        for group in self.prefixes.iter().chain(&self.suffixes) {
            if group.allomorphs.is_empty() {
                return Err(Error::GrammarTooSmall(format!(
                    "affix tag {} has no allomorphs",
                    group.tag
                )));
            }
        }
        Ok(())
    }

    /// Parses the grammar TSV.
    pub fn load<R: BufRead>(reader: R, name: &str) -> Result<Self> {
        let mut grammar = SynthGrammar::default();
        let mut attach: BTreeMap<String, f64> = BTreeMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fail = |reason: String| Error::DataFormat {
                file: name.to_owned(),
                line: lineno,
                reason,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            match fields[0] {
                "order" => {
                    if fields.len() != 3 {
                        return Err(fail("order rows are `order<TAB>A<TAB>B`".into()));
                    }
                    grammar
                        .order
                        .push((fields[1].to_owned(), fields[2].to_owned()));
                }
                kind @ ("root" | "prefix" | "suffix" | "attach") => {
                    if fields.len() != 4 {
                        return Err(fail(format!(
                            "{kind} rows are `{kind}<TAB>tag<TAB>surface<TAB>weight`"
                        )));
                    }
                    let tag = MorphTag::parse(fields[1]).map_err(|e| fail(e.to_string()))?;
                    let weight: f64 = fields[3]
                        .parse()
                        .map_err(|_| fail(format!("bad weight `{}`", fields[3])))?;
                    match kind {
                        "root" => {
                            if tag.position_class() != PositionClass::Root {
                                return Err(fail(format!("root row with tag {tag}")));
                            }
                            let pos = tag
                                .components()
                                .get(1)
                                .cloned()
                                .unwrap_or_else(|| "NONE".to_owned());
                            grammar.roots.push(RootEntry {
                                surface: fields[2].to_owned(),
                                pos,
                                weight,
                            });
                        }
                        "attach" => {
                            attach.insert(tag.to_string(), weight);
                        }
                        affix => {
                            let expected = if affix == "prefix" {
                                PositionClass::Prefix
                            } else {
                                PositionClass::Suffix
                            };
                            if tag.position_class() != expected {
                                return Err(fail(format!("{affix} row with tag {tag}")));
                            }
                            let groups = if affix == "prefix" {
                                &mut grammar.prefixes
                            } else {
                                &mut grammar.suffixes
                            };
                            let surface = fields[2].to_owned();
                            match groups.iter_mut().find(|g| g.tag == tag) {
                                Some(g) => g.allomorphs.push((surface, weight)),
                                None => groups.push(AffixGroup {
                                    tag,
                                    allomorphs: vec![(surface, weight)],
                                    attach: DEFAULT_ATTACH,
                                }),
                            }
                        }
                    }
                }
                other => return Err(fail(format!("unknown row kind `{other}`"))),
            }
        }
        for group in grammar.prefixes.iter_mut().chain(&mut grammar.suffixes) {
            if let Some(&p) = attach.get(&group.tag.to_string()) {
                group.attach = p;
            }
        }
        grammar.validate()?;
        Ok(grammar)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::load(text.as_bytes(), "<string>")
    }

    /// Serializes back to the grammar TSV.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.roots {
            let _ = writeln!(out, "root\tROOT:{}\t{}\t{}", r.pos, r.surface, r.weight);
        }
        for (kind, groups) in [("prefix", &self.prefixes), ("suffix", &self.suffixes)] {
            for g in groups {
                for (surface, weight) in &g.allomorphs {
                    let _ = writeln!(out, "{kind}\t{}\t{surface}\t{weight}", g.tag);
                }
                let _ = writeln!(out, "attach\t{}\t-\t{}", g.tag, g.attach);
            }
        }
        for (a, b) in &self.order {
            let _ = writeln!(out, "order\t{a}\t{b}");
        }
        out
    }

    /// All allomorph surfaces as a gazetteer (the synthetic affix list).
    pub fn gazetteer(&self) -> AffixGazetteer {
        let mut gaz = AffixGazetteer::new();
        for g in &self.prefixes {
            for (s, _) in &g.allomorphs {
                gaz.insert_prefix(s);
            }
        }
        for g in &self.suffixes {
            for (s, _) in &g.allomorphs {
                gaz.insert_suffix(s);
            }
        }
        gaz
    }

    /// All root surfaces as a dictionary (the synthetic word list).
    pub fn root_dictionary(&self) -> DictionarySet {
        DictionarySet::from_words(self.roots.iter().map(|r| r.surface.as_str()))
    }

    /// Longest-path rank of each component in the ordering constraints.
    fn order_ranks(&self) -> HashMap<String, usize> {
        let mut nodes: BTreeSet<&str> = BTreeSet::new();
        for (a, b) in &self.order {
            nodes.insert(a);
            nodes.insert(b);
        }
        let mut rank: HashMap<String, usize> = HashMap::new();
        for node in &nodes {
            rank.insert((*node).to_owned(), 0);
        }
        // Relax edges |nodes| times; constraint sets are tiny and acyclic.
        for _ in 0..nodes.len() {
            for (a, b) in &self.order {
                let ra = rank.get(a).copied().unwrap_or(0);
                if rank.get(b).copied().unwrap_or(0) < ra + 1 {
                    rank.insert(b.clone(), ra + 1);
                }
            }
        }
        rank
    }

    /// Sort key placing tags in constraint order, then serialization order.
    fn tag_key(tag: &MorphTag, ranks: &HashMap<String, usize>) -> (Vec<usize>, String) {
        let key: Vec<usize> = tag
            .components()
            .iter()
            .filter_map(|c| ranks.get(c.as_str()).copied())
            .collect();
        (key, tag.to_string())
    }
}

/// Is any ordering constraint violated within an affix run?
pub fn violates_order(tags: &[&MorphTag], order: &[(String, String)]) -> bool {
    for i in 0..tags.len() {
        for j in (i + 1)..tags.len() {
            for (a, b) in order {
                let i_has_b = tags[i].components().iter().any(|c| c == b);
                let j_has_a = tags[j].components().iter().any(|c| c == a);
                if i_has_b && j_has_a {
                    return true;
                }
            }
        }
    }
    false
}

/// A generated corpus: the dataset plus the generation-time analyses as a
/// model-independent oracle.
#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    dataset: Dataset,
    index: HashMap<String, LabeledSegmentation>,
}

impl GeneratedCorpus {
    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// The generation-time gold analysis of a word.
    pub fn gold(&self, word: &str) -> Result<&LabeledSegmentation> {
        self.index.get(word).ok_or_else(|| Error::UnknownSynthWord {
            word: word.to_owned(),
        })
    }

    /// Ground-truth views of a generated word, independent of any model.
    pub fn oracle_views(&self, word: &str) -> Result<ViewSet> {
        self.gold(word)?.derive_views()
    }
}

/// Samples `n_types` distinct word types, each with exactly one level-5
/// gold analysis. Deterministic given the seed.
pub fn generate(grammar: &SynthGrammar, n_types: usize, seed: u64) -> Result<GeneratedCorpus> {
    grammar.validate()?;
    if n_types == 0 {
        return Err(Error::GrammarTooSmall("n_types must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranks = grammar.order_ranks();

    let root_weights = WeightedIndex::new(grammar.roots.iter().map(|r| r.weight))
        .map_err(|e| Error::GrammarTooSmall(format!("bad root weights: {e}")))?;
    let allomorph_choice = |group: &AffixGroup, rng: &mut ChaCha8Rng| -> Result<String> {
        let idx = WeightedIndex::new(group.allomorphs.iter().map(|(_, w)| *w))
            .map_err(|e| Error::GrammarTooSmall(format!("bad allomorph weights: {e}")))?
            .sample(rng);
        Ok(group.allomorphs[idx].0.clone())
    };

    // Derivational groups apply in constraint order; inflectional groups
    // are bucketed into slots by (POS, feature) so at most one member of a
    // slot fires, and slots emit in constraint order.
    let sorted_groups = |groups: &[AffixGroup]| -> Vec<AffixGroup> {
        let mut out: Vec<AffixGroup> = groups.to_vec();
        out.sort_by_key(|g| SynthGrammar::tag_key(&g.tag, &ranks));
        out
    };
    let prefix_groups = sorted_groups(&grammar.prefixes);
    let suffix_groups = sorted_groups(&grammar.suffixes);

    let mut index: HashMap<String, LabeledSegmentation> = HashMap::new();
    let mut entries: Vec<DatasetEntry> = Vec::new();
    let max_attempts = (50 * n_types).max(1000);
    let mut attempts = 0;
    while entries.len() < n_types {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::GrammarTooSmall(format!(
                "produced only {} of {n_types} distinct types after {attempts} attempts",
                entries.len()
            )));
        }

        let root = &grammar.roots[root_weights.sample(&mut rng)];
        let mut pos = root.pos.clone();
        let mut segments: Vec<(String, MorphTag)> = Vec::new();

        let sample_run = |groups: &[AffixGroup],
                          pos: &mut String,
                          rng: &mut ChaCha8Rng|
         -> Result<Vec<(String, MorphTag)>> {
            let mut run: Vec<(String, MorphTag)> = Vec::new();
            // Derivational chain: each tag fires independently, in order.
            for group in groups.iter().filter(|g| g.tag.is_derivational()) {
                if rng.gen::<f64>() < group.attach {
                    run.push((allomorph_choice(group, rng)?, group.tag.clone()));
                    if let Some(derived) = group.tag.components().get(2) {
                        *pos = derived.clone();
                    }
                }
            }
            // Inflectional slots for the final part of speech.
            let mut slots: Vec<(Vec<usize>, String, Vec<&AffixGroup>)> = Vec::new();
            for group in groups.iter().filter(|g| g.tag.is_inflectional()) {
                let group_pos = group.tag.components().get(2).cloned().unwrap_or_default();
                if group_pos != *pos && group_pos != "NONE" {
                    continue;
                }
                let feature = group
                    .tag
                    .components()
                    .get(3)
                    .cloned()
                    .unwrap_or_else(|| group.tag.to_string());
                let key = SynthGrammar::tag_key(&group.tag, &ranks).0;
                match slots.iter_mut().find(|(_, f, _)| *f == feature) {
                    Some((_, _, members)) => members.push(group),
                    None => slots.push((key, feature, vec![group])),
                }
            }
            slots.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            for (_, _, members) in &slots {
                let total: f64 = members.iter().map(|g| g.attach).sum();
                if rng.gen::<f64>() < total.min(0.95) {
                    let idx = WeightedIndex::new(members.iter().map(|g| g.attach))
                        .map_err(|e| Error::GrammarTooSmall(format!("bad attach weights: {e}")))?
                        .sample(rng);
                    let group = members[idx];
                    run.push((allomorph_choice(group, rng)?, group.tag.clone()));
                }
            }
            Ok(run)
        };

        // Derivational prefixes switch the running part of speech, so the
        // suffix run sees the word's final category.
        segments.extend(sample_run(&prefix_groups, &mut pos, &mut rng)?);
        let root_tag = MorphTag::from_components(["ROOT".to_owned(), root.pos.clone()])?;
        segments.push((root.surface.clone(), root_tag));
        segments.extend(sample_run(&suffix_groups, &mut pos, &mut rng)?);

        let ls = LabeledSegmentation::new(segments)?;
        debug_assert!({
            let suffix_tags: Vec<&MorphTag> = ls
                .segments()
                .iter()
                .filter(|(_, t)| t.position_class() == PositionClass::Suffix)
                .map(|(_, t)| t)
                .collect();
            !violates_order(&suffix_tags, &grammar.order)
        });
        let word = ls.word().to_owned();
        if index.contains_key(&word) {
            continue;
        }
        index.insert(word.clone(), ls.clone());
        entries.push(DatasetEntry {
            word,
            analyses: vec![ls],
        });
    }

    let dataset = Dataset::from_entries(DatasetRole::Train, entries)?;
    Ok(GeneratedCorpus { dataset, index })
}

/// Splits a dataset into parts sized by the ratio list (largest-remainder
/// rounding), shuffled deterministically. Roles are assigned in protocol
/// order: train, tune, dev, test.
pub fn split(data: &Dataset, ratios: &[usize], seed: u64) -> Result<Vec<Dataset>> {
    if ratios.is_empty() || ratios.len() > 4 {
        return Err(Error::Split(format!(
            "expected 1..=4 split parts, got {}",
            ratios.len()
        )));
    }
    if ratios.iter().sum::<usize>() == 0 {
        return Err(Error::Split("ratio sum must be positive".into()));
    }
    let roles = [
        DatasetRole::Train,
        DatasetRole::Tune,
        DatasetRole::Dev,
        DatasetRole::Test,
    ];
    let n = data.len();
    let total: usize = ratios.iter().sum();
    let mut sizes: Vec<usize> = ratios.iter().map(|r| n * r / total).collect();
    let mut remainders: Vec<(usize, usize)> = ratios
        .iter()
        .enumerate()
        .map(|(i, r)| (n * r % total, i))
        .collect();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut leftover = n - sizes.iter().sum::<usize>();
    for &(_, i) in &remainders {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut out = Vec::with_capacity(ratios.len());
    let mut at = 0;
    for (i, &size) in sizes.iter().enumerate() {
        let entries: Vec<DatasetEntry> = order[at..at + size]
            .iter()
            .map(|&j| data.entries()[j].clone())
            .collect();
        at += size;
        out.push(Dataset::from_entries(roles[i], entries)?);
    }
    Ok(out)
}

/// The grammar used by the crate's examples and end-to-end tests: 50 roots
/// over two parts of speech, 12 suffix tags with two allomorphs each, and
/// `NUMBER` before `CASE` (plus derivation-before-inflection and `TENSE`
/// before `PERSON`) ordering. Several roots begin with frequent suffix
/// strings, so segmenting them correctly needs morphotactics, not just
/// local character context.
pub fn demo_grammar() -> SynthGrammar {
    // The last seven roots of each part of speech are concatenations of
    // frequent suffix strings (e.g. lerde = ler + de), some in an order the
    // morphotactics forbids for real affix sequences. Segmenting words built
    // on them correctly requires label-sequence information.
    const NOUN_ROOTS: [&str; 25] = [
        "tak", "pol", "gem", "kum", "dag", "yol", "tas", "kus", "goz", "kol", "bodur", "catil",
        "fidan", "hamur", "kalem", "okul", "perde", "radyo", "lerde", "larin", "gilin", "lara",
        "inde", "unlar", "dalik",
    ];
    const VERB_ROOTS: [&str; 25] = [
        "gel", "git", "bak", "kos", "uyu", "yaz", "oku", "sev", "kac", "dur", "basla", "bekle",
        "calis", "dinle", "kosul", "otur", "sakla", "uzan", "disin", "imdi", "dusun", "ecekim",
        "umdu", "sindi", "acakim",
    ];
    let mut grammar = SynthGrammar::default();
    for r in NOUN_ROOTS {
        grammar.roots.push(RootEntry {
            surface: r.into(),
            pos: "NOUN".into(),
            weight: 1.0,
        });
    }
    for r in VERB_ROOTS {
        grammar.roots.push(RootEntry {
            surface: r.into(),
            pos: "VERB".into(),
            weight: 1.0,
        });
    }
    let mut suffix = |tag: &str, a: &str, b: &str, attach: f64| {
        grammar.suffixes.push(AffixGroup {
            tag: MorphTag::parse(tag).expect("valid tag"),
            allomorphs: vec![(a.into(), 1.0), (b.into(), 1.0)],
            attach,
        });
    };
    suffix("SUFFIX:INFL:NOUN:NUMBER:PLURAL", "ler", "lar", 0.45);
    suffix("SUFFIX:INFL:NOUN:NUMBER:COLLECTIVE", "gil", "gul", 0.10);
    suffix("SUFFIX:INFL:NOUN:CASE:GENITIVE", "in", "un", 0.30);
    suffix("SUFFIX:INFL:NOUN:CASE:DATIVE", "e", "a", 0.18);
    suffix("SUFFIX:INFL:NOUN:CASE:LOCATIVE", "de", "da", 0.22);
    suffix("SUFFIX:INFL:VERB:TENSE:PAST", "di", "du", 0.40);
    suffix("SUFFIX:INFL:VERB:TENSE:FUTURE", "ecek", "acak", 0.25);
    suffix("SUFFIX:INFL:VERB:PERSON:FIRST", "im", "um", 0.30);
    suffix("SUFFIX:INFL:VERB:PERSON:SECOND", "sin", "sun", 0.22);
    suffix("SUFFIX:DERIV:NOUN", "lik", "luk", 0.18);
    suffix("SUFFIX:DERIV:VERB", "les", "las", 0.15);
    suffix("SUFFIX:DERIV:ADJ", "sel", "sal", 0.08);
    grammar.order = vec![
        ("DERIV".into(), "INFL".into()),
        ("NUMBER".into(), "CASE".into()),
        ("TENSE".into(), "PERSON".into()),
    ];
    grammar
}
