//! Property tests for the structural invariants.

use proptest::prelude::*;

use morsel::corpus::{split_folds, Dataset, DatasetRole};
use morsel::evaluation::boundary_f1;
use morsel::features::{Extractor, FeatureConfig, FeatureVocabulary, Resources};
use morsel::tags::{LabeledSegmentation, MorphTag, TagsetLevel};

fn arb_tag() -> impl Strategy<Value = MorphTag> {
    let pos = prop::sample::select(vec!["NOUN", "VERB", "ADJ", "NONE"]);
    let kind = prop::sample::select(vec!["DERIV", "INFL"]);
    let feature = prop::sample::select(vec!["NUMBER", "CASE", "TENSE", "NONE"]);
    let value = prop::sample::select(vec!["PLURAL", "GENITIVE", "PAST"]);
    prop_oneof![
        Just(MorphTag::parse("SEGMENT").unwrap()),
        Just(MorphTag::parse("UNKNOWN").unwrap()),
        Just(MorphTag::parse("ROOT").unwrap()),
        pos.clone()
            .prop_map(|p| MorphTag::from_components(["ROOT".to_owned(), p.to_owned()]).unwrap()),
        (
            prop::sample::select(vec!["PREFIX", "SUFFIX"]),
            kind,
            prop::option::of((pos, prop::option::of((feature, prop::option::of(value)))))
        )
            .prop_map(|(position, kind, rest)| {
                let mut components = vec![position.to_owned(), kind.to_owned()];
                if let Some((pos, rest)) = rest {
                    components.push(pos.to_owned());
                    if let Some((feature, value)) = rest {
                        components.push(feature.to_owned());
                        if let Some(value) = value {
                            components.push(value.to_owned());
                        }
                    }
                }
                MorphTag::from_components(components).unwrap()
            }),
    ]
}

fn arb_segmentation() -> impl Strategy<Value = LabeledSegmentation> {
    prop::collection::vec(
        (
            prop::collection::vec(prop::char::range('a', 'f'), 1..4),
            arb_tag(),
        ),
        1..5,
    )
    .prop_map(|parts| {
        LabeledSegmentation::new(
            parts
                .into_iter()
                .map(|(chars, tag)| (chars.into_iter().collect::<String>(), tag))
                .collect(),
        )
        .unwrap()
    })
}

proptest! {
    /// Projection is idempotent and monotone along the level chain.
    #[test]
    fn projection_chain(tag in arb_tag(), i in 0u8..=5, j in 0u8..=5) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let lo = TagsetLevel::new(lo).unwrap();
        let hi = TagsetLevel::new(hi).unwrap();
        prop_assert_eq!(tag.project(hi).project(lo), tag.project(lo));
    }

    /// Tag serialization round-trips.
    #[test]
    fn tag_roundtrip(tag in arb_tag()) {
        prop_assert_eq!(MorphTag::parse(&tag.to_string()).unwrap(), tag);
    }

    /// The unlabeled view is invariant under label projection.
    #[test]
    fn ums_invariant_under_projection(ls in arb_segmentation(), level in 0u8..=5) {
        let level = TagsetLevel::new(level).unwrap();
        prop_assert_eq!(ls.project(level).ums_view(), ls.ums_view());
    }

    /// Every root is a contiguous substring of the stem.
    #[test]
    fn roots_within_stem(ls in arb_segmentation()) {
        if let (Ok(roots), Ok(stem)) = (ls.roots_view(), ls.stem_view()) {
            for root in roots {
                prop_assert!(stem.contains(&root));
            }
        }
    }

    /// Corpus serialization round-trips to an equal dataset.
    #[test]
    fn corpus_roundtrip(analyses in prop::collection::vec(arb_segmentation(), 1..8)) {
        // Distinct words: prefix each with its index.
        let entries: Vec<String> = analyses
            .iter()
            .enumerate()
            .map(|(i, ls)| {
                let word: String = format!("{}{}", "x".repeat(i + 1), ls.word());
                let prefixed = LabeledSegmentation::new(
                    std::iter::once(("x".repeat(i + 1), MorphTag::parse("ROOT").unwrap()))
                        .chain(ls.segments().iter().cloned())
                        .collect(),
                )
                .unwrap();
                format!("{word}\t{prefixed}")
            })
            .collect();
        let text = entries.join("\n");
        let ds = Dataset::parse_str(&text, DatasetRole::Train).unwrap();
        let again = Dataset::parse_str(&ds.serialize(), DatasetRole::Train).unwrap();
        prop_assert_eq!(ds, again);
    }

    /// Fold slices partition the data and are disjoint within each fold.
    #[test]
    fn folds_partition(n in 4usize..40, k in 2usize..6, seed in 0u64..1000) {
        prop_assume!(n >= k);
        let lines: Vec<String> = (0..n).map(|i| format!("w{i}\tw{i}:ROOT")).collect();
        let ds = Dataset::parse_str(&lines.join("\n"), DatasetRole::Train).unwrap();
        let folds = split_folds(&ds, k, seed).unwrap();
        let mut tune_seen = std::collections::HashSet::new();
        let mut dev_seen = std::collections::HashSet::new();
        for fold in &folds {
            prop_assert_eq!(fold.train.len() + fold.tune.len() + fold.dev.len(), n);
            for e in fold.tune.entries() {
                prop_assert!(tune_seen.insert(e.word.clone()));
                prop_assert!(fold.train.get(&e.word).is_none());
            }
            for e in fold.dev.entries() {
                prop_assert!(dev_seen.insert(e.word.clone()));
                prop_assert!(fold.train.get(&e.word).is_none());
            }
        }
        prop_assert_eq!(tune_seen.len(), n);
        prop_assert_eq!(dev_seen.len(), n);
    }

    /// Adding a gold analysis never lowers a word's boundary score.
    #[test]
    fn max_over_golds_dominance(
        word in prop::collection::vec(prop::char::range('a', 'd'), 2..7),
        cuts in prop::collection::vec(any::<bool>(), 6),
    ) {
        let seg_of = |mask: &[bool]| {
            let mut segments = Vec::new();
            let mut start = 0;
            for i in 1..word.len() {
                if mask[i - 1] {
                    segments.push((
                        word[start..i].iter().collect::<String>(),
                        MorphTag::parse("SEGMENT").unwrap(),
                    ));
                    start = i;
                }
            }
            segments.push((
                word[start..].iter().collect::<String>(),
                MorphTag::parse("SEGMENT").unwrap(),
            ));
            LabeledSegmentation::new(segments).unwrap()
        };
        let pred = seg_of(&cuts);
        let gold_a = seg_of(&cuts.iter().map(|b| !b).collect::<Vec<_>>());
        let gold_b = seg_of(&cuts.iter().map(|_| false).collect::<Vec<_>>());
        let one = boundary_f1(&pred, std::slice::from_ref(&gold_a)).unwrap().f1;
        let two = boundary_f1(&pred, &[gold_a, gold_b]).unwrap().f1;
        prop_assert!(two >= one);
    }

    /// Featurize is pure: same candidate, same sparse vector; all values 1.
    #[test]
    fn featurize_pure_and_binary(
        word in prop::collection::vec(prop::char::range('a', 'e'), 1..7),
        start_frac in 0.0f64..1.0,
        len_frac in 0.0f64..1.0,
    ) {
        let n = word.len();
        let start = ((n as f64 - 1.0) * start_frac) as usize;
        let len = 1 + ((n - start - 1) as f64 * len_frac) as usize;
        let config = FeatureConfig::default();
        let resources = Resources::empty();
        let extractor = Extractor::new(&config, &resources);
        let label = MorphTag::parse("ROOT").unwrap();
        let mut vocab = FeatureVocabulary::new();
        let a = extractor
            .featurize(&word, start..start + len, &label, None, &mut vocab)
            .unwrap();
        let grown = vocab.len();
        let b = extractor
            .featurize(&word, start..start + len, &label, None, &mut vocab)
            .unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(vocab.len(), grown);
        prop_assert!(a.values().iter().all(|&v| v == 1.0));
        let mut sorted = a.indices().to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.as_slice(), a.indices());
    }
}
