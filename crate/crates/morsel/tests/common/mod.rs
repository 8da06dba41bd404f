//! Shared test oracles, independent of the dynamic-programming code they
//! check: a brute-force enumerator over labeled segmentations and a
//! separately written first-order linear-chain CRF.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use morsel::features::{Extractor, FeatureConfig, FeatureVocabulary, Resources};
use morsel::semicrf::Model;
use morsel::tags::{MorphTag, Tagset, TagsetLevel};

/// A tagset with `l` labels for oracle instances.
pub fn make_tagset(l: usize) -> Tagset {
    let (level, names): (u8, Vec<&str>) = match l {
        1 => (0, vec!["SEGMENT"]),
        2 => (1, vec!["ROOT", "SUFFIX"]),
        3 => (1, vec!["PREFIX", "ROOT", "SUFFIX"]),
        4 => (1, vec!["PREFIX", "ROOT", "SUFFIX", "UNKNOWN"]),
        _ => panic!("oracle tagsets cover 1..=4 labels"),
    };
    Tagset::from_tags(
        TagsetLevel::new(level).unwrap(),
        names.into_iter().map(|n| MorphTag::parse(n).unwrap()),
    )
    .unwrap()
}

pub fn random_word(rng: &mut ChaCha8Rng, len: usize) -> String {
    const ALPHABET: [char; 6] = ['a', 'b', 'c', 'd', 'e', 'f'];
    (0..len).map(|_| ALPHABET[rng.gen_range(0..6)]).collect()
}

/// Builds a model whose vocabulary covers every candidate of `word`'s own
/// lattice (via the public featurize operation only) with weights drawn
/// uniformly from [-2, 2].
pub fn random_model(
    word: &str,
    n_labels: usize,
    max_segment_length: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Model {
    let tagset = make_tagset(n_labels);
    let config = FeatureConfig {
        max_context_ngram: 2,
        ..FeatureConfig::default()
    };
    let resources = Resources::empty();
    let extractor = Extractor::new(&config, &resources);
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    let m = max_segment_length.unwrap_or(n);
    let mut vocab = FeatureVocabulary::new();
    for start in 0..n {
        for end in (start + 1)..=n.min(start + m) {
            for label in tagset.tags() {
                if start == 0 {
                    extractor
                        .featurize(&chars, start..end, label, None, &mut vocab)
                        .unwrap();
                } else {
                    for prev in tagset.tags() {
                        extractor
                            .featurize(&chars, start..end, label, Some(prev), &mut vocab)
                            .unwrap();
                    }
                }
            }
        }
    }
    vocab.freeze();
    let weights: Vec<f64> = (0..vocab.len())
        .map(|_| rng.gen_range(-2.0..=2.0))
        .collect();
    Model::new(
        weights,
        vocab,
        tagset,
        config,
        max_segment_length,
        Vec::new(),
    )
    .unwrap()
}

/// One enumerated analysis: `(start, end, label)` edges and the path score
/// accumulated left to right.
pub struct EnumPath {
    pub edges: Vec<(usize, usize, usize)>,
    pub score: f64,
}

/// Edge potentials computed through the public featurize operation,
/// bypassing the model's lattice cache. `prev == n_labels` is `BEGIN`.
pub struct PotentialTable {
    table: HashMap<(usize, usize, usize, usize), f64>,
    pub n_labels: usize,
}

impl PotentialTable {
    pub fn build(model: &Model, word: &str) -> Self {
        let chars: Vec<char> = word.chars().collect();
        let n = chars.len();
        let l = model.tagset().len();
        let m = model.max_segment_length().unwrap_or(n);
        let config = model.config().clone();
        let resources = Resources::empty();
        let extractor = Extractor::new(&config, &resources);
        let mut vocab = model.vocab().clone(); // frozen: lookups only
        let weights = model.weights();
        // Segment features summed in index order, the transition weight
        // added last; this matches the decoder's floating-point op order,
        // which the exact-score check requires.
        let mut potential_of =
            |span: std::ops::Range<usize>, tag: &MorphTag, prev: Option<&MorphTag>| -> f64 {
                let v = extractor
                    .featurize(&chars, span, tag, prev, &mut vocab)
                    .unwrap();
                let trans = format!(
                    "TRANS:{}:{tag}",
                    prev.map_or("BEGIN".to_owned(), |p| p.to_string())
                );
                let trans_idx = vocab.lookup(&trans);
                let mut base = 0.0;
                for (i, x) in v.iter() {
                    if Some(i) != trans_idx {
                        base += weights[i as usize] * x;
                    }
                }
                base + trans_idx.map_or(0.0, |i| weights[i as usize])
            };
        let mut table = HashMap::new();
        for start in 0..n {
            for end in (start + 1)..=n.min(start + m) {
                for label in 0..l {
                    let tag = model.tagset().tag(label);
                    if start == 0 {
                        table.insert((start, end, label, l), potential_of(start..end, tag, None));
                    } else {
                        for prev in 0..l {
                            let prev_tag = model.tagset().tag(prev);
                            table.insert(
                                (start, end, label, prev),
                                potential_of(start..end, tag, Some(prev_tag)),
                            );
                        }
                    }
                }
            }
        }
        PotentialTable { table, n_labels: l }
    }

    pub fn get(&self, start: usize, end: usize, label: usize, prev: usize) -> f64 {
        self.table[&(start, end, label, prev)]
    }
}

/// Enumerates every labeled decomposition of `0..n` with segment lengths
/// up to `m`, scoring each left to right from the potential table.
pub fn enumerate_paths(pots: &PotentialTable, n: usize, m: usize) -> Vec<EnumPath> {
    let l = pots.n_labels;
    let mut out = Vec::new();
    let mut edges = Vec::new();
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        pots: &PotentialTable,
        n: usize,
        m: usize,
        l: usize,
        pos: usize,
        score: f64,
        prev: usize,
        edges: &mut Vec<(usize, usize, usize)>,
        out: &mut Vec<EnumPath>,
    ) {
        if pos == n {
            out.push(EnumPath {
                edges: edges.clone(),
                score,
            });
            return;
        }
        for end in (pos + 1)..=n.min(pos + m) {
            for label in 0..l {
                edges.push((pos, end, label));
                recurse(
                    pots,
                    n,
                    m,
                    l,
                    end,
                    score + pots.get(pos, end, label, prev),
                    label,
                    edges,
                    out,
                );
                edges.pop();
            }
        }
    }
    recurse(pots, n, m, l, 0, 0.0, l, &mut edges, &mut out);
    out
}

/// Log-sum-exp over enumerated path scores.
pub fn enum_log_z(paths: &[EnumPath]) -> f64 {
    let max = paths
        .iter()
        .map(|p| p.score)
        .fold(f64::NEG_INFINITY, f64::max);
    max + paths
        .iter()
        .map(|p| (p.score - max).exp())
        .sum::<f64>()
        .ln()
}

/// The enumerated argmax under the decoding tie-break: highest score, then
/// fewest segments, then the lexicographically smallest label sequence.
pub fn enum_best(paths: &[EnumPath]) -> &EnumPath {
    let mut best = &paths[0];
    for p in &paths[1..] {
        let better = p.score > best.score
            || (p.score == best.score
                && (p.edges.len() < best.edges.len()
                    || (p.edges.len() == best.edges.len()
                        && p.edges
                            .iter()
                            .map(|e| e.2)
                            .lt(best.edges.iter().map(|e| e.2)))));
        if better {
            best = p;
        }
    }
    best
}

/// Posterior mass of every `(start, end, label, prev)` edge by direct
/// enumeration; `prev == n_labels` encodes `BEGIN`.
pub fn enum_marginals(
    paths: &[EnumPath],
    log_z: f64,
    n_labels: usize,
) -> HashMap<(usize, usize, usize, usize), f64> {
    let mut mass: HashMap<(usize, usize, usize, usize), f64> = HashMap::new();
    for p in paths {
        let w = (p.score - log_z).exp();
        let mut prev = n_labels;
        for &(s, e, l) in &p.edges {
            *mass.entry((s, e, l, prev)).or_insert(0.0) += w;
            prev = l;
        }
    }
    mass
}

/// An independently written first-order linear-chain CRF over characters:
/// position `i` carries the features of span `[i, i+1)`. Implemented with
/// its own forward recursion and log-sum-exp.
pub fn linear_chain_log_z(model: &Model, word: &str) -> f64 {
    let pots = PotentialTable::build(model, word);
    let n = word.chars().count();
    let l = pots.n_labels;
    let lse = |xs: &[f64]| -> f64 {
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
    };
    // fwd[label] = log mass of prefixes ending in `label`.
    let mut fwd: Vec<f64> = (0..l).map(|label| pots.get(0, 1, label, l)).collect();
    for i in 1..n {
        let mut next = Vec::with_capacity(l);
        for label in 0..l {
            let terms: Vec<f64> = (0..l)
                .map(|prev| fwd[prev] + pots.get(i, i + 1, label, prev))
                .collect();
            next.push(lse(&terms));
        }
        fwd = next;
    }
    lse(&fwd)
}
