//! Exact inference over the labeled-segmentation lattice.
//!
//! A word of `N` codepoints is covered by segments `[start, end)` of length
//! at most `m` (the configurable maximum segment length; unbounded when
//! `None`). Each segment carries a label from the active tagset, and the
//! log-potential of an edge is the dot product of the weight vector with
//! the candidate's features. Segments starting at position 0 transition
//! from the reserved `BEGIN` state, whose transition features are ordinary
//! learned weights.
//!
//! All recursions run in log-space with streaming log-sum-exp; no scaling
//! tricks. Per-word charts are thread-local, so many words can be decoded
//! concurrently against one shared read-only [`Model`].

use std::ops::Range;

use crate::errors::{Error, Result};
use crate::features::{Extractor, FeatureConfig, FeatureVocabulary, Resources};
use crate::tags::{LabeledSegmentation, Tagset, BEGIN_LABEL};

/// One scored edge of the lattice: a span with its label index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentEdge {
    pub start: usize,
    pub end: usize,
    pub label: usize,
}

/// A full decomposition of the word: consecutive edges covering `0..N`.
pub type Path = Vec<SegmentEdge>;

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
struct LogSumAcc {
    max: f64,
    sum: f64,
}

impl LogSumAcc {
    fn new() -> Self {
        LogSumAcc {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    fn value(self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Per-word cache of feature indices: one index list per `(span, label)`
/// plus the `(previous label, label)` transition table. Built once and
/// reused by every recursion that touches the word.
#[derive(Debug, Clone)]
pub struct FeatureLattice {
    n_chars: usize,
    n_labels: usize,
    /// Spans ordered by `(end, start)`, lengths capped at `m`.
    spans: Vec<(usize, usize)>,
    /// Contiguous `spans` range of the spans ending at each position.
    spans_at_end: Vec<Range<usize>>,
    /// Span ids of the spans starting at each position.
    spans_at_start: Vec<Vec<usize>>,
    /// CSR offsets into `indices`, one slot per `span_id * L + label`.
    offsets: Vec<u32>,
    indices: Vec<u32>,
    /// Transition feature index per `prev * L + label`; row `L` is `BEGIN`.
    /// `None` when the vocabulary does not know the transition.
    trans: Vec<Option<u32>>,
}

impl FeatureLattice {
    /// Extracts every candidate's features for one word. `resolve` maps a
    /// feature string to its index: interning during vocabulary build,
    /// plain lookup against a frozen vocabulary at inference time.
    pub fn build<F>(
        word: &[char],
        tagset: &Tagset,
        extractor: &Extractor<'_>,
        max_segment_length: Option<usize>,
        mut resolve: F,
    ) -> Result<Self>
    where
        F: FnMut(&str) -> Option<u32>,
    {
        let n = word.len();
        if n == 0 {
            return Err(Error::Segmentation {
                word: String::new(),
                reason: "empty word".into(),
            });
        }
        let n_labels = tagset.len();
        let m = max_segment_length.unwrap_or(usize::MAX);
        let label_strings: Vec<String> = tagset.tags().iter().map(|t| t.to_string()).collect();

        let mut spans = Vec::new();
        let mut spans_at_end = Vec::with_capacity(n + 1);
        spans_at_end.push(0..0); // no span ends at position 0
        for end in 1..=n {
            let lo = spans.len();
            let first_start = end.saturating_sub(m);
            for start in first_start..end {
                spans.push((start, end));
            }
            spans_at_end.push(lo..spans.len());
        }
        let mut spans_at_start = vec![Vec::new(); n];
        for (id, &(start, _)) in spans.iter().enumerate() {
            spans_at_start[start].push(id);
        }

        let mut offsets = Vec::with_capacity(spans.len() * n_labels + 1);
        offsets.push(0u32);
        let mut indices: Vec<u32> = Vec::new();
        let mut scratch: Vec<u32> = Vec::new();
        for &(start, end) in &spans {
            for label in &label_strings {
                scratch.clear();
                extractor.emit_base(word, start..end, label, |s| {
                    if let Some(i) = resolve(s) {
                        scratch.push(i);
                    }
                });
                scratch.sort_unstable();
                scratch.dedup();
                indices.extend_from_slice(&scratch);
                offsets.push(indices.len() as u32);
            }
        }

        let mut trans = Vec::with_capacity((n_labels + 1) * n_labels);
        let mut buf = String::new();
        for prev in 0..=n_labels {
            let prev_str = if prev == n_labels {
                BEGIN_LABEL
            } else {
                &label_strings[prev]
            };
            for label in &label_strings {
                buf.clear();
                buf.push_str("TRANS:");
                buf.push_str(prev_str);
                buf.push(':');
                buf.push_str(label);
                trans.push(resolve(&buf));
            }
        }

        Ok(FeatureLattice {
            n_chars: n,
            n_labels,
            spans,
            spans_at_end,
            spans_at_start,
            offsets,
            indices,
            trans,
        })
    }

    pub fn n_chars(&self) -> usize {
        self.n_chars
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn spans(&self) -> &[(usize, usize)] {
        &self.spans
    }

    fn span_id(&self, start: usize, end: usize) -> Option<usize> {
        let range = self.spans_at_end.get(end)?.clone();
        self.spans[range.clone()]
            .binary_search_by_key(&start, |&(s, _)| s)
            .ok()
            .map(|off| range.start + off)
    }

    /// Feature indices of `(span, label)`.
    pub fn base_features(&self, span_id: usize, label: usize) -> &[u32] {
        let slot = span_id * self.n_labels + label;
        let lo = self.offsets[slot] as usize;
        let hi = self.offsets[slot + 1] as usize;
        &self.indices[lo..hi]
    }

    /// Transition feature index; `prev = n_labels` is the `BEGIN` row.
    pub fn trans_feature(&self, prev: usize, label: usize) -> Option<u32> {
        self.trans[prev * self.n_labels + label]
    }

    fn base_score(&self, weights: &[f64], span_id: usize, label: usize) -> f64 {
        self.base_features(span_id, label)
            .iter()
            .map(|&i| weights[i as usize])
            .sum()
    }

    fn trans_score(&self, weights: &[f64], prev: usize, label: usize) -> f64 {
        self.trans_feature(prev, label)
            .map_or(0.0, |i| weights[i as usize])
    }

    /// The log-potential of one edge (`prev = n_labels` for `BEGIN`).
    pub fn potential(&self, weights: &[f64], span_id: usize, label: usize, prev: usize) -> f64 {
        self.base_score(weights, span_id, label) + self.trans_score(weights, prev, label)
    }
}

/// Per-word table of log-potentials, forward/backward values and the
/// partition function.
#[derive(Debug, Clone)]
pub struct Chart {
    n_chars: usize,
    n_labels: usize,
    /// `phi[(span * L + label) * (L + 1) + prev]`; row `prev = L` is `BEGIN`.
    phi: Vec<f64>,
    /// `alpha[pos * L + label]` for `pos` in `0..=N`; `alpha[0][l] = 0`.
    alpha: Vec<f64>,
    /// `beta[pos * L + label]`; `beta[N][l] = 0`. Empty until backward runs.
    beta: Vec<f64>,
    /// Log mass from position 0 through `BEGIN`; equals `log_z` up to
    /// rounding once backward has run.
    beta_begin: f64,
    log_z: f64,
}

impl Chart {
    /// Materializes the potentials and runs the forward recursion.
    pub fn forward(lattice: &FeatureLattice, weights: &[f64]) -> Self {
        let n = lattice.n_chars;
        let l_count = lattice.n_labels;
        let n_spans = lattice.spans.len();

        let mut phi = vec![0.0; n_spans * l_count * (l_count + 1)];
        for span_id in 0..n_spans {
            for label in 0..l_count {
                let base = lattice.base_score(weights, span_id, label);
                let at = (span_id * l_count + label) * (l_count + 1);
                for prev in 0..=l_count {
                    phi[at + prev] = base + lattice.trans_score(weights, prev, label);
                }
            }
        }

        let mut alpha = vec![f64::NEG_INFINITY; (n + 1) * l_count];
        for slot in alpha.iter_mut().take(l_count) {
            *slot = 0.0; // base case: alpha(0, l) = 0 in log-space
        }
        for end in 1..=n {
            for label in 0..l_count {
                let mut acc = LogSumAcc::new();
                for span_id in lattice.spans_at_end[end].clone() {
                    let (start, _) = lattice.spans[span_id];
                    let at = (span_id * l_count + label) * (l_count + 1);
                    if start == 0 {
                        // One predecessor state at the word start: BEGIN.
                        acc.add(phi[at + l_count]);
                    } else {
                        for prev in 0..l_count {
                            acc.add(phi[at + prev] + alpha[start * l_count + prev]);
                        }
                    }
                }
                alpha[end * l_count + label] = acc.value();
            }
        }
        let mut z = LogSumAcc::new();
        for label in 0..l_count {
            z.add(alpha[n * l_count + label]);
        }

        Chart {
            n_chars: n,
            n_labels: l_count,
            phi,
            alpha,
            beta: Vec::new(),
            beta_begin: f64::NAN,
            log_z: z.value(),
        }
    }

    /// Runs the backward recursion over the materialized potentials.
    pub fn run_backward(&mut self, lattice: &FeatureLattice) {
        let n = self.n_chars;
        let l_count = self.n_labels;
        let mut beta = vec![f64::NEG_INFINITY; (n + 1) * l_count];
        for slot in beta.iter_mut().skip(n * l_count) {
            *slot = 0.0; // base case: beta(N, l) = 0 in log-space
        }
        for start in (1..n).rev() {
            for prev in 0..l_count {
                let mut acc = LogSumAcc::new();
                for &span_id in &lattice.spans_at_start[start] {
                    let (_, end) = lattice.spans[span_id];
                    for label in 0..l_count {
                        let at = (span_id * l_count + label) * (l_count + 1);
                        acc.add(self.phi[at + prev] + beta[end * l_count + label]);
                    }
                }
                beta[start * l_count + prev] = acc.value();
            }
        }
        let mut acc = LogSumAcc::new();
        for &span_id in &lattice.spans_at_start[0] {
            let (_, end) = lattice.spans[span_id];
            for label in 0..l_count {
                let at = (span_id * l_count + label) * (l_count + 1);
                acc.add(self.phi[at + l_count] + beta[end * l_count + label]);
            }
        }
        self.beta_begin = acc.value();
        self.beta = beta;
    }

    pub fn n_chars(&self) -> usize {
        self.n_chars
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn alpha(&self, pos: usize, label: usize) -> f64 {
        self.alpha[pos * self.n_labels + label]
    }

    pub fn beta(&self, pos: usize, label: usize) -> f64 {
        self.beta[pos * self.n_labels + label]
    }

    /// The log partition function from the forward pass.
    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// The log partition function recomputed by the backward pass.
    pub fn log_z_backward(&self) -> f64 {
        self.beta_begin
    }

    pub fn has_backward(&self) -> bool {
        !self.beta.is_empty()
    }

    fn phi_at(&self, span_id: usize, label: usize, prev: usize) -> f64 {
        self.phi[(span_id * self.n_labels + label) * (self.n_labels + 1) + prev]
    }

    /// Log mass of all decompositions whose covering segment contains the
    /// character gap `pos..pos+1`; equals `log_z` for every position.
    pub fn boundary_log_mass(&self, lattice: &FeatureLattice, pos: usize) -> f64 {
        let l_count = self.n_labels;
        let mut acc = LogSumAcc::new();
        for (span_id, &(start, end)) in lattice.spans.iter().enumerate() {
            if start > pos || end <= pos {
                continue;
            }
            for label in 0..l_count {
                let tail = self.beta[end * l_count + label];
                if start == 0 {
                    acc.add(self.phi_at(span_id, label, l_count) + tail);
                } else {
                    for prev in 0..l_count {
                        acc.add(
                            self.alpha[start * l_count + prev]
                                + self.phi_at(span_id, label, prev)
                                + tail,
                        );
                    }
                }
            }
        }
        acc.value()
    }
}

/// Posterior probability of one lattice edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeMarginal {
    pub start: usize,
    pub end: usize,
    pub label: usize,
    /// `None` stands for the `BEGIN` state (spans starting at 0).
    pub prev: Option<usize>,
    pub prob: f64,
}

/// All edge posteriors of one word.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub log_z: f64,
    pub edges: Vec<EdgeMarginal>,
}

impl Marginals {
    /// Probability of a specific edge; 0 when absent from the lattice.
    pub fn prob(&self, start: usize, end: usize, label: usize, prev: Option<usize>) -> f64 {
        self.edges
            .iter()
            .find(|e| e.start == start && e.end == end && e.label == label && e.prev == prev)
            .map_or(0.0, |e| e.prob)
    }
}

fn compute_marginals(lattice: &FeatureLattice, chart: &Chart) -> Marginals {
    let l_count = lattice.n_labels;
    let mut edges = Vec::new();
    for (span_id, &(start, end)) in lattice.spans.iter().enumerate() {
        for label in 0..l_count {
            let tail = chart.beta[end * l_count + label];
            if start == 0 {
                let lp = chart.phi_at(span_id, label, l_count) + tail - chart.log_z;
                edges.push(EdgeMarginal {
                    start,
                    end,
                    label,
                    prev: None,
                    prob: lp.exp(),
                });
            } else {
                for prev in 0..l_count {
                    let lp = chart.alpha[start * l_count + prev]
                        + chart.phi_at(span_id, label, prev)
                        + tail
                        - chart.log_z;
                    edges.push(EdgeMarginal {
                        start,
                        end,
                        label,
                        prev: Some(prev),
                        prob: lp.exp(),
                    });
                }
            }
        }
    }
    Marginals {
        log_z: chart.log_z,
        edges,
    }
}

#[derive(Debug, Clone)]
struct VitState {
    score: f64,
    path: Path,
}

/// `true` when candidate `(score, path)` beats the incumbent under the
/// deterministic tie-break: higher score, then fewer segments, then the
/// lexicographically smaller label-index sequence.
fn beats(cand_score: f64, cand_path: &Path, inc: &Option<VitState>) -> bool {
    match inc {
        None => true,
        Some(best) => {
            if cand_score != best.score {
                return cand_score > best.score;
            }
            if cand_path.len() != best.path.len() {
                return cand_path.len() < best.path.len();
            }
            let cand_labels = cand_path.iter().map(|e| e.label);
            let inc_labels = best.path.iter().map(|e| e.label);
            cand_labels.lt(inc_labels)
        }
    }
}

/// Max-product decoding over the lattice with the deterministic tie-break.
pub fn viterbi_path(lattice: &FeatureLattice, weights: &[f64]) -> (Path, f64) {
    let n = lattice.n_chars;
    let l_count = lattice.n_labels;
    let chart = Chart::forward(lattice, weights); // materialized potentials

    let mut states: Vec<Option<VitState>> = vec![None; (n + 1) * l_count];
    for end in 1..=n {
        for label in 0..l_count {
            let mut best: Option<VitState> = None;
            for span_id in lattice.spans_at_end[end].clone() {
                let (start, _) = lattice.spans[span_id];
                let edge = SegmentEdge { start, end, label };
                if start == 0 {
                    let score = chart.phi_at(span_id, label, l_count);
                    let path = vec![edge];
                    if beats(score, &path, &best) {
                        best = Some(VitState { score, path });
                    }
                } else {
                    for prev in 0..l_count {
                        let Some(pred) = states[start * l_count + prev].as_ref() else {
                            continue;
                        };
                        let score = pred.score + chart.phi_at(span_id, label, prev);
                        let mut path = pred.path.clone();
                        path.push(edge);
                        if beats(score, &path, &best) {
                            best = Some(VitState { score, path });
                        }
                    }
                }
            }
            states[end * l_count + label] = best;
        }
    }

    let mut overall: Option<VitState> = None;
    for label in 0..l_count {
        if let Some(state) = states[n * l_count + label].take() {
            if beats(state.score, &state.path, &overall) {
                overall = Some(state);
            }
        }
    }
    let best = overall.expect("word of length >= 1 always has a decomposition");
    (best.path, best.score)
}

/// Resource fingerprint stored in model files: `(name, sha256-hex)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceFingerprint {
    pub name: String,
    pub sha256_hex: String,
}

/// A trained semi-Markov CRF: weights, feature vocabulary, tagset and the
/// configuration needed to decode deterministically.
#[derive(Debug, Clone)]
pub struct Model {
    weights: Vec<f64>,
    vocab: FeatureVocabulary,
    tagset: Tagset,
    config: FeatureConfig,
    max_segment_length: Option<usize>,
    fingerprints: Vec<ResourceFingerprint>,
}

impl Model {
    pub fn new(
        weights: Vec<f64>,
        vocab: FeatureVocabulary,
        tagset: Tagset,
        config: FeatureConfig,
        max_segment_length: Option<usize>,
        fingerprints: Vec<ResourceFingerprint>,
    ) -> Result<Self> {
        if weights.len() != vocab.len() {
            return Err(Error::Config(format!(
                "weight vector has {} entries for a vocabulary of {}",
                weights.len(),
                vocab.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("non-finite weight".into()));
        }
        if !vocab.is_frozen() {
            return Err(Error::Config("model vocabulary must be frozen".into()));
        }
        config.validate()?;
        Ok(Model {
            weights,
            vocab,
            tagset,
            config,
            max_segment_length,
            fingerprints,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn vocab(&self) -> &FeatureVocabulary {
        &self.vocab
    }

    pub fn tagset(&self) -> &Tagset {
        &self.tagset
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn max_segment_length(&self) -> Option<usize> {
        self.max_segment_length
    }

    pub fn fingerprints(&self) -> &[ResourceFingerprint] {
        &self.fingerprints
    }

    /// Builds the per-word feature lattice against the frozen vocabulary.
    pub fn lattice(&self, word: &str, resources: &Resources) -> Result<FeatureLattice> {
        let chars: Vec<char> = word.chars().collect();
        let extractor = Extractor::new(&self.config, resources);
        FeatureLattice::build(
            &chars,
            &self.tagset,
            &extractor,
            self.max_segment_length,
            |s| self.vocab.lookup(s),
        )
    }

    /// Converts a labeled segmentation to lattice edges, validating labels
    /// and segment lengths.
    pub fn path_of(&self, ls: &LabeledSegmentation) -> Result<Path> {
        path_of(ls, &self.tagset, self.max_segment_length)
    }

    /// Unnormalized log-score of one analysis; the log-probability is this
    /// minus `log_z`.
    pub fn score(
        &self,
        word: &str,
        ls: &LabeledSegmentation,
        resources: &Resources,
    ) -> Result<f64> {
        if ls.word() != word {
            return Err(Error::EvalInput(format!(
                "analysis of `{}` scored against word `{word}`",
                ls.word()
            )));
        }
        let lattice = self.lattice(word, resources)?;
        let path = self.path_of(ls)?;
        Ok(path_score(&lattice, &self.weights, &path))
    }

    /// Forward recursion: alpha values and the partition function.
    pub fn forward(&self, word: &str, resources: &Resources) -> Result<Chart> {
        let lattice = self.lattice(word, resources)?;
        Ok(Chart::forward(&lattice, &self.weights))
    }

    /// Forward plus backward recursion.
    pub fn backward(&self, word: &str, resources: &Resources) -> Result<Chart> {
        let lattice = self.lattice(word, resources)?;
        let mut chart = Chart::forward(&lattice, &self.weights);
        chart.run_backward(&lattice);
        Ok(chart)
    }

    /// Posterior edge marginals `p(span, label, prev | word)`.
    pub fn marginals(&self, word: &str, resources: &Resources) -> Result<Marginals> {
        let lattice = self.lattice(word, resources)?;
        let mut chart = Chart::forward(&lattice, &self.weights);
        chart.run_backward(&lattice);
        Ok(compute_marginals(&lattice, &chart))
    }

    /// One-best labeled segmentation and its unnormalized log-score.
    pub fn viterbi(&self, word: &str, resources: &Resources) -> Result<(LabeledSegmentation, f64)> {
        let chars: Vec<char> = word.chars().collect();
        let lattice = self.lattice(word, resources)?;
        let (path, score) = viterbi_path(&lattice, &self.weights);
        Ok((ls_of(&chars, &path, &self.tagset)?, score))
    }

    /// Negative log-likelihood of the gold analysis and its gradient
    /// (expected minus observed feature counts).
    pub fn gradient(
        &self,
        word: &str,
        gold: &LabeledSegmentation,
        resources: &Resources,
    ) -> Result<(f64, Vec<f64>)> {
        let lattice = self.lattice(word, resources)?;
        let path = self.path_of(gold)?;
        let mut grad = vec![0.0; self.weights.len()];
        let nll = accumulate_gradient(&lattice, &self.weights, &[path], false, &mut grad)?;
        Ok((nll, grad))
    }
}

/// Converts an analysis to lattice edges against a tagset.
pub fn path_of(
    ls: &LabeledSegmentation,
    tagset: &Tagset,
    max_segment_length: Option<usize>,
) -> Result<Path> {
    let m = max_segment_length.unwrap_or(usize::MAX);
    let mut path = Vec::with_capacity(ls.len());
    let mut pos = 0;
    for (morph, tag) in ls.segments() {
        let len = morph.chars().count();
        if len > m {
            return Err(Error::SegmentTooLong {
                word: ls.word().to_owned(),
                segment: morph.clone(),
                len,
                max: m,
            });
        }
        let label = tagset
            .index_of(tag)
            .ok_or_else(|| Error::LabelNotInTagset {
                label: tag.to_string(),
            })?;
        path.push(SegmentEdge {
            start: pos,
            end: pos + len,
            label,
        });
        pos += len;
    }
    Ok(path)
}

/// Rebuilds the analysis from lattice edges.
pub fn ls_of(word: &[char], path: &Path, tagset: &Tagset) -> Result<LabeledSegmentation> {
    let segments = path
        .iter()
        .map(|e| {
            let morph: String = word[e.start..e.end].iter().collect();
            (morph, tagset.tag(e.label).clone())
        })
        .collect();
    LabeledSegmentation::new(segments)
}

/// Sum of edge potentials along a path, left to right.
pub fn path_score(lattice: &FeatureLattice, weights: &[f64], path: &Path) -> f64 {
    let l_count = lattice.n_labels;
    let mut score = 0.0;
    let mut prev = l_count; // BEGIN
    for edge in path {
        let span_id = lattice
            .span_id(edge.start, edge.end)
            .expect("path segment exceeds the maximum segment length");
        score += lattice.potential(weights, span_id, edge.label, prev);
        prev = edge.label;
    }
    score
}

/// Adds this word's contribution to `grad` (expected minus observed counts)
/// and returns its negative log-likelihood. With several golds and
/// `marginalize` set, the golds' scores are summed in the numerator;
/// otherwise the first gold is the supervision target.
pub fn accumulate_gradient(
    lattice: &FeatureLattice,
    weights: &[f64],
    gold_paths: &[Path],
    marginalize: bool,
    grad: &mut [f64],
) -> Result<f64> {
    debug_assert!(!gold_paths.is_empty());
    let l_count = lattice.n_labels;
    let mut chart = Chart::forward(lattice, weights);
    chart.run_backward(lattice);
    let log_z = chart.log_z();

    // Expected counts from edge posteriors.
    for (span_id, &(start, end)) in lattice.spans.iter().enumerate() {
        let _ = (start, end);
        for label in 0..l_count {
            let tail = chart.beta[end * l_count + label];
            let mut span_label_mass = 0.0;
            if start == 0 {
                let p = (chart.phi_at(span_id, label, l_count) + tail - log_z).exp();
                if p > 0.0 {
                    span_label_mass += p;
                    if let Some(t) = lattice.trans_feature(l_count, label) {
                        grad[t as usize] += p;
                    }
                }
            } else {
                for prev in 0..l_count {
                    let p = (chart.alpha[start * l_count + prev]
                        + chart.phi_at(span_id, label, prev)
                        + tail
                        - log_z)
                        .exp();
                    if p > 0.0 {
                        span_label_mass += p;
                        if let Some(t) = lattice.trans_feature(prev, label) {
                            grad[t as usize] += p;
                        }
                    }
                }
            }
            if span_label_mass > 0.0 {
                for &i in lattice.base_features(span_id, label) {
                    grad[i as usize] += span_label_mass;
                }
            }
        }
    }

    // Observed counts.
    let nll;
    if marginalize && gold_paths.len() > 1 {
        let scores: Vec<f64> = gold_paths
            .iter()
            .map(|p| path_score(lattice, weights, p))
            .collect();
        let mut acc = LogSumAcc::new();
        for &s in &scores {
            acc.add(s);
        }
        let log_num = acc.value();
        nll = log_z - log_num;
        for (path, &s) in gold_paths.iter().zip(&scores) {
            let w = (s - log_num).exp();
            subtract_path_counts(lattice, path, w, grad);
        }
    } else {
        let path = &gold_paths[0];
        nll = log_z - path_score(lattice, weights, path);
        subtract_path_counts(lattice, path, 1.0, grad);
    }
    Ok(nll)
}

fn subtract_path_counts(lattice: &FeatureLattice, path: &Path, weight: f64, grad: &mut [f64]) {
    let l_count = lattice.n_labels;
    let mut prev = l_count;
    for edge in path {
        let span_id = lattice
            .span_id(edge.start, edge.end)
            .expect("validated path");
        for &i in lattice.base_features(span_id, edge.label) {
            grad[i as usize] -= weight;
        }
        if let Some(t) = lattice.trans_feature(prev, edge.label) {
            grad[t as usize] -= weight;
        }
        prev = edge.label;
    }
}

/// Brute-force helpers shared by unit tests.
#[cfg(test)]
pub(crate) mod enumeration {
    use super::*;

    /// All labeled decompositions of `0..n` with segments of length <= m.
    pub fn all_paths(n: usize, l_count: usize, m: usize) -> Vec<Path> {
        let mut out = Vec::new();
        let mut current = Vec::new();
        fn recurse(
            pos: usize,
            n: usize,
            l_count: usize,
            m: usize,
            current: &mut Path,
            out: &mut Vec<Path>,
        ) {
            if pos == n {
                out.push(current.clone());
                return;
            }
            for end in (pos + 1)..=n.min(pos + m) {
                for label in 0..l_count {
                    current.push(SegmentEdge {
                        start: pos,
                        end,
                        label,
                    });
                    recurse(end, n, l_count, m, current, out);
                    current.pop();
                }
            }
        }
        recurse(0, n, l_count, m, &mut current, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureConfig;
    use crate::tags::{MorphTag, TagsetLevel};

    fn tagset_of(labels: &[&str]) -> Tagset {
        let tags = labels
            .iter()
            .map(|s| MorphTag::parse(s).unwrap())
            .collect::<Vec<_>>();
        let level = TagsetLevel::new(if labels == ["SEGMENT"] { 0 } else { 1 }).unwrap();
        Tagset::from_tags(level, tags).unwrap()
    }

    /// Builds a model over `word`'s own lattice vocabulary with the given
    /// weight generator.
    fn toy_model(
        word: &str,
        labels: &[&str],
        m: Option<usize>,
        mut weight_of: impl FnMut(&str) -> f64,
    ) -> Model {
        let tagset = tagset_of(labels);
        let config = FeatureConfig {
            max_context_ngram: 2,
            ..FeatureConfig::default()
        };
        let resources = Resources::empty();
        let mut vocab = FeatureVocabulary::new();
        {
            let extractor = Extractor::new(&config, &resources);
            let chars: Vec<char> = word.chars().collect();
            FeatureLattice::build(&chars, &tagset, &extractor, m, |s| vocab.resolve(s)).unwrap();
        }
        vocab.freeze();
        let weights = (0..vocab.len())
            .map(|i| weight_of(vocab.name(i as u32)))
            .collect();
        Model::new(weights, vocab, tagset, config, m, Vec::new()).unwrap()
    }

    #[test]
    fn logz_counts_segmentations_at_zero_weights() {
        let res = Resources::empty();
        // 1-letter word, one label: a single decomposition.
        let model = toy_model("a", &["SEGMENT"], None, |_| 0.0);
        assert!(model.forward("a", &res).unwrap().log_z().abs() < 1e-12);

        // 3-letter word, one label: 2^(3-1) = 4 decompositions.
        let model = toy_model("abc", &["SEGMENT"], None, |_| 0.0);
        let chart = model.forward("abc", &res).unwrap();
        assert!((chart.log_z() - 4.0_f64.ln()).abs() < 1e-12);

        // 2-letter word, two labels: 2 + 4 = 6 labeled decompositions.
        let model = toy_model("ab", &["ROOT", "SUFFIX"], None, |_| 0.0);
        let chart = model.forward("ab", &res).unwrap();
        assert!((chart.log_z() - 6.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn alpha_base_case_is_zero() {
        let model = toy_model("ab", &["ROOT", "SUFFIX"], None, |_| 0.25);
        let chart = model.forward("ab", &Resources::empty()).unwrap();
        for label in 0..2 {
            assert_eq!(chart.alpha(0, label), 0.0);
        }
    }

    fn pseudo_weights(name: &str) -> f64 {
        // Deterministic pseudo-random weight in [-2, 2] from the name.
        let mut h: u64 = 0xcbf29ce484222325;
        for b in name.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        (h % 4001) as f64 / 1000.0 - 2.0
    }

    fn enum_check(word: &str, labels: &[&str], m: Option<usize>) {
        let model = toy_model(word, labels, m, pseudo_weights);
        let res = Resources::empty();
        let lattice = model.lattice(word, &res).unwrap();
        let n = word.chars().count();
        let paths = enumeration::all_paths(n, labels.len(), m.unwrap_or(n));

        let scores: Vec<f64> = paths
            .iter()
            .map(|p| path_score(&lattice, model.weights(), p))
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();

        let chart = model.backward(word, &res).unwrap();
        assert!(
            (chart.log_z() - log_z).abs() < 1e-10,
            "forward logZ {} vs enumerated {log_z}",
            chart.log_z()
        );
        assert!((chart.log_z_backward() - chart.log_z()).abs() < 1e-10);

        // Viterbi matches the enumerated argmax under the tie-break.
        let (path, score) = viterbi_path(&lattice, model.weights());
        let mut best: Option<(f64, &Path)> = None;
        for (p, &s) in paths.iter().zip(&scores) {
            let replace = match best {
                None => true,
                Some((bs, bp)) => {
                    s > bs
                        || (s == bs
                            && (p.len() < bp.len()
                                || (p.len() == bp.len()
                                    && p.iter().map(|e| e.label).lt(bp.iter().map(|e| e.label)))))
                }
            };
            if replace {
                best = Some((s, p));
            }
        }
        let (best_score, best_path) = best.unwrap();
        assert_eq!(score, best_score, "viterbi score must equal enumerated max");
        assert_eq!(&path, best_path);

        // Marginals match enumeration.
        let marginals = model.marginals(word, &res).unwrap();
        for edge in &marginals.edges {
            let mut mass = 0.0;
            for (p, &s) in paths.iter().zip(&scores) {
                let mut prev = None;
                for e in p {
                    let here = e.start == edge.start
                        && e.end == edge.end
                        && e.label == edge.label
                        && prev == edge.prev;
                    if here {
                        mass += (s - log_z).exp();
                    }
                    prev = Some(e.label);
                }
            }
            assert!(
                (edge.prob - mass).abs() < 1e-10,
                "edge {:?} prob {} vs enumerated {mass}",
                edge,
                edge.prob
            );
        }
    }

    #[test]
    fn enumeration_equivalence_small() {
        enum_check("ab", &["ROOT", "SUFFIX"], None);
        enum_check("abc", &["SEGMENT"], None);
        enum_check("abcd", &["PREFIX", "ROOT", "SUFFIX"], None);
        enum_check("abcde", &["ROOT", "SUFFIX"], Some(3));
    }

    #[test]
    fn backward_base_case() {
        let model = toy_model("a", &["ROOT", "SUFFIX"], None, pseudo_weights);
        let chart = model.backward("a", &Resources::empty()).unwrap();
        for label in 0..2 {
            assert_eq!(chart.beta(1, label), 0.0);
        }
    }

    #[test]
    fn uniform_marginals_at_zero_weights() {
        let model = toy_model("ab", &["SEGMENT"], None, |_| 0.0);
        let marginals = model.marginals("ab", &Resources::empty()).unwrap();
        assert!((marginals.prob(0, 2, 0, None) - 0.5).abs() < 1e-12);
        assert!((marginals.prob(0, 1, 0, None) - 0.5).abs() < 1e-12);
        assert!((marginals.prob(1, 2, 0, Some(0)) - 0.5).abs() < 1e-12);
        // First-segment marginals sum to one.
        let first: f64 = marginals
            .edges
            .iter()
            .filter(|e| e.start == 0)
            .map(|e| e.prob)
            .sum();
        assert!((first - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_mass_equals_logz_everywhere() {
        let model = toy_model("abcd", &["ROOT", "SUFFIX"], None, pseudo_weights);
        let res = Resources::empty();
        let lattice = model.lattice("abcd", &res).unwrap();
        let chart = model.backward("abcd", &res).unwrap();
        for pos in 0..4 {
            assert!(
                (chart.boundary_log_mass(&lattice, pos) - chart.log_z()).abs() < 1e-10,
                "position {pos}"
            );
        }
    }

    #[test]
    fn score_is_linear_in_weights() {
        let word = "abc";
        let model = toy_model(word, &["ROOT", "SUFFIX"], None, pseudo_weights);
        let doubled = Model::new(
            model.weights().iter().map(|w| 2.0 * w).collect(),
            model.vocab().clone(),
            model.tagset().clone(),
            model.config().clone(),
            model.max_segment_length(),
            Vec::new(),
        )
        .unwrap();
        let ls = LabeledSegmentation::new(vec![
            ("ab".into(), MorphTag::parse("ROOT").unwrap()),
            ("c".into(), MorphTag::parse("SUFFIX").unwrap()),
        ])
        .unwrap();
        let res = Resources::empty();
        let s1 = model.score(word, &ls, &res).unwrap();
        let s2 = doubled.score(word, &ls, &res).unwrap();
        assert!((s2 - 2.0 * s1).abs() < 1e-9);

        let zero = toy_model(word, &["ROOT", "SUFFIX"], None, |_| 0.0);
        assert_eq!(zero.score(word, &ls, &res).unwrap(), 0.0);
    }

    #[test]
    fn viterbi_tie_break_at_zero_weights() {
        // All decompositions score 0: fewest segments, then lowest label.
        let model = toy_model("abc", &["PREFIX", "ROOT", "SUFFIX"], None, |_| 0.0);
        let (ls, score) = model.viterbi("abc", &Resources::empty()).unwrap();
        assert_eq!(score, 0.0);
        assert_eq!(ls.len(), 1);
        assert_eq!(ls.segments()[0].0, "abc");
        assert_eq!(ls.segments()[0].1.to_string(), "PREFIX");
    }

    #[test]
    fn gradient_zero_when_gold_is_only_analysis() {
        let model = toy_model("a", &["SEGMENT"], None, pseudo_weights);
        let gold =
            LabeledSegmentation::new(vec![("a".into(), MorphTag::parse("SEGMENT").unwrap())])
                .unwrap();
        let (nll, grad) = model.gradient("a", &gold, &Resources::empty()).unwrap();
        assert!(nll.abs() < 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn transition_gradient_by_hand() {
        // Zero weights, word "ab", one label, gold a+b: the observed
        // TRANS:SEGMENT:SEGMENT count is 1, the expected count 1/2.
        let model = toy_model("ab", &["SEGMENT"], None, |_| 0.0);
        let gold = LabeledSegmentation::new(vec![
            ("a".into(), MorphTag::parse("SEGMENT").unwrap()),
            ("b".into(), MorphTag::parse("SEGMENT").unwrap()),
        ])
        .unwrap();
        let (nll, grad) = model.gradient("ab", &gold, &Resources::empty()).unwrap();
        assert!((nll - 2.0_f64.ln()).abs() < 1e-12);
        let idx = model.vocab().lookup("TRANS:SEGMENT:SEGMENT").unwrap() as usize;
        assert!((grad[idx] - (0.5 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let word = "abcd";
        let model = toy_model(word, &["ROOT", "SUFFIX"], None, pseudo_weights);
        let res = Resources::empty();
        let gold = LabeledSegmentation::new(vec![
            ("ab".into(), MorphTag::parse("ROOT").unwrap()),
            ("cd".into(), MorphTag::parse("SUFFIX").unwrap()),
        ])
        .unwrap();
        let (_, grad) = model.gradient(word, &gold, &res).unwrap();

        let nll_at = |weights: Vec<f64>| -> f64 {
            let m = Model::new(
                weights,
                model.vocab().clone(),
                model.tagset().clone(),
                model.config().clone(),
                None,
                Vec::new(),
            )
            .unwrap();
            let chart = m.forward(word, &res).unwrap();
            chart.log_z() - m.score(word, &gold, &res).unwrap()
        };
        let h = 1e-5;
        for i in (0..model.weights().len()).step_by(3) {
            let mut up = model.weights().to_vec();
            up[i] += h;
            let mut down = model.weights().to_vec();
            down[i] -= h;
            let fd = (nll_at(up) - nll_at(down)) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(fd.abs()).max(1.0);
            assert!(rel < 1e-6, "coord {i}: fd {fd} vs analytic {}", grad[i]);
        }
    }

    #[test]
    fn segment_length_cap_enforced() {
        let model = toy_model("abcd", &["ROOT", "SUFFIX"], Some(2), |_| 0.0);
        let gold = LabeledSegmentation::new(vec![
            ("abc".into(), MorphTag::parse("ROOT").unwrap()),
            ("d".into(), MorphTag::parse("SUFFIX").unwrap()),
        ])
        .unwrap();
        let err = model
            .gradient("abcd", &gold, &Resources::empty())
            .unwrap_err();
        assert!(matches!(err, Error::SegmentTooLong { .. }), "{err}");
        let err2 = model
            .score(
                "abcd",
                &LabeledSegmentation::new(vec![("abcd".into(), MorphTag::parse("ROOT").unwrap())])
                    .unwrap(),
                &Resources::empty(),
            )
            .unwrap_err();
        assert!(matches!(err2, Error::SegmentTooLong { .. }), "{err2}");
    }

    #[test]
    fn label_outside_tagset_rejected() {
        let model = toy_model("ab", &["ROOT", "SUFFIX"], None, |_| 0.0);
        let ls = LabeledSegmentation::new(vec![("ab".into(), MorphTag::parse("UNKNOWN").unwrap())])
            .unwrap();
        let err = model.score("ab", &ls, &Resources::empty()).unwrap_err();
        assert!(matches!(err, Error::LabelNotInTagset { .. }));
    }

    #[test]
    fn shifting_all_transition_weights_scales_paths_by_segment_count() {
        let word = "abc";
        let model = toy_model(word, &["ROOT", "SUFFIX"], None, pseudo_weights);
        let res = Resources::empty();
        let lattice = model.lattice(word, &res).unwrap();
        let paths = enumeration::all_paths(3, 2, 3);
        let base: Vec<f64> = paths
            .iter()
            .map(|p| path_score(&lattice, model.weights(), p))
            .collect();

        let c = 0.7;
        let mut shifted = model.weights().to_vec();
        for (i, name) in model.vocab().names().iter().enumerate() {
            if name.starts_with("TRANS:") {
                shifted[i] += c;
            }
        }
        // Every edge has exactly one transition feature, so every path score
        // moves by c times its segment count.
        for (p, &s) in paths.iter().zip(&base) {
            let s2 = path_score(&lattice, &shifted, p);
            assert!((s2 - (s + c * p.len() as f64)).abs() < 1e-9);
        }
        let mut acc = LogSumAcc::new();
        for (p, &s) in paths.iter().zip(&base) {
            acc.add(s + c * p.len() as f64);
        }
        let chart = Chart::forward(&lattice, &shifted);
        assert!((chart.log_z() - acc.value()).abs() < 1e-10);
    }
}
