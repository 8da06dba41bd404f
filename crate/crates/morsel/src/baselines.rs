//! Comparison systems: a character-level first-order CRF mode and the
//! MaxEnt whole-word tag classifiers.
//!
//! The character CRF is the segment model with the maximum segment length
//! forced to 1; everything else flows through the usual training and
//! inference paths. The MaxEnt classifier scores whole-word inflectional
//! tags from character n-grams (word edges explicitly marked); its `+Split`
//! variant additionally conjoins every feature with each constituent of the
//! tag, sharing weight across tags with common constituents.

use std::collections::HashMap;

use crate::corpus::Dataset;
use crate::errors::{Error, Result};
use crate::features::FeatureVocabulary;
use crate::optim::{self, OptimParams};
use crate::tags::{LabeledSegmentation, MorphTag, TagsetLevel};
use crate::training::TrainConfig;

/// The training configuration of the character-level CRF baseline: the
/// same model with segments restricted to length 1.
pub fn char_crf_config(base: &TrainConfig) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.max_segment_length = Some(1);
    cfg
}

/// Merges adjacent segments carrying equal labels, reconstructing segments
/// from a character-level labeling.
pub fn merge_adjacent_labels(ls: &LabeledSegmentation) -> LabeledSegmentation {
    let mut merged: Vec<(String, MorphTag)> = Vec::new();
    for (morph, tag) in ls.segments() {
        match merged.last_mut() {
            Some((last_morph, last_tag)) if last_tag == tag => {
                last_morph.push_str(morph);
            }
            _ => merged.push((morph.clone(), tag.clone())),
        }
    }
    LabeledSegmentation::new(merged).expect("merging preserves the word")
}

/// Splits every segment into single characters carrying the segment's
/// label: the training representation for the character-level mode.
/// Adjacent same-label segments become indistinguishable, so
/// `merge_adjacent_labels` recovers the original segmentation only where
/// neighboring labels differ.
pub fn explode_to_characters(ls: &LabeledSegmentation) -> LabeledSegmentation {
    let mut segments = Vec::new();
    for (morph, tag) in ls.segments() {
        for c in morph.chars() {
            segments.push((c.to_string(), tag.clone()));
        }
    }
    LabeledSegmentation::new(segments).expect("word unchanged")
}

/// Rewrites gold labels for the tag classification task: inflectional tags
/// are projected to `level`, everything else collapses to `SEGMENT`.
pub fn inflectional_view(data: &Dataset, level: TagsetLevel) -> Result<Dataset> {
    data.map_analyses(|ls| {
        let segments = ls
            .segments()
            .iter()
            .map(|(m, t)| {
                let tag = if t.is_inflectional() {
                    t.project(level)
                } else {
                    MorphTag::segment()
                };
                (m.clone(), tag)
            })
            .collect();
        LabeledSegmentation::new(segments).expect("word unchanged")
    })
}

/// Serialized full tag of a word: the ordered inflectional bundle joined
/// by `:` (empty for uninflected words).
pub fn full_tag_of(ls: &LabeledSegmentation) -> Result<String> {
    let (bundle, _) = ls.morph_tag_view()?;
    Ok(bundle.join(":"))
}

/// Regularizer of the MaxEnt baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    L1,
    L2,
}

/// MaxEnt classifier settings.
#[derive(Debug, Clone)]
pub struct MaxEntConfig {
    /// Maximal character n-gram length.
    pub max_ngram: usize,
    pub regularizer: Regularizer,
    pub coefficient: f64,
    /// Conjoin features with tag constituents as well as the full tag.
    pub split_mode: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for MaxEntConfig {
    fn default() -> Self {
        MaxEntConfig {
            max_ngram: 3,
            regularizer: Regularizer::L1,
            coefficient: 0.1,
            split_mode: false,
            max_iterations: 300,
            tolerance: 1e-7,
        }
    }
}

impl MaxEntConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_ngram == 0 {
            return Err(Error::Config("max_ngram must be >= 1".into()));
        }
        if self.coefficient < 0.0 {
            return Err(Error::Config(
                "regularization coefficient must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

const BIAS_FEATURE: &str = "BIAS";

/// Character n-grams of length `1..=k` over the edge-marked word, plus the
/// always-on bias feature.
fn ngram_features(word: &str, k: usize) -> Vec<String> {
    let mut marked: Vec<char> = Vec::with_capacity(word.chars().count() + 2);
    marked.push('^');
    marked.extend(word.chars());
    marked.push('$');
    let mut out = Vec::new();
    for len in 1..=k.min(marked.len()) {
        for start in 0..=(marked.len() - len) {
            let gram: String = marked[start..start + len].iter().collect();
            out.push(format!("NG:{gram}"));
        }
    }
    out.push(BIAS_FEATURE.to_owned());
    out
}

/// Class templates: the full tag, plus its constituents in split mode.
fn class_templates(class: &str, split_mode: bool) -> Vec<String> {
    let mut out = vec![format!("T:{class}")];
    if split_mode && !class.is_empty() {
        for part in class.split(':') {
            out.push(format!("C:{part}"));
        }
    }
    out
}

/// A trained multinomial log-linear whole-word tag classifier.
#[derive(Debug, Clone)]
pub struct MaxEntModel {
    config: MaxEntConfig,
    /// Sorted class inventory; prediction ties break toward lower index.
    classes: Vec<String>,
    /// Template ids per class (into the template inventory).
    class_templates: Vec<Vec<u32>>,
    /// Template strings in id order.
    templates: Vec<String>,
    /// N-gram feature vocabulary.
    vocab: FeatureVocabulary,
    /// Row-major `weights[feature * n_templates + template]`.
    weights: Vec<f64>,
}

impl MaxEntModel {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn config(&self) -> &MaxEntConfig {
        &self.config
    }

    pub fn vocab(&self) -> &FeatureVocabulary {
        &self.vocab
    }

    pub fn templates(&self) -> &[String] {
        &self.templates
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Rebuilds a model from its serialized parts.
    pub fn from_parts(
        config: MaxEntConfig,
        classes: Vec<String>,
        vocab: FeatureVocabulary,
        weights: Vec<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let mut templates = Vec::new();
        let mut template_ids = HashMap::new();
        let class_templates = classes
            .iter()
            .map(|c| {
                class_templates(c, config.split_mode)
                    .into_iter()
                    .map(|t| {
                        *template_ids.entry(t.clone()).or_insert_with(|| {
                            templates.push(t);
                            (templates.len() - 1) as u32
                        })
                    })
                    .collect()
            })
            .collect();
        if weights.len() != vocab.len() * templates.len() {
            return Err(Error::ModelFormat(format!(
                "weight matrix is {} long, expected {} x {}",
                weights.len(),
                vocab.len(),
                templates.len()
            )));
        }
        Ok(MaxEntModel {
            config,
            classes,
            class_templates,
            templates,
            vocab,
            weights,
        })
    }

    fn feature_ids(&self, word: &str) -> Vec<u32> {
        ngram_features(word, self.config.max_ngram)
            .iter()
            .filter_map(|f| self.vocab.lookup(f))
            .collect()
    }

    /// Per-class scores for a word.
    pub fn scores(&self, word: &str) -> Vec<f64> {
        let feats = self.feature_ids(word);
        let n_t = self.templates.len();
        // Template activations summed over the word's features.
        let mut u = vec![0.0; n_t];
        for &f in &feats {
            let row = f as usize * n_t;
            for (t, slot) in u.iter_mut().enumerate() {
                *slot += self.weights[row + t];
            }
        }
        self.class_templates
            .iter()
            .map(|ts| ts.iter().map(|&t| u[t as usize]).sum())
            .collect()
    }

    /// Argmax class; deterministic tie-break by class index.
    pub fn predict(&self, word: &str) -> &str {
        let scores = self.scores(word);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        &self.classes[best]
    }
}

/// Trains the MaxEnt classifier on `(word, full tag)` pairs. The class
/// inventory is the set of observed full tags.
pub fn maxent_train(data: &[(String, String)], config: &MaxEntConfig) -> Result<MaxEntModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Config("empty MaxEnt training set".into()));
    }

    let mut classes: Vec<String> = data.iter().map(|(_, t)| t.clone()).collect();
    classes.sort_unstable();
    classes.dedup();
    let class_index: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    let mut vocab = FeatureVocabulary::new();
    let examples: Vec<(Vec<u32>, usize)> = data
        .iter()
        .map(|(word, tag)| {
            let feats = ngram_features(word, config.max_ngram)
                .iter()
                .filter_map(|f| vocab.resolve(f))
                .collect();
            (feats, class_index[tag.as_str()])
        })
        .collect();
    vocab.freeze();

    let mut templates: Vec<String> = Vec::new();
    let mut template_ids: HashMap<String, u32> = HashMap::new();
    let class_template_ids: Vec<Vec<u32>> = classes
        .iter()
        .map(|c| {
            class_templates(c, config.split_mode)
                .into_iter()
                .map(|t| {
                    *template_ids.entry(t.clone()).or_insert_with(|| {
                        templates.push(t);
                        (templates.len() - 1) as u32
                    })
                })
                .collect()
        })
        .collect();

    let n_f = vocab.len();
    let n_t = templates.len();
    let n_c = classes.len();

    let objective = |w: &[f64], grad: &mut [f64]| -> Result<f64> {
        grad.fill(0.0);
        let mut value = 0.0;
        let mut u = vec![0.0; n_t];
        let mut scores = vec![0.0; n_c];
        let mut d = vec![0.0; n_t];
        for (feats, gold) in &examples {
            u.fill(0.0);
            for &f in feats {
                let row = f as usize * n_t;
                for (t, slot) in u.iter_mut().enumerate() {
                    *slot += w[row + t];
                }
            }
            for (c, slot) in scores.iter_mut().enumerate() {
                *slot = class_template_ids[c].iter().map(|&t| u[t as usize]).sum();
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
            value += log_z - scores[*gold];

            d.fill(0.0);
            for c in 0..n_c {
                let p = (scores[c] - log_z).exp();
                for &t in &class_template_ids[c] {
                    d[t as usize] += p;
                }
            }
            for &t in &class_template_ids[*gold] {
                d[t as usize] -= 1.0;
            }
            for &f in feats {
                let row = f as usize * n_t;
                for (t, &dt) in d.iter().enumerate() {
                    grad[row + t] += dt;
                }
            }
        }
        if config.regularizer == Regularizer::L2 && config.coefficient > 0.0 {
            let c = config.coefficient;
            value += 0.5 * c * w.iter().map(|x| x * x).sum::<f64>();
            for (g, x) in grad.iter_mut().zip(w) {
                *g += c * x;
            }
        }
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective {
                word: "<maxent>".into(),
                n_features: n_f,
            });
        }
        Ok(value)
    };

    let params = OptimParams {
        history: 10,
        max_iterations: config.max_iterations,
        tolerance: config.tolerance,
        l1: match config.regularizer {
            Regularizer::L1 => Some(config.coefficient),
            Regularizer::L2 => None,
        },
    };
    let (weights, _) = optim::minimize(objective, vec![0.0; n_f * n_t], &params)?;

    Ok(MaxEntModel {
        config: config.clone(),
        classes,
        class_templates: class_template_ids,
        templates,
        vocab,
        weights,
    })
}

/// Extracts `(word, full tag)` training pairs from a labeled dataset,
/// using the first gold analysis of each word.
pub fn full_tag_pairs(data: &Dataset) -> Result<Vec<(String, String)>> {
    data.entries()
        .iter()
        .map(|e| {
            let gold = e.analyses.first().ok_or_else(|| Error::Segmentation {
                word: e.word.clone(),
                reason: "word with no tag".into(),
            })?;
            Ok((e.word.clone(), full_tag_of(gold)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DatasetRole;
    use crate::features::Resources;
    use crate::training::fit;

    #[test]
    fn char_crf_produces_unit_segments() {
        let base = TrainConfig {
            level: TagsetLevel::new(1).unwrap(),
            l2_coefficient: 1e-2,
            max_iterations: 100,
            ..TrainConfig::default()
        };
        let cfg = char_crf_config(&base);
        assert_eq!(cfg.max_segment_length, Some(1));
        let train = Dataset::parse_str(
            "takler\ttak:ROOT ler:SUFFIX\npoller\tpol:ROOT ler:SUFFIX",
            DatasetRole::Train,
        )
        .unwrap()
        .map_analyses(explode_to_characters)
        .unwrap();
        let res = Resources::empty();
        let outcome = fit(&train, &cfg, &res).unwrap();
        let (pred, _) = outcome.model.viterbi("takler", &res).unwrap();
        assert!(pred.segments().iter().all(|(m, _)| m.chars().count() == 1));
        assert_eq!(merge_adjacent_labels(&pred).ums_view(), vec!["tak", "ler"]);
    }

    #[test]
    fn merge_reconstructs_segments() {
        let ls = LabeledSegmentation::new(vec![
            ("tak".into(), MorphTag::parse("ROOT").unwrap()),
            ("ler".into(), MorphTag::parse("SUFFIX").unwrap()),
        ])
        .unwrap();
        let exploded = explode_to_characters(&ls);
        assert_eq!(exploded.len(), 6);
        assert!(exploded.segments().iter().all(|(m, _)| m.len() == 1));
        assert_eq!(merge_adjacent_labels(&exploded), ls);
    }

    #[test]
    fn inflectional_view_collapses_non_inflectional() {
        let data = Dataset::parse_str(
            "gençleşmelerin\tgenç:ROOT:ADJ leş:SUFFIX:DERIV:VERB me:SUFFIX:DERIV:NOUN \
             ler:SUFFIX:INFL:NOUN:NUMBER:PLURAL in:SUFFIX:INFL:NOUN:CASE:GENITIVE",
            DatasetRole::Train,
        )
        .unwrap();
        let view = inflectional_view(&data, TagsetLevel::new(5).unwrap()).unwrap();
        let ls = &view.entries()[0].analyses[0];
        let tags: Vec<String> = ls.segments().iter().map(|(_, t)| t.to_string()).collect();
        assert_eq!(
            tags,
            vec![
                "SEGMENT",
                "SEGMENT",
                "SEGMENT",
                "SUFFIX:INFL:NOUN:NUMBER:PLURAL",
                "SUFFIX:INFL:NOUN:CASE:GENITIVE"
            ]
        );
        assert_eq!(full_tag_of(ls).unwrap(), "PLURAL:GENITIVE");
    }

    fn toy_tag_data() -> Vec<(String, String)> {
        vec![
            ("takler".into(), "PLURAL".into()),
            ("poller".into(), "PLURAL".into()),
            ("takin".into(), "GENITIVE".into()),
            ("polin".into(), "GENITIVE".into()),
            ("tak".into(), String::new()),
            ("pol".into(), String::new()),
        ]
    }

    #[test]
    fn maxent_separable_training_accuracy() {
        let data = toy_tag_data();
        for reg in [Regularizer::L1, Regularizer::L2] {
            let cfg = MaxEntConfig {
                regularizer: reg,
                coefficient: 1e-3,
                max_iterations: 500,
                ..MaxEntConfig::default()
            };
            let model = maxent_train(&data, &cfg).unwrap();
            for (word, tag) in &data {
                assert_eq!(model.predict(word), tag, "{word} under {reg:?}");
            }
        }
    }

    #[test]
    fn maxent_class_inventory_is_observed_tags() {
        let model = maxent_train(&toy_tag_data(), &MaxEntConfig::default()).unwrap();
        assert_eq!(model.classes(), &["", "GENITIVE", "PLURAL"]);
    }

    #[test]
    fn unseen_ngrams_fall_back_to_prior_heaviest_class() {
        // Three PLURAL examples against one other class.
        let data = vec![
            ("aaa".into(), "PLURAL".into()),
            ("aab".into(), "PLURAL".into()),
            ("aba".into(), "PLURAL".into()),
            ("bbb".into(), "GENITIVE".into()),
        ];
        let cfg = MaxEntConfig {
            regularizer: Regularizer::L2,
            coefficient: 1e-2,
            ..MaxEntConfig::default()
        };
        let model = maxent_train(&data, &cfg).unwrap();
        // Unseen characters leave only the bias feature active.
        assert_eq!(model.predict("zzz"), "PLURAL");
    }

    #[test]
    fn split_mode_adds_constituent_templates() {
        let data = vec![
            ("takleri".into(), "PLURAL:GENITIVE".into()),
            ("takler".into(), "PLURAL".into()),
            ("taki".into(), "GENITIVE".into()),
        ];
        let plain = maxent_train(
            &data,
            &MaxEntConfig {
                split_mode: false,
                ..MaxEntConfig::default()
            },
        )
        .unwrap();
        let split = maxent_train(
            &data,
            &MaxEntConfig {
                split_mode: true,
                ..MaxEntConfig::default()
            },
        )
        .unwrap();
        assert!(split.templates().len() > plain.templates().len());
        assert!(split.weights().len() > plain.weights().len());
    }

    #[test]
    fn maxent_objective_agrees_across_starts() {
        // Convexity check through the public pieces: train twice with
        // different data orders and compare per-word predictions.
        let mut data = toy_tag_data();
        let cfg = MaxEntConfig {
            regularizer: Regularizer::L2,
            coefficient: 1e-2,
            tolerance: 1e-10,
            max_iterations: 1000,
            ..MaxEntConfig::default()
        };
        let a = maxent_train(&data, &cfg).unwrap();
        data.reverse();
        let b = maxent_train(&data, &cfg).unwrap();
        for (word, _) in &data {
            assert_eq!(a.predict(word), b.predict(word));
        }
    }
}
